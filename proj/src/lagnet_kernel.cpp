#include "nhlnn/lagnet_kernel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <exception>
#include <utility>

namespace nhlnn::lagnet {
namespace {

using Matrix = Eigen::MatrixXd;
using Array = Eigen::ArrayXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix>;
using GradWeights = Eigen::Map<RowMatrix>;

ConstWeights weights(const Layer<double>& layer) {
  return ConstWeights(layer.weight.entries().data(), static_cast<Eigen::Index>(layer.weight.rows()),
                      static_cast<Eigen::Index>(layer.weight.cols()));
}

struct Pair {
  std::size_t a;
  std::size_t b;
};

}  // namespace

std::size_t feature_count(std::size_t n) { return n + n * (n + 1) / 2 + n; }

dyn::LagrangianJet<double> jet_from_features(std::span<const double> f, std::size_t n) {
  if (f.size() != feature_count(n)) {
    throw DimensionMismatchError("jet feature vector has wrong length");
  }
  dyn::LagrangianJet<double> jet{std::vector<double>(f.begin(), f.begin() + n), Mat<double>(n, n),
                                 std::vector<double>(f.end() - n, f.end())};
  std::size_t k = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j, ++k) {
      jet.hess_vv(i, j) = f[k];
      jet.hess_vv(j, i) = f[k];
    }
  }
  return jet;
}

struct JetKernel::Impl {
  std::size_t n;
  std::size_t dirs;      // 2n axes + v
  std::size_t n_hess;    // n(n+1)/2
  std::size_t channels;  // 1 + dirs + pairs
  std::vector<Pair> pairs;
  std::size_t count = 0;

  Matrix x;                  // input jets, 2n x count*channels
  std::vector<Matrix> z, h;  // per hidden layer
  Eigen::RowVectorXd out;    // output jets (without the output bias)
  std::vector<double> features;
  std::vector<double> values;

  // Scratch for the reverse sweep.
  Matrix a_h, a_z;
  Eigen::RowVectorXd a_out;
  Array s1, s2, s3, acc;

  explicit Impl(std::size_t dof) : n(dof), dirs(2 * dof + 1), n_hess(dof * (dof + 1) / 2) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) pairs.push_back({n + i, n + j});
    }
    for (std::size_t i = 0; i < n; ++i) pairs.push_back({n + i, 2 * n});
    channels = 1 + dirs + pairs.size();
  }

  std::size_t dir_col(std::size_t s, std::size_t d) const { return s * channels + 1 + d; }
  std::size_t pair_col(std::size_t s, std::size_t p) const { return s * channels + 1 + dirs + p; }

  void load_inputs(std::span<const State> states) {
    count = states.size();
    const std::size_t m = 2 * n;
    x.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(count * channels));
    for (std::size_t s = 0; s < count; ++s) {
      const State& st = states[s];
      if (st.q.size() != n || st.qd.size() != n) {
        throw DimensionMismatchError("jet kernel: state dimension differs from kernel dof");
      }
      const auto base = static_cast<Eigen::Index>(s * channels);
      for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i), base) = st.q[i];
        x(static_cast<Eigen::Index>(n + i), base) = st.qd[i];
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(dir_col(s, 2 * n))) = st.qd[i];
      }
      for (std::size_t d = 0; d < m; ++d) {
        x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dir_col(s, d))) = 1.0;
      }
    }
  }

  void activation_coefficients(const Matrix& zl, Eigen::Index base) {
    const auto z0 = zl.col(base).array();
    s1 = z0.unaryExpr([](double v) { return ad::sigmoid(v); });
    s2 = s1 * (1.0 - s1);
    s3 = s2 * (1.0 - 2.0 * s1);
  }

  void activate(const Matrix& zl, Matrix& hl) {
    hl.resize(zl.rows(), zl.cols());
    for (std::size_t s = 0; s < count; ++s) {
      const auto base = static_cast<Eigen::Index>(s * channels);
      activation_coefficients(zl, base);
      hl.col(base) = zl.col(base).unaryExpr([](double v) { return ad::softplus(v); });
      for (std::size_t d = 0; d < dirs; ++d) {
        const auto c = static_cast<Eigen::Index>(dir_col(s, d));
        hl.col(c).array() = s1 * zl.col(c).array();
      }
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto c = static_cast<Eigen::Index>(pair_col(s, p));
        const auto ca = static_cast<Eigen::Index>(dir_col(s, pairs[p].a));
        const auto cb = static_cast<Eigen::Index>(dir_col(s, pairs[p].b));
        hl.col(c).array() = s2 * zl.col(ca).array() * zl.col(cb).array() + s1 * zl.col(c).array();
      }
    }
  }

  // a_z = d objective / d z given a_h = d objective / d h, for one hidden layer.
  void activate_backward(const Matrix& zl) {
    a_z.resize(zl.rows(), zl.cols());
    for (std::size_t s = 0; s < count; ++s) {
      const auto base = static_cast<Eigen::Index>(s * channels);
      activation_coefficients(zl, base);
      acc = s1 * a_h.col(base).array();
      for (std::size_t d = 0; d < dirs; ++d) {
        const auto c = static_cast<Eigen::Index>(dir_col(s, d));
        acc += s2 * zl.col(c).array() * a_h.col(c).array();
        a_z.col(c).array() = s1 * a_h.col(c).array();
      }
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto c = static_cast<Eigen::Index>(pair_col(s, p));
        const auto ca = static_cast<Eigen::Index>(dir_col(s, pairs[p].a));
        const auto cb = static_cast<Eigen::Index>(dir_col(s, pairs[p].b));
        const auto ahp = a_h.col(c).array();
        acc += ahp * (s3 * zl.col(ca).array() * zl.col(cb).array() + s2 * zl.col(c).array());
        a_z.col(c).array() = s1 * ahp;
        a_z.col(ca).array() += s2 * ahp * zl.col(cb).array();
        a_z.col(cb).array() += s2 * ahp * zl.col(ca).array();
      }
      a_z.col(base) = acc.matrix();
    }
  }
};

JetKernel::JetKernel(std::size_t dof) : impl_(std::make_unique<Impl>(dof)) {}
JetKernel::~JetKernel() = default;
JetKernel::JetKernel(JetKernel&&) noexcept = default;
JetKernel& JetKernel::operator=(JetKernel&&) noexcept = default;

std::size_t JetKernel::dof() const { return impl_->n; }
std::size_t JetKernel::size() const { return impl_->count; }

void JetKernel::forward(const Network<double>& net, std::span<const State> states) {
  Impl& k = *impl_;
  if (net.size() < 2 || net.front().weight.cols() != 2 * k.n || net.back().weight.rows() != 1) {
    throw DimensionMismatchError("jet kernel: network layout does not match a " + std::to_string(2 * k.n) +
                                 "-input scalar field");
  }
  k.load_inputs(states);
  const std::size_t hidden = net.size() - 1;
  k.z.resize(hidden);
  k.h.resize(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    const Matrix& input = l == 0 ? k.x : k.h[l - 1];
    k.z[l].noalias() = weights(net[l]) * input;
    const Eigen::Map<const Eigen::VectorXd> bias(net[l].bias.data(), static_cast<Eigen::Index>(net[l].bias.size()));
    for (std::size_t s = 0; s < k.count; ++s) {
      k.z[l].col(static_cast<Eigen::Index>(s * k.channels)) += bias;
    }
    k.activate(k.z[l], k.h[l]);
  }
  k.out.noalias() = weights(net.back()) * k.h.back();

  const std::size_t nf = feature_count(k.n);
  k.features.assign(k.count * nf, 0.0);
  k.values.assign(k.count, 0.0);
  for (std::size_t s = 0; s < k.count; ++s) {
    double* f = k.features.data() + s * nf;
    k.values[s] = k.out(static_cast<Eigen::Index>(s * k.channels)) + net.back().bias[0];
    for (std::size_t i = 0; i < k.n; ++i) f[i] = k.out(static_cast<Eigen::Index>(k.dir_col(s, i)));
    for (std::size_t p = 0; p < k.pairs.size(); ++p) {
      f[k.n + p] = k.out(static_cast<Eigen::Index>(k.pair_col(s, p)));
    }
  }
}

std::span<const double> JetKernel::features(std::size_t s) const {
  const std::size_t nf = feature_count(impl_->n);
  return std::span<const double>(impl_->features).subspan(s * nf, nf);
}

double JetKernel::value(std::size_t s) const { return impl_->values.at(s); }

void JetKernel::backward(const Network<double>& net, std::span<const double> adjoint, std::span<double> grad) {
  Impl& k = *impl_;
  const std::size_t nf = feature_count(k.n);
  if (adjoint.size() != k.count * nf) {
    throw DimensionMismatchError("jet kernel: adjoint length does not match the last forward");
  }
  if (grad.size() != parameter_count(net)) {
    throw DimensionMismatchError("jet kernel: gradient length does not match the network");
  }
  if (k.z.size() + 1 != net.size()) {
    throw ArgumentError("jet kernel: backward called without a matching forward");
  }

  std::vector<std::size_t> offset(net.size());
  for (std::size_t l = 0, off = 0; l < net.size(); ++l) {
    offset[l] = off;
    off += net[l].weight.entries().size() + net[l].bias.size();
  }

  k.a_out.setZero(static_cast<Eigen::Index>(k.count * k.channels));
  for (std::size_t s = 0; s < k.count; ++s) {
    const double* a = adjoint.data() + s * nf;
    for (std::size_t i = 0; i < k.n; ++i) k.a_out(static_cast<Eigen::Index>(k.dir_col(s, i))) = a[i];
    for (std::size_t p = 0; p < k.pairs.size(); ++p) k.a_out(static_cast<Eigen::Index>(k.pair_col(s, p))) = a[k.n + p];
  }

  // Output layer.
  const std::size_t last = net.size() - 1;
  {
    const Layer<double>& layer = net[last];
    GradWeights dw(grad.data() + offset[last], 1, static_cast<Eigen::Index>(layer.weight.cols()));
    dw.noalias() += k.a_out * k.h.back().transpose();
    double db = 0.0;
    for (std::size_t s = 0; s < k.count; ++s) db += k.a_out(static_cast<Eigen::Index>(s * k.channels));
    grad[offset[last] + layer.weight.entries().size()] += db;
    k.a_h.noalias() = weights(layer).transpose() * k.a_out;
  }

  for (std::size_t l = last; l-- > 0;) {
    const Layer<double>& layer = net[l];
    k.activate_backward(k.z[l]);
    const Matrix& input = l == 0 ? k.x : k.h[l - 1];
    GradWeights dw(grad.data() + offset[l], static_cast<Eigen::Index>(layer.weight.rows()),
                   static_cast<Eigen::Index>(layer.weight.cols()));
    dw.noalias() += k.a_z * input.transpose();
    Eigen::Map<Eigen::VectorXd> db(grad.data() + offset[l] + layer.weight.entries().size(),
                                   static_cast<Eigen::Index>(layer.bias.size()));
    for (std::size_t s = 0; s < k.count; ++s) db += k.a_z.col(static_cast<Eigen::Index>(s * k.channels));
    if (l > 0) {
      k.a_h.noalias() = weights(layer).transpose() * k.a_z;
    }
  }
}

std::vector<double> batch_features(const Network<double>& net, std::span<const State> states, bool parallel) {
  if (states.empty()) {
    return {};
  }
  const std::size_t n = states.front().dof();
  const std::size_t nf = feature_count(n);
  std::vector<double> out(states.size() * nf);
  const std::size_t chunks = (states.size() + kChunkSize - 1) / kChunkSize;
  auto run_chunk = [&](JetKernel& kernel, std::size_t c) {
    const std::size_t begin = c * kChunkSize;
    const std::size_t len = std::min(kChunkSize, states.size() - begin);
    kernel.forward(net, states.subspan(begin, len));
    for (std::size_t s = 0; s < len; ++s) {
      const auto f = kernel.features(s);
      std::copy(f.begin(), f.end(), out.begin() + static_cast<std::ptrdiff_t>((begin + s) * nf));
    }
  };
  if (!parallel) {
    JetKernel kernel(n);
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(kernel, c);
    return out;
  }
  std::exception_ptr failure;
#pragma omp parallel
  {
    JetKernel kernel(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
      try {
        run_chunk(kernel, static_cast<std::size_t>(c));
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace nhlnn::lagnet
