#include "nhlnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>

#include "nhlnn/diffkernel.hpp"
#include "nhlnn/lagnet_kernel.hpp"
#include "nhlnn/rng.hpp"

namespace nhlnn::train {
namespace {

using lagnet::JetKernel;
using lagnet::Network;
using D = ad::Dual<double>;

D seeded(double value, std::size_t k, std::size_t count) {
  std::vector<double> t(count, 0.0);
  t[k] = 1.0;
  return D(value, std::move(t));
}

struct ChunkOutcome {
  double loss_sum = 0.0;  // unscaled sum of squared errors
  bool finite = true;
};

/// Squared error of one sample; with adjoint != nullptr also its derivatives
/// with respect to the jet features, times scale.
bool sample_loss(std::span<const double> features, std::size_t n, const dyn::ConstraintTerms* terms,
                 const std::vector<double>& truth, double jitter, double scale, double& loss, double* adjoint) {
  try {
    if (!adjoint) {
      const auto jet = lagnet::jet_from_features(features, n);
      const auto sol = dyn::solve(jet, terms, jitter);
      loss = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = sol.accel[k] - truth[k];
        loss += e * e;
      }
      return std::isfinite(loss);
    }
    const std::size_t nf = features.size();
    dyn::LagrangianJet<D> jet{std::vector<D>(n), Mat<D>(n, n), std::vector<D>(n)};
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i, ++k) jet.grad_q[i] = seeded(features[k], k, nf);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j, ++k) {
        jet.hess_vv(i, j) = seeded(features[k], k, nf);
        jet.hess_vv(j, i) = jet.hess_vv(i, j);
      }
    }
    for (std::size_t i = 0; i < n; ++i, ++k) jet.mixed_qd[i] = seeded(features[k], k, nf);
    const auto sol = dyn::solve(jet, terms, jitter);
    D total(0.0);
    for (std::size_t c = 0; c < n; ++c) {
      const D e = sol.accel[c] - truth[c];
      total += e * e;
    }
    loss = total.value();
    bool finite = std::isfinite(loss);
    for (std::size_t f = 0; f < nf; ++f) {
      adjoint[f] = scale * total.d(f);
      finite = finite && std::isfinite(adjoint[f]);
    }
    return finite;
  } catch (const Error&) {
    loss = std::nan("");
    return false;
  }
}

ChunkOutcome run_chunk(JetKernel& kernel, const Network<double>& net, const Samples& samples,
                       std::span<const std::size_t> idx, double jitter, double scale, std::vector<double>* grad,
                       std::vector<State>& states_buf, std::vector<double>& adj_buf) {
  states_buf.clear();
  for (std::size_t i : idx) states_buf.push_back(samples.states[i]);
  kernel.forward(net, states_buf);
  const std::size_t n = samples.dof;
  const std::size_t nf = lagnet::feature_count(n);
  ChunkOutcome out;
  if (grad) adj_buf.assign(idx.size() * nf, 0.0);
  for (std::size_t s = 0; s < idx.size(); ++s) {
    double loss = 0.0;
    const bool ok = sample_loss(kernel.features(s), n, samples.terms_at(idx[s]), samples.accels[idx[s]], jitter, scale,
                                loss, grad ? adj_buf.data() + s * nf : nullptr);
    out.finite = out.finite && ok;
    out.loss_sum += loss;
  }
  if (grad && out.finite) {
    grad->assign(lagnet::parameter_count(net), 0.0);
    kernel.backward(net, adj_buf, *grad);
  }
  return out;
}

/// Shared driver of loss_batch and loss_and_gradient.
double evaluate(const Network<double>& net, const Samples& samples, std::span<const std::size_t> indices,
                double jitter, std::vector<double>* grad, bool parallel) {
  if (indices.empty()) {
    throw ArgumentError("loss of an empty batch");
  }
  const std::size_t n = samples.dof;
  const double scale = 1.0 / (static_cast<double>(indices.size()) * static_cast<double>(n));
  const std::size_t chunk = lagnet::kChunkSize;
  const std::size_t chunks = (indices.size() + chunk - 1) / chunk;
  std::vector<ChunkOutcome> outcomes(chunks);
  std::vector<std::vector<double>> grads(grad ? chunks : 0);
  std::vector<std::exception_ptr> errors(chunks);

  auto body = [&](JetKernel& kernel, std::vector<State>& sb, std::vector<double>& ab, std::size_t c) {
    const std::size_t begin = c * chunk;
    const auto idx = indices.subspan(begin, std::min(chunk, indices.size() - begin));
    try {
      outcomes[c] = run_chunk(kernel, net, samples, idx, jitter, scale, grad ? &grads[c] : nullptr, sb, ab);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
#pragma omp parallel if (parallel)
  {
    JetKernel kernel(n);
    std::vector<State> sb;
    std::vector<double> ab;
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
      body(kernel, sb, ab, static_cast<std::size_t>(c));
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double total = 0.0;
  bool finite = true;
  for (const auto& o : outcomes) {
    total += o.loss_sum;
    finite = finite && o.finite;
  }
  if (!finite) {
    return std::nan("");
  }
  if (grad) {
    grad->assign(lagnet::parameter_count(net), 0.0);
    for (const auto& g : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] += g[i];
    }
  }
  return total * scale;
}

}  // namespace

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "epoch,train_loss,test_loss,lr\n";
  char buf[128];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.test_loss, e.lr);
    out << buf;
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Samples make_samples(std::span<const ode::Trajectory> trajectories, const System& system, Mode mode) {
  Samples s;
  s.dof = system.dof();
  const auto constraints = mode == Mode::lnn_nh ? dyn::linear_constraints_of(system) : nullptr;
  for (const auto& t : trajectories) {
    if (t.accels.size() != t.size()) {
      throw ArgumentError("trajectory has no acceleration labels");
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t.states[k].dof() != s.dof) {
        throw DimensionMismatchError("sample dimension differs from system " + system.name());
      }
      s.states.push_back(t.states[k]);
      s.accels.push_back(t.accels[k]);
      if (constraints) s.terms.push_back(constraints->terms(t.states[k]));
    }
  }
  return s;
}

double mse(std::span<const std::vector<double>> predicted, std::span<const std::vector<double>> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw ArgumentError("mse: prediction and label counts differ or are zero");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != truth[i].size()) {
      throw DimensionMismatchError("mse: prediction and label dimensions differ");
    }
    for (std::size_t k = 0; k < truth[i].size(); ++k) {
      const double e = predicted[i][k] - truth[i][k];
      sum += e * e;
    }
    count += truth[i].size();
  }
  return sum / static_cast<double>(count);
}

double loss_batch(const Network<double>& net, const Samples& samples, std::span<const std::size_t> indices,
                  double jitter, bool parallel) {
  return evaluate(net, samples, indices, jitter, nullptr, parallel);
}

double loss_and_gradient(const Network<double>& net, const Samples& samples, std::span<const std::size_t> indices,
                         double jitter, std::vector<double>& grad, bool parallel) {
  return evaluate(net, samples, indices, jitter, &grad, parallel);
}

double reference_loss_and_gradient(const Network<double>& net, const Samples& samples,
                                   std::span<const std::size_t> indices, double jitter, std::vector<double>& grad) {
  if (indices.empty()) {
    throw ArgumentError("loss of an empty batch");
  }
  const double denom = static_cast<double>(indices.size()) * static_cast<double>(samples.dof);
  auto objective = [&](auto theta) {
    using P = typename decltype(theta)::value_type;
    const Network<P> net_p = lagnet::unflatten<P>(net, theta);
    P total(0.0);
    for (std::size_t i : indices) {
      const auto jet = dyn::lagrangian_jet<P>(lagnet::NetworkField<P>{&net_p}, samples.states[i]);
      const auto sol = dyn::solve(jet, samples.terms_at(i), jitter);
      for (std::size_t k = 0; k < samples.dof; ++k) {
        const P e = sol.accel[k] - samples.accels[i][k];
        total += e * e;
      }
    }
    return total / denom;
  };
  const std::vector<double> theta = lagnet::flatten(net);
  grad = ad::grad_nested(objective, theta);
  return objective(std::span<const double>(theta));
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& d, std::optional<Network<double>> initial,
                  const EpochCallback& on_epoch) {
  const System& system = d.system;
  const std::size_t n = system.dof();
  if (d.train_count == 0) {
    throw ArgumentError("dataset has no training trajectories");
  }
  const std::size_t len = d.steps();
  if (cfg.batch_size == 0 || len % cfg.batch_size != 0) {
    throw ArgumentError("batch size " + std::to_string(cfg.batch_size) + " must divide the trajectory length " +
                        std::to_string(len));
  }
  if (!(cfg.lr0 > 0.0) || !(cfg.lr_final > 0.0)) {
    throw ArgumentError("learning rates must be positive");
  }
  if (!(cfg.clip_norm >= 0.0)) {
    throw ArgumentError("gradient clip norm must be non-negative");
  }

  TrainResult result;
  result.params.net = initial ? std::move(*initial) : lagnet::init_network(2 * n, cfg.seed, cfg.hidden);
  lagnet::validate(result.params.net);
  if (result.params.input_dim() != 2 * n) {
    throw DimensionMismatchError("initial network input width differs from 2 x dof");
  }
  result.params.system = system.name();
  result.params.mode = cfg.mode;
  result.params.seed = cfg.seed;

  const Samples train_set = make_samples(d.train(), system, cfg.mode);
  const Samples test_set = make_samples(d.test(), system, cfg.mode);
  std::vector<std::size_t> test_idx(test_set.size());
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});

  std::vector<double> theta = lagnet::flatten(result.params.net);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0), grad;
  std::size_t adam_t = 0;
  double lr_scale = 1.0;
  std::size_t consecutive_skips = 0;

  Rng rng(derive_seed(cfg.seed, 0x7261696EULL));
  std::vector<std::size_t> order(d.train_count);
  std::vector<std::size_t> batch(cfg.batch_size);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1) : 0.0;
    const double scheduled = cfg.lr0 * std::pow(cfg.lr_final / cfg.lr0, progress);
    const double epoch_lr = scheduled * lr_scale;

    // Fisher-Yates on the trajectory order.
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.engine()() % i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t t : order) {
      for (std::size_t b0 = 0; b0 < len; b0 += cfg.batch_size) {
        std::iota(batch.begin(), batch.end(), t * len + b0);
        const double loss = loss_and_gradient(result.params.net, train_set, batch, cfg.jitter, grad, cfg.parallel);
        if (!std::isfinite(loss)) {
          ++result.history.skipped_steps;
          lr_scale *= 0.5;
          if (++consecutive_skips >= kMaxConsecutiveSkips) {
            throw DivergenceError("training diverged: " + std::to_string(consecutive_skips) +
                                  " consecutive non-finite losses in epoch " + std::to_string(epoch));
          }
          continue;
        }
        consecutive_skips = 0;
        loss_sum += loss;
        ++loss_count;
        if (cfg.clip_norm > 0.0) {
          double sq = 0.0;
          for (double g : grad) sq += g * g;
          const double norm = std::sqrt(sq);
          if (norm > cfg.clip_norm) {
            for (double& g : grad) g *= cfg.clip_norm / norm;
          }
        }

        const double lr = scheduled * lr_scale;
        ++adam_t;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
          theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
        }
        result.params.net = lagnet::unflatten<double>(result.params.net, theta);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = epoch_lr;
    rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : std::nan("");
    rec.test_loss =
        test_idx.empty() ? std::nan("") : loss_batch(result.params.net, test_set, test_idx, cfg.jitter, cfg.parallel);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace nhlnn::train
