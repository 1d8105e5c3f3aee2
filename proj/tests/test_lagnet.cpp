#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "nhlnn/diffkernel.hpp"
#include "nhlnn/lagnet.hpp"
#include "nhlnn/lagnet_kernel.hpp"
#include "test_support.hpp"

using namespace nhlnn;
using namespace nhlnn::lagnet;
using nhlnn::testing::close;

namespace {

std::vector<State> random_states(Rng& rng, std::size_t n, std::size_t count, double scale = 1.0) {
  std::vector<State> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(State{nhlnn::testing::random_vector(rng, n, -scale, scale),
                        nhlnn::testing::random_vector(rng, n, -scale, scale)});
  }
  return out;
}

/// Features by the nested-dual path, independent of the kernel.
template <class P>
std::vector<P> reference_features(const Network<P>& net, const State& s) {
  const auto jet = dyn::lagrangian_jet<P>(NetworkField<P>{&net}, s);
  const std::size_t n = s.dof();
  std::vector<P> f(jet.grad_q);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) f.push_back(jet.hess_vv(i, j));
  f.insert(f.end(), jet.mixed_qd.begin(), jet.mixed_qd.end());
  return f;
}

}  // namespace

TEST_CASE("init_params shapes, determinism and variance") {
  const Params a = init_params(6, 42), b = init_params(6, 42), c = init_params(6, 43);
  CHECK(flatten(a.net) == flatten(b.net));
  CHECK(flatten(a.net) != flatten(c.net));
  REQUIRE(a.net.size() == 3);
  CHECK(a.net[0].weight.rows() == 128);
  CHECK(a.net[0].weight.cols() == 6);
  CHECK(a.net[1].weight.rows() == 128);
  CHECK(a.net[1].weight.cols() == 128);
  CHECK(a.net[2].weight.rows() == 1);
  CHECK(a.net[2].weight.cols() == 128);
  CHECK(a.layout() == std::vector<std::size_t>{6, 128, 128, 1});
  CHECK(parameter_count(a.net) == 6 * 128 + 128 + 128 * 128 + 128 + 128 + 1);

  double sum = 0.0, sq = 0.0;
  for (double w : a.net[0].weight.entries()) {
    sum += w;
    sq += w * w;
  }
  const double count = static_cast<double>(a.net[0].weight.entries().size());
  const double var = sq / count - (sum / count) * (sum / count);
  CHECK(std::abs(var / (2.0 / 134.0) - 1.0) <= 0.2);
  for (double bias : a.net[0].bias) CHECK(bias == 0.0);
  CHECK_THROWS_AS(init_params(1, 0), ArgumentError);
}

TEST_CASE("forward examples") {
  Params zero = init_params(4, 1);
  for (auto& layer : zero.net) {
    for (double& w : layer.weight.entries()) w = 0.0;
  }
  CHECK(forward(zero, State{{0.3, 0.1}, {-0.2, 0.5}}) == 0.0);

  // 2 -> 1 -> 1 -> 1 by hand.
  Network<double> tiny{Layer<double>{Mat<double>(1, 2, {0.5, -1.0}), {0.25}},
                       Layer<double>{Mat<double>(1, 1, {2.0}), {-0.5}}, Layer<double>{Mat<double>(1, 1, {3.0}), {0.1}}};
  const double x0 = 0.4, x1 = 0.3;
  const double h1 = std::log1p(std::exp(0.5 * x0 - 1.0 * x1 + 0.25));
  const double h2 = std::log1p(std::exp(2.0 * h1 - 0.5));
  const std::vector<double> x{x0, x1};
  CHECK(forward<double, double>(tiny, std::span<const double>(x)) == doctest::Approx(3.0 * h2 + 0.1).epsilon(1e-15));

  CHECK_THROWS_AS(forward(init_params(6, 1), State{{0, 0}, {0, 0}}), DimensionMismatchError);
}

TEST_CASE("forward is smooth and finite on wide inputs") {
  const Params p = init_params(6, 9);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto x = nhlnn::testing::random_vector(rng, 6, -10.0, 10.0);
    const Mat<double> h = ad::hessian(NetworkField<double>{&p.net}, x);
    for (double e : h.entries()) CHECK(std::isfinite(e));
  }
  for (int i = 0; i < 20; ++i) {
    const auto s = random_states(rng, 3, 1, 100.0)[0];
    for (double f : batch_features(p.net, std::span<const State>(&s, 1), false)) CHECK(std::isfinite(f));
    CHECK(std::isfinite(forward(p, s)));
  }
}

TEST_CASE("property: input gradients match finite differences") {
  Rng rng(12);
  for (int c = 0; c < 20; ++c) {
    const Params p = init_params(6, 100 + c, {16, 16});
    const auto x = nhlnn::testing::random_vector(rng, 6);
    const auto g = ad::grad(NetworkField<double>{&p.net}, x);
    const auto fd = nhlnn::testing::fd_grad(
        [&p](std::span<const double> v) { return forward<double, double>(p.net, v); }, x, 1e-5);
    for (std::size_t i = 0; i < 6; ++i) CHECK(close(g[i], fd[i], 1e-5, 1e-8));
  }
}

TEST_CASE("json round trip is bit exact") {
  Params p = init_params(8, 77);
  p.system = "wheel";
  p.mode = Mode::lnn_nh;
  for (double& b : p.net[1].bias) b = std::nextafter(0.1, 1.0);
  const Params q = from_json(to_json(p));
  CHECK(flatten(q.net) == flatten(p.net));
  CHECK(q.layout() == p.layout());
  CHECK(q.system == "wheel");
  CHECK(q.mode == Mode::lnn_nh);
  CHECK(q.seed == 77);

  const auto path = std::filesystem::temp_directory_path() / "nhlnn_test_params.json";
  save(p, path);
  CHECK(flatten(load(path).net) == flatten(p.net));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(from_json("{\"layout\": [2, 1]}"), FormatError);
  CHECK_THROWS_AS(from_json("not json"), FormatError);
  CHECK_THROWS_AS(load("/nonexistent/params.json"), IoError);
  CHECK_THROWS_AS(parse_mode("hnn"), ArgumentError);
}

TEST_CASE("kernel jets equal nested-dual jets") {
  Rng rng(5);
  for (std::size_t n : {1u, 3u, 4u}) {
    const Params p = init_params(2 * n, 10 + n, {24, 24});
    const auto states = random_states(rng, n, 7);
    const auto feats = batch_features(p.net, states, false);
    const std::size_t nf = feature_count(n);
    for (std::size_t s = 0; s < states.size(); ++s) {
      const auto ref = reference_features(p.net, states[s]);
      for (std::size_t k = 0; k < nf; ++k) CHECK(std::abs(feats[s * nf + k] - ref[k]) <= 1e-12 * (1 + std::abs(ref[k])));
    }
    JetKernel kernel(n);
    kernel.forward(p.net, states);
    CHECK(kernel.value(2) == doctest::Approx(forward(p, states[2])).epsilon(1e-13));
    // Single-state jet used by the dynamics operations.
    const auto jet = lagrangian_jet(NetworkLagrangian(p.net), states[3]);
    const auto ref = dyn::lagrangian_jet(NetworkField<double>{&p.net}, states[3]);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(jet.grad_q[i] - ref.grad_q[i]) <= 1e-12);
      CHECK(std::abs(jet.mixed_qd[i] - ref.mixed_qd[i]) <= 1e-12);
    }
  }
}

TEST_CASE("parallel batch features equal serial ones") {
  Rng rng(6);
  const Params p = init_params(6, 3, {32, 32});
  const auto states = random_states(rng, 3, 3 * kChunkSize + 7);
  CHECK(batch_features(p.net, states, true) == batch_features(p.net, states, false));
}

TEST_CASE("property: kernel reverse sweep equals the nested-dual gradient") {
  Rng rng(8);
  for (std::size_t n : {2u, 3u, 4u}) {
    const Params p = init_params(2 * n, 50 + n, {8, 8});
    const auto states = random_states(rng, n, 5);
    const std::size_t nf = feature_count(n);
    const auto adj = nhlnn::testing::random_vector(rng, states.size() * nf);

    JetKernel kernel(n);
    kernel.forward(p.net, states);
    std::vector<double> grad(parameter_count(p.net), 0.0);
    kernel.backward(p.net, adj, grad);

    auto objective = [&](auto theta) {
      using P = typename decltype(theta)::value_type;
      const Network<P> net = unflatten<P>(p.net, theta);
      P total(0.0);
      for (std::size_t s = 0; s < states.size(); ++s) {
        const auto f = reference_features(net, states[s]);
        for (std::size_t k = 0; k < nf; ++k) total += adj[s * nf + k] * f[k];
      }
      return total;
    };
    const auto theta = flatten(p.net);
    const auto ref = ad::grad_nested(objective, theta);
    REQUIRE(ref.size() == grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(std::abs(grad[i] - ref[i]) <= 1e-10 * (1 + std::abs(ref[i])));
  }
}
