#include <cmath>
#include <vector>

#include "doctest.h"
#include "nhlnn/dynamics.hpp"
#include "test_support.hpp"

using namespace nhlnn;

namespace {

State make_state(std::vector<double> q, std::vector<double> qd) { return State{std::move(q), std::move(qd)}; }

struct Oscillator {
  template <class S>
  S operator()(std::span<const S> x) const {
    return 0.5 * x[1] * x[1] - 0.5 * x[0] * x[0];
  }
};

auto analytic(const System& sys, bool generic = false, double jitter = 0.0) {
  return dyn::make_context(AnalyticLagrangian{sys},
                           generic ? dyn::generic_constraints_of(sys) : dyn::linear_constraints_of(sys), jitter);
}

struct Twice {
  template <class S>
  Mat<S> operator()(std::span<const S> q) const {
    Mat<S> w(2, 2);
    w(0, 0) = S(1.0) + q[0] * 0.0;
    w(1, 0) = S(2.0);
    return w;
  }
};
struct Free2 {
  template <class S>
  S operator()(std::span<const S> x) const {
    return 0.5 * (x[2] * x[2] + x[3] * x[3]);
  }
};

}  // namespace

TEST_CASE("mass matrix") {
  const auto p = analytic(System::make("particle"));
  CHECK(dyn::mass_matrix(p, make_state({0.1, 0.2, 0.3}, {1, 2, 3})).entries() ==
        Mat<double>::identity(3).entries());
  const auto w = analytic(System::make("wheel"));
  const auto mw = dyn::mass_matrix(w, make_state({0, 0, 0, 0}, {0, 0, 0, 0}));
  CHECK(mw(0, 0) == 1.0);
  CHECK(mw(1, 1) == 1.0);
  CHECK(mw(2, 2) == 0.5);
  CHECK(mw(3, 3) == 0.25);
  CHECK(mw(2, 3) == 0.0);
  const auto pj = analytic(System::make("particle"), false, 1e-6);
  CHECK(dyn::mass_matrix(pj, make_state({0, 0, 0}, {0, 0, 0}))(1, 1) == 1.000001);
}

TEST_CASE("force and unconstrained accelerations") {
  const State s = make_state({0.3, -0.2, 0.1}, {0.5, 0.4, -0.3});
  for (const char* name : {"particle", "drone"}) {
    for (double f : dyn::force(analytic(System::make(name)), s)) CHECK(f == 0.0);
  }
  const auto osc = dyn::make_context(Oscillator{});
  CHECK(dyn::force(osc, make_state({2.0}, {0.7}))[0] == -2.0);
  CHECK(dyn::unconstrained_accel(osc, make_state({2.0}, {0.7}))[0] == -2.0);

  for (double a : dyn::unconstrained_accel(analytic(System::make("particle")), s)) CHECK(a == 0.0);
  const State sw = make_state({0.3, -0.2, 0.1, 1.2}, {0.5, 0.4, -0.3, 0.9});
  for (double a : dyn::unconstrained_accel(analytic(System::make("wheel")), sw)) CHECK(a == 0.0);
}

TEST_CASE("constraint mass examples") {
  CHECK(dyn::constraint_mass(analytic(System::make("particle")), make_state({0, 1, 0}, {0, 0, 0}))(0, 0) == 2.0);
  CHECK(dyn::constraint_mass(analytic(System::make("drone")), make_state({0, 1, 0}, {0, 0, 0}))(0, 0) == 1.0);
  const auto mw = dyn::constraint_mass(analytic(System::make("wheel")), make_state({0, 0, 0, 0}, {0, 0, 0, 0}));
  CHECK(mw.entries() == std::vector<double>{3.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS(dyn::constraint_mass(dyn::make_context(Oscillator{}), make_state({0}, {0})), ArgumentError);
}

TEST_CASE("multiplier examples") {
  CHECK(dyn::multipliers(analytic(System::make("drone")), make_state({0, 1, 0}, {1, 1, 0}))[0] == -1.0);
  CHECK(dyn::multipliers(analytic(System::make("particle")), make_state({0, 1, 0}, {1, 1, 1}))[0] == 0.5);
  for (const char* name : {"particle", "drone", "wheel"}) {
    const System sys = System::make(name);
    const State s = make_state(std::vector<double>(sys.dof(), 0.4), std::vector<double>(sys.dof(), 0.0));
    for (double l : dyn::multipliers(analytic(sys), s)) CHECK(l == 0.0);
  }
}

TEST_CASE("nh_accel examples") {
  const auto ap = dyn::nh_accel(analytic(System::make("particle")), make_state({0, 1, 0}, {1, 1, 1}));
  CHECK(ap[0] == -0.5);
  CHECK(ap[1] == 0.0);
  CHECK(ap[2] == 0.5);
  const auto ad_ = dyn::nh_accel(analytic(System::make("drone")), make_state({0, 1, 0}, {1, 1, 0}));
  CHECK(ad_[1] == 0.0);
  CHECK(ad_[2] == -1.0);
  const auto aw = dyn::nh_accel(analytic(System::make("wheel")), make_state({0, 0, 0, 0}, {2, 0, 2, 3}));
  CHECK(std::abs(aw[0]) <= 1e-15);
  CHECK(aw[1] == 6.0);
}

TEST_CASE("dependent constraints are reported") {
  const auto ctx = dyn::make_context(Free2{}, std::make_shared<dyn::LinearConstraints<Twice>>(Twice{}, 2, 2));
  CHECK_THROWS_AS(dyn::nh_accel(ctx, make_state({0, 0}, {0, 0})), SingularMatrixError);
}

TEST_CASE("property: nh_accel reproduces the closed forms and keeps constraints") {
  for (const char* name : {"particle", "drone", "wheel"}) {
    const System sys = System::make(name);
    const auto linear = analytic(sys);
    const auto generic = analytic(sys, true);
    Rng rng(derive_seed(17, sys.dof() + sys.rank()));
    for (int i = 0; i < 1000; ++i) {
      const State s = sys.sample_initial_state(rng);
      const auto truth = sys.true_accel(s);
      const auto jet = dyn::lagrangian_jet(AnalyticLagrangian{sys}, s);
      const auto terms = linear.constraints->terms(s);
      const auto sol = dyn::solve(jet, &terms, 0.0);
      const auto gen = dyn::nh_accel(generic, s);
      for (std::size_t k = 0; k < sys.dof(); ++k) {
        CHECK(std::abs(sol.accel[k] - truth[k]) <= 1e-9);
        CHECK(std::abs(sol.accel[k] - gen[k]) <= 1e-10);
      }
      // W a + b = 0
      for (std::size_t a = 0; a < sys.rank(); ++a) {
        double rate = terms.drift[a];
        for (std::size_t k = 0; k < sys.dof(); ++k) rate += terms.grad_v(a, k) * sol.accel[k];
        CHECK(std::abs(rate) <= 1e-9);
      }
      // H a - f - W^T lambda = 0
      const auto f = dyn::force(jet);
      for (std::size_t k = 0; k < sys.dof(); ++k) {
        double res = -f[k];
        for (std::size_t j = 0; j < sys.dof(); ++j) res += jet.hess_vv(k, j) * sol.accel[j];
        for (std::size_t a = 0; a < sys.rank(); ++a) res -= sol.multipliers[a] * terms.grad_v(a, k);
        CHECK(std::abs(res) <= 1e-9);
      }
    }
  }
}

TEST_CASE("property: removing constraints recovers the unconstrained accelerations exactly") {
  Rng rng(123);
  for (int c = 0; c < 50; ++c) {
    const auto net = nhlnn::testing::TinyMlp::random(6, 8, 900 + c);
    const auto x = nhlnn::testing::random_vector(rng, 6);
    const State s = State::unpack(x);
    const auto ctx = dyn::make_context(net, nullptr, 1e-6);
    const auto a = dyn::nh_accel(ctx, s);
    const auto b = dyn::unconstrained_accel(ctx, s);
    CHECK(a == b);
    const auto jet = dyn::lagrangian_jet(net, s);
    const dyn::ConstraintTerms empty{Mat<double>(0, 3), {}};
    CHECK(dyn::solve(jet, &empty, 1e-6).accel == b);
  }
}

TEST_CASE("property: jet blocks match finite differences of a random Lagrangian") {
  Rng rng(321);
  for (int c = 0; c < 30; ++c) {
    const std::size_t n = 2 + c % 3;
    const auto net = nhlnn::testing::TinyMlp::random(2 * n, 8, 400 + c);
    const auto x = nhlnn::testing::random_vector(rng, 2 * n);
    const State s = State::unpack(x);
    const auto jet = dyn::lagrangian_jet(net, s);
    const nhlnn::testing::ScalarField f = [&net](std::span<const double> v) { return net(v); };
    const auto g = nhlnn::testing::fd_grad(f, x, 1e-5);
    const auto h = nhlnn::testing::fd_hessian(f, x, 1e-4);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(nhlnn::testing::close(jet.grad_q[i], g[i], 1e-6, 1e-8));
      double mixed = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(nhlnn::testing::close(jet.hess_vv(i, j), h(n + i, n + j), 1e-5, 1e-7));
        mixed += h(n + i, j) * s.qd[j];
      }
      CHECK(nhlnn::testing::close(jet.mixed_qd[i], mixed, 1e-5, 1e-7));
    }
  }
}
