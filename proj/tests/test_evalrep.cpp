#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "nhlnn/dataset.hpp"
#include "nhlnn/evalrep.hpp"
#include "test_support.hpp"

using namespace nhlnn;
using namespace nhlnn::eval;

namespace {

ReportOptions quick(std::size_t n_eval, double t_span, std::size_t n_out) {
  ReportOptions o;
  o.n_eval = n_eval;
  o.t_span = t_span;
  o.n_out = n_out;
  o.seed = 3;
  return o;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("energy examples") {
  const AnalyticLagrangian particle{System::make("particle")};
  CHECK(energy(particle, State{{0.2, -0.4, 0.9}, {1, 1, 1}}) == doctest::Approx(1.5).epsilon(1e-14));
  const AnalyticLagrangian wheel{System::make("wheel")};
  CHECK(energy(wheel, State{{0.3, 0.1, 0.5, 0.7}, {0, 0, 2, 2}}) == doctest::Approx(1.5).epsilon(1e-14));

  const auto p = lagnet::init_params(6, 4, {16, 16});
  const lagnet::NetworkLagrangian net(p.net);
  const State rest{{0.5, -0.2, 0.1}, {0, 0, 0}};
  CHECK(energy(net, rest) == doctest::Approx(-lagnet::forward(p, rest)).epsilon(1e-14));
}

TEST_CASE("property: energy of kinetic-only Lagrangians equals the Lagrangian") {
  Rng rng(31);
  for (const char* name : {"particle", "drone", "wheel"}) {
    const auto sys = System::make(name);
    const AnalyticLagrangian l{sys};
    for (int i = 0; i < 200; ++i) {
      const State s{nhlnn::testing::random_vector(rng, sys.dof(), -2, 2),
                    nhlnn::testing::random_vector(rng, sys.dof(), -2, 2)};
      CHECK(std::abs(energy(l, s) - sys.lagrangian(s)) <= 1e-12 * (1 + std::abs(sys.lagrangian(s))));
      CHECK(energy(make_model(l), s) == energy(l, s));
    }
  }
}

TEST_CASE("analytic rollout in the constrained mode reproduces the ground truth") {
  for (const char* name : {"particle", "drone", "wheel"}) {
    const auto sys = System::make(name);
    data::GenerateOptions g;
    g.trajectories = 1;
    g.steps = 200;
    g.t_span = 5.0;
    g.seed = 2;
    const auto truth = data::generate(sys, g).trajectories[0];
    const Rollout r = rollout(AnalyticLagrangian{sys}, Mode::lnn_nh, sys, truth.states[0], 5.0, 200);
    INFO(name);
    REQUIRE(!r.truncated);
    double err = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      for (std::size_t i = 0; i < sys.dof(); ++i) {
        err = std::max(err, std::abs(r.trajectory.states[k].q[i] - truth.states[k].q[i]));
        err = std::max(err, std::abs(r.trajectory.states[k].qd[i] - truth.states[k].qd[i]));
      }
    }
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("rollout examples") {
  const auto sys = System::make("particle");
  const AnalyticLagrangian l{sys};
  // xdot = 0 keeps every velocity constant.
  const State still{{0.1, 0.4, -0.3}, {0.0, 0.8, 0.0}};
  const Rollout r = rollout(l, Mode::lnn_nh, sys, still, 10.0, 50);
  for (const State& s : r.trajectory.states) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.qd[i] - still.qd[i]) <= 1e-9);
  }
  const State s0{{0.1, 0.4, -0.3}, {0.5, 0.8, 0.2}};
  const Rollout tiny = rollout(l, Mode::lnn, sys, s0, 1e-9, 2);
  REQUIRE(tiny.trajectory.size() == 2);
  for (const State& s : tiny.trajectory.states) {
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(s.q[i] - s0.q[i]) <= 1e-9);
      CHECK(std::abs(s.qd[i] - s0.qd[i]) <= 1e-9);
    }
  }
}

TEST_CASE("rollout errors and truncation") {
  const auto wheel = System::make("wheel");
  try {
    rollout(AnalyticLagrangian{wheel}, Mode::lnn_nh, wheel, State{{0, 0, 0, 0}, {1, 0, 0.5, 1}}, 1.0, 10);
    FAIL("expected an argument error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("cos(phi)") != std::string::npos);
  }
  CHECK_THROWS_AS(rollout(AnalyticLagrangian{wheel}, Mode::lnn, wheel, State{{0}, {0}}, 1.0, 10),
                  DimensionMismatchError);

  // A constant Lagrangian has no invertible mass matrix without jitter.
  auto net = lagnet::init_network(6, 1, {8, 8});
  for (auto& layer : net) {
    for (double& w : layer.weight.entries()) w = 0.0;
  }
  const auto particle = System::make("particle");
  const Rollout r =
      rollout(lagnet::NetworkLagrangian(net), Mode::lnn, particle, State{{0, 0, 0}, {1, 0, 0}}, 1.0, 10);
  CHECK(r.truncated);
  CHECK(r.trajectory.size() < 10);
  CHECK(!r.failure.empty());
}

TEST_CASE("report with analytic stand-ins conserves energy and constraints") {
  const auto sys = System::make("drone");
  const Model m = make_model(AnalyticLagrangian{sys});
  auto opt = quick(5, 15.0, 300);
  opt.jitter = 0.0;
  opt.model_tol = 1e-8;
  const EvalReport r = report(m, m, sys, opt);
  REQUIRE(r.trajectories.size() == 5);
  for (const auto& g : r.trajectories) {
    REQUIRE(g.models.size() == 3);
    CHECK(g.models[0].mode == "lnn");
    CHECK(g.models[1].mode == "lnn-nh");
    CHECK(g.models[2].mode == "true");
    for (std::size_t m_i : {1u, 2u}) {
      const auto& s = g.models[m_i];
      CHECK(s.rollout.trajectory.size() == 300);
      CHECK(s.max_abs_constraint <= 1e-6);
      for (double e : s.energy_ratio) CHECK(std::abs(e - 1.0) <= 1e-6);
    }
    CHECK(g.models[0].rollout.trajectory.times == g.models[2].rollout.trajectory.times);
  }
  CHECK(r.summary_for("lnn-nh").mean_abs_constraint <= 1e-6);
  CHECK(r.summary_for("lnn-nh").scatter_mse <= 1e-18);
  // The unconstrained formula drops the constraint force and drifts.
  CHECK(r.summary_for("lnn").mean_abs_constraint > r.summary_for("lnn-nh").mean_abs_constraint);
  CHECK(r.scatter_source == "evaluation trajectories");
  CHECK(r.scatter[0].truth.size() == 1500);
}

TEST_CASE("report files, scatter limit and byte determinism") {
  const auto sys = System::make("particle");
  const auto lnn = lagnet::init_params(6, 10, {8, 8});
  auto nh = lagnet::init_params(6, 10, {8, 8});
  nh.mode = Mode::lnn_nh;
  auto opt = quick(2, 2.0, 40);
  opt.scatter_limit = 30;
  const EvalReport a = report(lnn, nh, sys, opt);
  opt.parallel = false;
  const EvalReport b = report(lnn, nh, sys, opt);
  CHECK(report_json(a) == report_json(b));
  CHECK(report_json(a).find("\"summary\"") != std::string::npos);
  CHECK(a.scatter[1].truth.size() <= 30);

  const auto dir = std::filesystem::temp_directory_path() / "nhlnn_test_report";
  std::filesystem::remove_all(dir);
  write_report(a, dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  for (const char* mode : {"lnn", "lnn-nh", "true"}) {
    for (int i = 0; i < 2; ++i) {
      const auto stem = "traj" + std::to_string(i) + "_" + mode;
      CHECK(std::filesystem::exists(dir / (stem + "_constraint.csv")));
      CHECK(std::filesystem::exists(dir / (stem + "_energy.csv")));
    }
  }
  CHECK(line_count(dir / "traj1_true_energy.csv") == 41);
  CHECK(line_count(dir / "scatter_lnn.csv") == a.scatter[0].truth.size() + 1);
  std::ifstream e(dir / "traj0_lnn_energy.csv");
  std::string header;
  std::getline(e, header);
  CHECK(header == "t,energy_ratio,model_energy_ratio");
  std::filesystem::remove_all(dir);

  auto wrong = lnn;
  wrong.system = "drone";
  CHECK_THROWS_AS(report(wrong, nh, sys, opt), ArgumentError);
  CHECK_THROWS_AS(report(lagnet::init_params(8, 1, {8, 8}), nh, sys, opt), DimensionMismatchError);
}
