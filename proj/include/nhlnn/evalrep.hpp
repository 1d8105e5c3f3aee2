#pragma once

// Evaluation of learned Lagrangians: rollouts from fresh initial states,
// constraint and energy series along them, and accelerations scatter data.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nhlnn/diffkernel.hpp"
#include "nhlnn/dynamics.hpp"
#include "nhlnn/lagnet.hpp"
#include "nhlnn/odeint.hpp"

namespace nhlnn::eval {

using lagnet::Mode;

/// Largest |Phi| accepted for an initial state.
inline constexpr double kConstraintTolerance = 1e-9;

/// Legendre transform qd . dL/dqd - L of a scalar field L(q, qd).
template <class L>
double energy(const L& lagrangian, const State& s) {
  const std::size_t n = s.dof();
  std::vector<double> x(s.q);
  x.insert(x.end(), s.qd.begin(), s.qd.end());
  const auto g = ad::grad(lagrangian, x);
  double e = -lagrangian(std::span<const double>(x));
  for (std::size_t i = 0; i < n; ++i) e += s.qd[i] * g[n + i];
  return e;
}

/// A Lagrangian behind a fixed signature, so learned and analytic models mix.
struct Model {
  std::function<dyn::LagrangianJet<double>(const State&)> jet;
  std::function<double(const State&)> energy;
};

template <class L>
Model make_model(L lagrangian) {
  auto shared = std::make_shared<const L>(std::move(lagrangian));
  return Model{[shared](const State& s) {
                 using dyn::lagrangian_jet;
                 return lagrangian_jet(*shared, s);
               },
               [shared](const State& s) { return energy(*shared, s); }};
}

inline dyn::LagrangianJet<double> lagrangian_jet(const Model& m, const State& s) { return m.jet(s); }
inline double energy(const Model& m, const State& s) { return m.energy(s); }

/// ArgumentError naming the first violated constraint when |Phi| exceeds tol.
void require_admissible_start(const System& sys, const State& s0, double tol = kConstraintTolerance);

struct RolloutOptions {
  double rtol = 1e-8;
  double atol = 1e-8;
  double jitter = 0.0;
  std::size_t max_steps = 200000;
};

struct Rollout {
  ode::Trajectory trajectory;  // grid points reached
  bool truncated = false;
  double reached = 0.0;
  std::string failure;
};

/// Integrates the accelerations of L by the unconstrained formula (lnn) or
/// with the multipliers of the system's constraints (lnn-nh). Integration
/// failures truncate the trajectory instead of throwing.
template <class L>
Rollout rollout(const L& lagrangian, Mode mode, const System& sys, const State& s0, double t_span, std::size_t n_out,
                const RolloutOptions& opt = {}) {
  if (s0.dof() != sys.dof()) {
    throw DimensionMismatchError("initial state dimension differs from system " + sys.name());
  }
  require_admissible_start(sys, s0);
  const std::shared_ptr<const dyn::ConstraintModel> constraints =
      mode == Mode::lnn_nh ? dyn::linear_constraints_of(sys) : nullptr;
  auto field = [&](const State& s) {
    using dyn::lagrangian_jet;
    if (constraints) {
      const dyn::ConstraintTerms terms = constraints->terms(s);
      return dyn::solve(lagrangian_jet(lagrangian, s), &terms, opt.jitter).accel;
    }
    return dyn::solve(lagrangian_jet(lagrangian, s), nullptr, opt.jitter).accel;
  };
  ode::IntegratorOptions io;
  io.rtol = opt.rtol;
  io.atol = opt.atol;
  io.max_steps = opt.max_steps;
  auto result = ode::integrate_partial(field, s0, t_span, n_out, io);
  return Rollout{std::move(result.trajectory), !result.complete, result.reached, std::move(result.failure)};
}

struct ReportOptions {
  std::size_t n_eval = 5;
  double t_span = 15.0;
  std::size_t n_out = 1000;
  std::uint64_t seed = 1;
  double rtol = 1e-8;       // ground truth
  double atol = 1e-8;
  double model_tol = 1e-6;  // rtol = atol for the model rollouts
  double jitter = 1e-6;     // for the model rollouts; the ground truth uses 0
  std::size_t scatter_limit = 10000;
  bool parallel = true;
};

/// Series of one model along one evaluation trajectory.
struct ModelSeries {
  std::string mode;  // "lnn", "lnn-nh" or "true"
  Rollout rollout;
  std::vector<std::vector<double>> constraint;  // Phi at each reached grid point
  std::vector<double> energy_ratio;             // system energy of the rollout state / true energy
  std::vector<double> model_energy_ratio;       // Legendre energy of the model's L / its initial value
  double mean_abs_constraint = 0.0;
  double max_abs_constraint = 0.0;
  double mean_rel_energy_error = 0.0;  // mean_t |energy_ratio - 1|
};

struct TrajectoryGroup {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  State initial;
  double true_energy = 0.0;
  std::vector<ModelSeries> models;  // lnn, lnn-nh, true
};

struct Scatter {
  std::string mode;
  std::vector<std::vector<double>> truth;
  std::vector<std::vector<double>> predicted;
};

struct ModeSummary {
  std::string mode;
  double mean_abs_constraint = 0.0;    // mean over trajectories of mean_t |Phi|
  double mean_rel_energy_error = 0.0;  // mean over trajectories
  std::size_t truncated = 0;
  double scatter_mse = 0.0;
};

struct EvalReport {
  std::string system;
  ReportOptions options;
  std::string scatter_source;
  std::vector<TrajectoryGroup> trajectories;
  std::vector<Scatter> scatter;
  std::vector<ModeSummary> summary;

  const ModeSummary& summary_for(std::string_view mode) const;
};

/// Fills all series from n_eval fresh ground-truth trajectories (sampled as in
/// data::generate with options.seed) for both learned models. Scatter data
/// comes from scatter_source (normally the test split) or, when that is
/// empty, from the ground-truth evaluation trajectories.
EvalReport report(const Model& lnn, const Model& lnn_nh, const System& sys, const ReportOptions& options,
                  std::span<const ode::Trajectory> scatter_source = {});

/// Same, for trained parameters (checked against the system first).
EvalReport report(const lagnet::Params& lnn, const lagnet::Params& lnn_nh, const System& sys,
                  const ReportOptions& options, std::span<const ode::Trajectory> scatter_source = {});

/// Serialized summary; contains no timestamps, so equal reports give equal bytes.
std::string report_json(const EvalReport& r);

/// Writes report.json, traj{i}_{mode}_constraint.csv, traj{i}_{mode}_energy.csv
/// and scatter_{mode}.csv into dir.
void write_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace nhlnn::eval
