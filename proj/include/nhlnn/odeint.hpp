#pragma once

// Dormand-Prince 5(4) integration of q'' = a(q, q') with embedded error
// control and 4th-order dense output onto a uniform time grid.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nhlnn/systems.hpp"

namespace nhlnn::ode {

using AccelField = std::function<std::vector<double>(const State&)>;

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-8;
  double min_step = 1e-12;
  std::size_t max_steps = 200000;
  /// Non-zero disables error control and takes steps of this size.
  double fixed_step = 0.0;
  /// Evaluate the field at every grid state and store it in Trajectory::accels.
  bool record_accels = false;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<std::vector<double>> accels;

  std::size_t size() const { return times.size(); }
};

struct IntegrationResult {
  Trajectory trajectory;  // grid points reached before any failure
  bool complete = true;
  double reached = 0.0;  // last time the solution was advanced to
  std::string failure;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
};

/// Uniform grid t_i = t_span * i / (n_out - 1).
std::vector<double> uniform_grid(double t_span, std::size_t n_out);

/// Never throws on integration failure; reports it in the result.
IntegrationResult integrate_partial(const AccelField& accel, const State& s0, double t_span, std::size_t n_out,
                                    const IntegratorOptions& options = {});

/// Throws StiffnessError on step-size underflow or step budget exhaustion, and
/// rethrows errors raised by the field (non-finite values, singular matrices).
Trajectory integrate(const AccelField& accel, const State& s0, double t_span, std::size_t n_out,
                     const IntegratorOptions& options = {});

}  // namespace nhlnn::ode
