#pragma once

// Analytic benchmark systems with linear nonholonomic constraints: the
// nonholonomic particle, a drone chasing a target on a line, and a vertical
// rolling wheel. Each provides its Lagrangian (generic over dual scalars), the
// constraint 1-forms omega(q), the closed-form constrained accelerations and
// an initial-state sampler that solves the constraints exactly.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nhlnn/dual.hpp"
#include "nhlnn/errors.hpp"
#include "nhlnn/matrix.hpp"
#include "nhlnn/rng.hpp"

namespace nhlnn {

struct State {
  std::vector<double> q;
  std::vector<double> qd;

  std::size_t dof() const { return q.size(); }
  /// (q, qd) concatenated.
  std::vector<double> packed() const;
  static State unpack(std::span<const double> x);
  friend bool operator==(const State&, const State&) = default;
};

enum class CoordinateKind { cartesian, angular };

struct SystemParams {
  double m = 1.0;
  double m_t = 1.0;
  double m_d = 1.0;
  double I = 0.5;
  double J = 0.25;
  double R = 1.0;

  static constexpr std::string_view kKeys[] = {"m", "m_t", "m_d", "I", "J", "R"};

  /// Throws ArgumentError for unknown keys.
  void set(std::string_view key, double value);
  double get(std::string_view key) const;
  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

class System {
 public:
  enum class Kind { particle, drone, wheel, free };

  /// "particle" | "drone" | "wheel" (and "free", an unconstrained particle).
  static System make(std::string_view name, SystemParams params = {});

  const std::string& name() const { return name_; }
  Kind kind() const { return kind_; }
  std::size_t dof() const { return dof_; }
  std::size_t rank() const { return rank_; }
  const SystemParams& params() const { return params_; }
  const std::vector<CoordinateKind>& coordinate_kinds() const { return kinds_; }

  template <class T>
  T lagrangian(std::span<const T> q, std::span<const T> qd) const;
  double lagrangian(const State& s) const;

  /// r x n matrix whose row a is omega^a(q), so that Phi^a = omega^a(q) . qd.
  template <class T>
  Mat<T> constraint_forms(std::span<const T> q) const;
  Mat<double> constraint_forms(std::span<const double> q) const { return constraint_forms<double>(q); }

  template <class T>
  std::vector<T> constraint_values(std::span<const T> q, std::span<const T> qd) const;
  std::vector<double> constraint_values(const State& s) const;

  /// Closed-form constrained accelerations. Assumes s satisfies the constraints.
  std::vector<double> true_accel(const State& s) const;

  /// Energy of the analytic system (kinetic; no potentials in these systems).
  double energy(const State& s) const;

  State sample_initial_state(Rng& rng) const;

  /// False when the state is too close to a configuration where the
  /// constraint mass matrix degenerates (drone on top of the target).
  bool admissible(const State& s) const;

  /// Human-readable form of constraint a, for diagnostics.
  std::string constraint_description(std::size_t a) const;

 private:
  System(std::string name, Kind kind, std::size_t dof, std::size_t rank, SystemParams params,
         std::vector<CoordinateKind> kinds);
  void check_dims(std::size_t nq, std::size_t nqd) const;

  std::string name_;
  Kind kind_;
  std::size_t dof_;
  std::size_t rank_;
  SystemParams params_;
  std::vector<CoordinateKind> kinds_;
};

/// Minimum squared drone-target separation accepted by System::admissible.
inline constexpr double kDroneMinSeparationSq = 0.01;

// ---- templates --------------------------------------------------------------

template <class T>
T System::lagrangian(std::span<const T> q, std::span<const T> qd) const {
  check_dims(q.size(), qd.size());
  const auto& p = params_;
  switch (kind_) {
    case Kind::particle:
    case Kind::free:
      return 0.5 * (qd[0] * qd[0] + qd[1] * qd[1] + qd[2] * qd[2]);
    case Kind::drone:
      return 0.5 * p.m_t * (qd[0] * qd[0]) + 0.5 * p.m_d * (qd[1] * qd[1] + qd[2] * qd[2]);
    case Kind::wheel:
      return 0.5 * p.m * (qd[0] * qd[0] + qd[1] * qd[1]) + 0.5 * p.I * (qd[2] * qd[2]) +
             0.5 * p.J * (qd[3] * qd[3]);
  }
  throw ArgumentError("unknown system kind");
}

template <class T>
Mat<T> System::constraint_forms(std::span<const T> q) const {
  check_dims(q.size(), dof_);
  Mat<T> w(rank_, dof_);
  switch (kind_) {
    case Kind::particle:  // zdot - y xdot
      w(0, 0) = -q[1];
      w(0, 2) = T(1.0);
      break;
    case Kind::drone:  // x ydot + (w - y) xdot
      w(0, 1) = q[0] - q[2];
      w(0, 2) = q[1];
      break;
    case Kind::wheel:  // xdot - R cos(phi) thetadot, ydot - R sin(phi) thetadot
      w(0, 0) = T(1.0);
      w(0, 2) = -params_.R * ad::cos(q[3]);
      w(1, 1) = T(1.0);
      w(1, 2) = -params_.R * ad::sin(q[3]);
      break;
    case Kind::free:
      break;
  }
  return w;
}

template <class T>
std::vector<T> System::constraint_values(std::span<const T> q, std::span<const T> qd) const {
  check_dims(q.size(), qd.size());
  const Mat<T> w = constraint_forms<T>(q);
  std::vector<T> phi(rank_, T(0.0));
  for (std::size_t a = 0; a < rank_; ++a) {
    T acc(0.0);
    for (std::size_t i = 0; i < dof_; ++i) {
      acc += w(a, i) * qd[i];
    }
    phi[a] = acc;
  }
  return phi;
}

/// Adapts a System to the generic scalar-field signature f(x), x = (q, qd).
struct AnalyticLagrangian {
  System system;

  template <class S>
  S operator()(std::span<const S> x) const {
    const std::size_t n = system.dof();
    if (x.size() != 2 * n) {
      throw DimensionMismatchError("lagrangian: state length differs from 2 x dof of " + system.name());
    }
    return system.lagrangian<S>(x.first(n), x.subspan(n, n));
  }
};

}  // namespace nhlnn
