#include "nhlnn/systems.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace nhlnn {

std::vector<double> State::packed() const {
  std::vector<double> x(q);
  x.insert(x.end(), qd.begin(), qd.end());
  return x;
}

State State::unpack(std::span<const double> x) {
  if (x.size() % 2 != 0) {
    throw DimensionMismatchError("state vector length must be even");
  }
  const std::size_t n = x.size() / 2;
  return State{{x.begin(), x.begin() + n}, {x.begin() + n, x.end()}};
}

void SystemParams::set(std::string_view key, double value) {
  if (key == "m") {
    m = value;
  } else if (key == "m_t") {
    m_t = value;
  } else if (key == "m_d") {
    m_d = value;
  } else if (key == "I") {
    I = value;
  } else if (key == "J") {
    J = value;
  } else if (key == "R") {
    R = value;
  } else {
    throw ArgumentError("unknown system parameter '" + std::string(key) + "' (expected m, m_t, m_d, I, J or R)");
  }
}

double SystemParams::get(std::string_view key) const {
  if (key == "m") return m;
  if (key == "m_t") return m_t;
  if (key == "m_d") return m_d;
  if (key == "I") return I;
  if (key == "J") return J;
  if (key == "R") return R;
  throw ArgumentError("unknown system parameter '" + std::string(key) + "'");
}

System::System(std::string name, Kind kind, std::size_t dof, std::size_t rank, SystemParams params,
               std::vector<CoordinateKind> kinds)
    : name_(std::move(name)), kind_(kind), dof_(dof), rank_(rank), params_(params), kinds_(std::move(kinds)) {}

System System::make(std::string_view name, SystemParams params) {
  using CK = CoordinateKind;
  if (name == "particle") {
    return {"particle", Kind::particle, 3, 1, params, {CK::cartesian, CK::cartesian, CK::cartesian}};
  }
  if (name == "drone") {
    return {"drone", Kind::drone, 3, 1, params, {CK::cartesian, CK::cartesian, CK::cartesian}};
  }
  if (name == "wheel") {
    return {"wheel", Kind::wheel, 4, 2, params, {CK::cartesian, CK::cartesian, CK::angular, CK::angular}};
  }
  if (name == "free") {
    return {"free", Kind::free, 3, 0, params, {CK::cartesian, CK::cartesian, CK::cartesian}};
  }
  throw ArgumentError("unknown system '" + std::string(name) + "' (expected particle, drone or wheel)");
}

void System::check_dims(std::size_t nq, std::size_t nqd) const {
  if (nq != dof_ || nqd != dof_) {
    throw DimensionMismatchError(name_ + " expects " + std::to_string(dof_) + " coordinates and velocities, got " +
                                 std::to_string(nq) + " and " + std::to_string(nqd));
  }
}

double System::lagrangian(const State& s) const {
  return lagrangian<double>(std::span<const double>(s.q), std::span<const double>(s.qd));
}

std::vector<double> System::constraint_values(const State& s) const {
  return constraint_values<double>(std::span<const double>(s.q), std::span<const double>(s.qd));
}

std::vector<double> System::true_accel(const State& s) const {
  check_dims(s.q.size(), s.qd.size());
  const auto& q = s.q;
  const auto& v = s.qd;
  switch (kind_) {
    case Kind::particle: {
      const double k = v[0] * v[1] / (1.0 + q[1] * q[1]);
      return {-q[1] * k, 0.0, k};
    }
    case Kind::drone: {
      const double gap = q[0] - q[2];
      const double k = v[1] * v[0] / (q[1] * q[1] + gap * gap);
      return {0.0, -gap * k, -q[1] * k};
    }
    case Kind::wheel: {
      const double rate = params_.R * v[2] * v[3];
      return {-std::sin(q[3]) * rate, std::cos(q[3]) * rate, 0.0, 0.0};
    }
    case Kind::free:
      return {0.0, 0.0, 0.0};
  }
  return {};
}

double System::energy(const State& s) const { return lagrangian(s); }

State System::sample_initial_state(Rng& rng) const {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  State s{std::vector<double>(dof_), std::vector<double>(dof_)};
  auto position = [&](std::size_t i) {
    s.q[i] = kinds_[i] == CoordinateKind::angular ? rng.uniform(-kHalfPi, kHalfPi) : rng.uniform(-0.5, 0.5);
  };
  auto velocity = [&] { return rng.uniform(-0.5, 0.5); };

  switch (kind_) {
    case Kind::particle:
      for (std::size_t i = 0; i < 3; ++i) position(i);
      s.qd[0] = velocity();
      s.qd[1] = velocity();
      s.qd[2] = s.q[1] * s.qd[0];
      break;
    case Kind::drone: {
      constexpr int kBudget = 1000;
      int attempt = 0;
      do {
        if (attempt++ == kBudget) {
          throw SamplingError("drone sampler: no state with |x| >= 0.1 after 1000 attempts");
        }
        for (std::size_t i = 0; i < 3; ++i) position(i);
      } while (std::abs(s.q[1]) < 0.1);
      s.qd[0] = velocity();
      s.qd[1] = velocity();
      s.qd[2] = (s.q[2] - s.q[0]) * s.qd[1] / s.q[1];
      break;
    }
    case Kind::wheel:
      for (std::size_t i = 0; i < 4; ++i) position(i);
      s.qd[2] = velocity();
      s.qd[3] = velocity();
      s.qd[0] = params_.R * std::cos(s.q[3]) * s.qd[2];
      s.qd[1] = params_.R * std::sin(s.q[3]) * s.qd[2];
      break;
    case Kind::free:
      for (std::size_t i = 0; i < 3; ++i) position(i);
      for (std::size_t i = 0; i < 3; ++i) s.qd[i] = velocity();
      break;
  }
  return s;
}

bool System::admissible(const State& s) const {
  if (kind_ != Kind::drone) {
    return true;
  }
  const double gap = s.q[0] - s.q[2];
  return s.q[1] * s.q[1] + gap * gap >= kDroneMinSeparationSq;
}

std::string System::constraint_description(std::size_t a) const {
  switch (kind_) {
    case Kind::particle:
      return "zdot - y*xdot = 0";
    case Kind::drone:
      return "x*ydot + (w - y)*xdot = 0";
    case Kind::wheel:
      return a == 0 ? "xdot - R*cos(phi)*thetadot = 0" : "ydot - R*sin(phi)*thetadot = 0";
    case Kind::free:
      break;
  }
  return "none";
}

}  // namespace nhlnn
