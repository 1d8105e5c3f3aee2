#include "nhlnn/odeint.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace nhlnn::ode {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Continuous extension.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kBeta = 0.04;  // PI controller, previous-error exponent
constexpr double kAlpha = 0.2 - 0.75 * kBeta;

using Vec = std::vector<double>;

class Stepper {
 public:
  Stepper(const AccelField& accel, std::size_t n) : accel_(accel), n_(n) {}

  /// y' = (qd, a(q, qd)) for packed y = (q, qd).
  void derivative(const Vec& y, Vec& dy) const {
    State s{Vec(y.begin(), y.begin() + n_), Vec(y.begin() + n_, y.end())};
    const Vec a = accel_(s);
    if (a.size() != n_) {
      throw DimensionMismatchError("acceleration field returned wrong dimension");
    }
    for (std::size_t i = 0; i < n_; ++i) {
      dy[i] = y[n_ + i];
      dy[n_ + i] = a[i];
      if (!std::isfinite(a[i])) {
        throw NonFiniteError("acceleration field returned a non-finite value", i);
      }
    }
  }

  State to_state(const Vec& y) const { return State{Vec(y.begin(), y.begin() + n_), Vec(y.begin() + n_, y.end())}; }

 private:
  const AccelField& accel_;
  std::size_t n_;
};

void run(const AccelField& accel, const State& s0, double t_span, std::size_t n_out, const IntegratorOptions& opt,
         IntegrationResult& result) {
  if (!(t_span > 0.0)) {
    throw ArgumentError("integrate: t_span must be positive");
  }
  if (n_out < 2) {
    throw ArgumentError("integrate: n_out must be at least 2");
  }
  if (s0.q.size() != s0.qd.size()) {
    throw DimensionMismatchError("integrate: q and qd lengths differ");
  }
  const std::size_t n = s0.dof();
  const std::size_t dim = 2 * n;
  const Vec grid = uniform_grid(t_span, n_out);
  Stepper stepper(accel, n);
  Trajectory& traj = result.trajectory;

  auto emit = [&](std::size_t i, const Vec& y) {
    State s = stepper.to_state(y);
    if (opt.record_accels) {
      traj.accels.push_back(accel(s));
    }
    traj.times.push_back(grid[i]);
    traj.states.push_back(std::move(s));
  };

  Vec y = s0.packed();
  std::array<Vec, 7> k;
  for (auto& ki : k) ki.assign(dim, 0.0);
  Vec tmp(dim), y_new(dim), err(dim);
  stepper.derivative(y, k[0]);
  emit(0, y);
  std::size_t next = 1;

  double t = 0.0;
  double h = opt.fixed_step > 0.0 ? opt.fixed_step : t_span / 1000.0;
  double err_old = 1e-4;
  bool last_rejected = false;
  std::size_t steps = 0;

  while (next < n_out) {
    if (steps++ >= opt.max_steps) {
      throw StiffnessError("integrate: step budget exhausted", t);
    }
    const bool final_step = t + h >= t_span;
    if (final_step) {
      h = t_span - t;
    }

    auto stage = [&](Vec& out, std::initializer_list<std::pair<int, double>> terms) {
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (const auto& [idx, coef] : terms) acc += coef * k[idx][i];
        tmp[i] = y[i] + h * acc;
      }
      stepper.derivative(tmp, out);
    };
    stage(k[1], {{0, a21}});
    stage(k[2], {{0, a31}, {1, a32}});
    stage(k[3], {{0, a41}, {1, a42}, {2, a43}});
    stage(k[4], {{0, a51}, {1, a52}, {2, a53}, {3, a54}});
    stage(k[5], {{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}});
    for (std::size_t i = 0; i < dim; ++i) {
      y_new[i] = y[i] + h * (a71 * k[0][i] + a73 * k[2][i] + a74 * k[3][i] + a75 * k[4][i] + a76 * k[5][i]);
    }
    stepper.derivative(y_new, k[6]);

    double err_norm = 0.0;
    if (opt.fixed_step <= 0.0) {
      double sum = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double e =
            h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
        const double scale = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        sum += (e / scale) * (e / scale);
      }
      err_norm = std::sqrt(sum / static_cast<double>(dim));
    }

    if (err_norm <= 1.0) {
      const double t_new = final_step ? t_span : t + h;
      // Dense output for every grid point inside (t, t_new].
      while (next < n_out && grid[next] <= t_new) {
        if (grid[next] >= t_new) {
          emit(next, y_new);
        } else {
          const double theta = (grid[next] - t) / h;
          const double theta1 = 1.0 - theta;
          for (std::size_t i = 0; i < dim; ++i) {
            const double r2 = y_new[i] - y[i];
            const double r3 = h * k[0][i] - r2;
            const double r4 = r2 - h * k[6][i] - r3;
            const double r5 = h * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] + d5 * k[4][i] + d6 * k[5][i] +
                                   d7 * k[6][i]);
            tmp[i] = y[i] + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
          }
          emit(next, tmp);
        }
        ++next;
      }
      y.swap(y_new);
      k[0].swap(k[6]);
      t = t_new;
      result.reached = t;
      ++result.accepted_steps;

      if (opt.fixed_step <= 0.0) {
        const double e = std::max(err_norm, 1e-10);
        double factor = kSafety * std::pow(e, -kAlpha) * std::pow(err_old, kBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        if (last_rejected) {
          factor = std::min(factor, 1.0);
        }
        err_old = std::max(err_norm, 1e-4);
        h *= factor;
      } else {
        h = opt.fixed_step;
      }
      last_rejected = false;
    } else {
      ++result.rejected_steps;
      h *= std::max(kMinFactor, kSafety * std::pow(err_norm, -0.2));
      last_rejected = true;
    }
    if (next < n_out && h < opt.min_step) {
      throw StiffnessError("integrate: step size underflow", t);
    }
  }
}

}  // namespace

std::vector<double> uniform_grid(double t_span, std::size_t n_out) {
  std::vector<double> grid(n_out);
  const double denom = static_cast<double>(n_out - 1);
  for (std::size_t i = 0; i < n_out; ++i) {
    grid[i] = t_span * (static_cast<double>(i) / denom);
  }
  grid.back() = t_span;
  return grid;
}

IntegrationResult integrate_partial(const AccelField& accel, const State& s0, double t_span, std::size_t n_out,
                                    const IntegratorOptions& options) {
  IntegrationResult result;
  try {
    run(accel, s0, t_span, n_out, options, result);
  } catch (const ArgumentError&) {
    throw;
  } catch (const Error& e) {
    result.complete = false;
    result.failure = e.what();
  }
  return result;
}

Trajectory integrate(const AccelField& accel, const State& s0, double t_span, std::size_t n_out,
                     const IntegratorOptions& options) {
  IntegrationResult result;
  run(accel, s0, t_span, n_out, options, result);
  return std::move(result.trajectory);
}

}  // namespace nhlnn::ode
