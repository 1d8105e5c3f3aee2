#pragma once

// Accelerations of a Lagrangian system from derivatives of its Lagrangian.
//
// Unconstrained:  qdd = H^-1 f,             H = d2L/dqd2 (+ jitter I)
//                                           f = dL/dq - (d2L/dq dqd^T) qd
// Nonholonomic:   qdd = H^-1 (f + W^T lambda)
//                 lambda = -M^-1 (b + W H^-1 f),   M = W H^-1 W^T
// where W = dPhi/dqd (r x n) and b = (dPhi/dq) qd. For linear constraints
// Phi = omega(q) qd this is W = omega and b_a = qd^T (d omega^a/dq) qd.
//
// The solver core works on a LagrangianJet, the three derivative blocks of L
// the formulas need, so the same code serves analytic Lagrangians (jet by
// nested duals), the network kernel (jet by forward propagation) and the
// training adjoint (jet entries seeded as duals).

#include <cstddef>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nhlnn/densela.hpp"
#include "nhlnn/diffkernel.hpp"
#include "nhlnn/systems.hpp"

namespace nhlnn::dyn {

template <class T>
struct LagrangianJet {
  std::vector<T> grad_q;    // dL/dq
  Mat<T> hess_vv;           // d2L/dqd dqd^T
  std::vector<T> mixed_qd;  // (d2L/dq dqd^T) qd, row i = sum_j d2L/dqd_i dq_j qd_j

  std::size_t dof() const { return grad_q.size(); }
};

/// Constraint quantities at one state: W = dPhi/dqd and drift b = (dPhi/dq) qd.
struct ConstraintTerms {
  Mat<double> grad_v;
  std::vector<double> drift;

  std::size_t rank() const { return drift.size(); }
};

class ConstraintModel {
 public:
  virtual ~ConstraintModel() = default;
  virtual std::size_t rank() const = 0;
  virtual std::size_t dof() const = 0;
  virtual std::vector<double> values(const State& s) const = 0;
  virtual ConstraintTerms terms(const State& s) const = 0;
};

/// Phi^a = omega^a(q) . qd with omega given by a generic callable
/// forms(std::span<const S> q) -> Mat<S>; d omega/dq comes from one dual pass.
template <class Forms>
class LinearConstraints final : public ConstraintModel {
 public:
  LinearConstraints(Forms forms, std::size_t dof, std::size_t rank) : forms_(std::move(forms)), dof_(dof), rank_(rank) {}

  std::size_t rank() const override { return rank_; }
  std::size_t dof() const override { return dof_; }

  std::vector<double> values(const State& s) const override {
    const Mat<double> w = forms_(std::span<const double>(s.q));
    std::vector<double> phi(rank_, 0.0);
    for (std::size_t a = 0; a < rank_; ++a) {
      for (std::size_t i = 0; i < dof_; ++i) {
        phi[a] += w(a, i) * s.qd[i];
      }
    }
    return phi;
  }

  ConstraintTerms terms(const State& s) const override {
    using D = ad::Dual<double>;
    std::vector<D> q;
    q.reserve(dof_);
    for (std::size_t i = 0; i < dof_; ++i) {
      std::vector<double> e(dof_, 0.0);
      e[i] = 1.0;
      q.emplace_back(s.q[i], std::move(e));
    }
    const Mat<D> w = forms_(std::span<const D>(q));
    ConstraintTerms out{Mat<double>(rank_, dof_), std::vector<double>(rank_, 0.0)};
    for (std::size_t a = 0; a < rank_; ++a) {
      double drift = 0.0;
      for (std::size_t k = 0; k < dof_; ++k) {
        out.grad_v(a, k) = w(a, k).value();
        double dk = 0.0;  // (d omega^a_k / dq) . qd
        for (std::size_t j = 0; j < dof_; ++j) {
          dk += w(a, k).d(j) * s.qd[j];
        }
        drift += s.qd[k] * dk;
      }
      out.drift[a] = drift;
    }
    return out;
  }

 private:
  Forms forms_;
  std::size_t dof_;
  std::size_t rank_;
};

/// General Phi(q, qd) given by a generic callable phi(std::span<const S> x) ->
/// std::vector<S>, x = (q, qd). Both gradient blocks come from one Jacobian.
template <class Phi>
class GenericConstraints final : public ConstraintModel {
 public:
  GenericConstraints(Phi phi, std::size_t dof, std::size_t rank) : phi_(std::move(phi)), dof_(dof), rank_(rank) {}

  std::size_t rank() const override { return rank_; }
  std::size_t dof() const override { return dof_; }

  std::vector<double> values(const State& s) const override {
    const std::vector<double> x = s.packed();
    return phi_(std::span<const double>(x));
  }

  ConstraintTerms terms(const State& s) const override {
    const std::vector<double> x = s.packed();
    const Mat<double> jac = ad::jacobian<double>(phi_, std::span<const double>(x));
    if (jac.rows() != rank_) {
      throw DimensionMismatchError("constraint function returned wrong number of components");
    }
    ConstraintTerms out{Mat<double>(rank_, dof_), std::vector<double>(rank_, 0.0)};
    for (std::size_t a = 0; a < rank_; ++a) {
      for (std::size_t i = 0; i < dof_; ++i) {
        out.grad_v(a, i) = jac(a, dof_ + i);
        out.drift[a] += jac(a, i) * s.qd[i];
      }
    }
    return out;
  }

 private:
  Phi phi_;
  std::size_t dof_;
  std::size_t rank_;
};

/// Linear (1-form) path for a benchmark system; null when the system has rank 0.
std::shared_ptr<const ConstraintModel> linear_constraints_of(const System& sys);
/// Generic Phi(q, qd) path for the same constraints.
std::shared_ptr<const ConstraintModel> generic_constraints_of(const System& sys);

// ---- solver core ------------------------------------------------------------

template <class T>
struct Solution {
  std::vector<T> accel;
  std::vector<T> force;
  std::vector<T> multipliers;  // empty when unconstrained
  Mat<T> constraint_mass;      // r x r, empty when unconstrained
};

template <class T>
std::vector<T> force(const LagrangianJet<T>& jet) {
  std::vector<T> f(jet.dof());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = jet.grad_q[i] - jet.mixed_qd[i];
  }
  return f;
}

/// One factorization of the (regularized) mass matrix serves the force solve,
/// the assembly of M and the final multiplier correction. terms == nullptr or
/// rank 0 gives the unconstrained accelerations, bit for bit.
template <class T>
Solution<T> solve(const LagrangianJet<T>& jet, const ConstraintTerms* terms, double jitter) {
  const std::size_t n = jet.dof();
  const std::size_t r = terms ? terms->rank() : 0;
  if (jet.hess_vv.rows() != n || jet.mixed_qd.size() != n) {
    throw DimensionMismatchError("lagrangian jet blocks have inconsistent sizes");
  }
  if (terms && r > 0 && (terms->grad_v.rows() != r || terms->grad_v.cols() != n)) {
    throw DimensionMismatchError("constraint gradient has wrong shape");
  }
  if (r > n) {
    throw ArgumentError("constraint rank exceeds degrees of freedom");
  }

  const la::LuFactor<T> mass(la::regularize(jet.hess_vv, jitter));
  Solution<T> out;
  out.force = force(jet);

  Mat<T> rhs(n, 1 + r);
  for (std::size_t i = 0; i < n; ++i) {
    rhs(i, 0) = out.force[i];
    for (std::size_t b = 0; b < r; ++b) {
      rhs(i, 1 + b) = T(terms->grad_v(b, i));
    }
  }
  const Mat<T> x = mass.solve(rhs);  // [H^-1 f | H^-1 W^T]

  out.accel.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.accel[i] = x(i, 0);
  }
  if (r == 0) {
    return out;
  }

  const Mat<double>& w = terms->grad_v;
  Mat<T> m(r, r);
  std::vector<T> b(r);
  for (std::size_t a = 0; a < r; ++a) {
    T acc(terms->drift[a]);
    for (std::size_t i = 0; i < n; ++i) {
      acc += w(a, i) * x(i, 0);
    }
    b[a] = acc;
    for (std::size_t c = 0; c < r; ++c) {
      T mac(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        mac += w(a, i) * x(i, 1 + c);
      }
      m(a, c) = mac;
    }
  }
  std::vector<T> lambda;
  try {
    lambda = la::solve(m, b);
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError("constraint mass matrix M is singular: constraint row " + std::to_string(e.pivot()) +
                                  " depends on the preceding rows",
                              e.pivot());
  }
  for (auto& l : lambda) {
    l = -l;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < r; ++c) {
      out.accel[i] += x(i, 1 + c) * lambda[c];
    }
  }
  out.multipliers = std::move(lambda);
  out.constraint_mass = std::move(m);
  return out;
}

// ---- jets of generic Lagrangians ---------------------------------------------

/// Jet of a generic scalar field L(x), x = (q, qd), by one second-order dual
/// pass. T may itself be a dual (parameter derivatives through the jet).
template <class T = double, class L>
LagrangianJet<T> lagrangian_jet(const L& lagrangian, const State& s) {
  const std::size_t n = s.dof();
  std::vector<T> x;
  x.reserve(2 * n);
  for (double v : s.q) x.emplace_back(v);
  for (double v : s.qd) x.emplace_back(v);
  const ad::Taylor2<T> t = ad::taylor2<T>(lagrangian, std::span<const T>(x));
  LagrangianJet<T> jet{std::vector<T>(n), Mat<T>(n, n), std::vector<T>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    jet.grad_q[i] = t.grad[i];
    T acc(0.0);
    for (std::size_t j = 0; j < n; ++j) {
      jet.hess_vv(i, j) = t.hess(n + i, n + j);
      acc += t.hess(n + i, j) * s.qd[j];
    }
    jet.mixed_qd[i] = acc;
  }
  return jet;
}

// ---- context-level operations -----------------------------------------------

template <class L>
struct DynamicsContext {
  L lagrangian;
  std::shared_ptr<const ConstraintModel> constraints;  // null: unconstrained
  double jitter = 0.0;
};

template <class L>
DynamicsContext<L> make_context(L lagrangian, std::shared_ptr<const ConstraintModel> constraints = nullptr,
                                double jitter = 0.0) {
  return DynamicsContext<L>{std::move(lagrangian), std::move(constraints), jitter};
}

namespace detail {
template <class L>
std::optional<ConstraintTerms> terms_at(const DynamicsContext<L>& ctx, const State& s) {
  if (!ctx.constraints || ctx.constraints->rank() == 0) {
    return std::nullopt;
  }
  if (ctx.constraints->dof() != s.dof()) {
    throw DimensionMismatchError("constraint model and state dimensions differ");
  }
  return ctx.constraints->terms(s);
}

template <class L>
void require_constraints(const DynamicsContext<L>& ctx) {
  if (!ctx.constraints || ctx.constraints->rank() == 0) {
    throw ArgumentError("operation requires constraints in the dynamics context");
  }
}
}  // namespace detail

template <class L>
Mat<double> mass_matrix(const DynamicsContext<L>& ctx, const State& s) {
  Mat<double> h = la::regularize(lagrangian_jet(ctx.lagrangian, s).hess_vv, ctx.jitter);
  for (std::size_t i = 0; i < h.entries().size(); ++i) {
    if (!std::isfinite(h.entries()[i])) {
      throw NonFiniteError("mass matrix", i);
    }
  }
  return h;
}

template <class L>
std::vector<double> force(const DynamicsContext<L>& ctx, const State& s) {
  std::vector<double> f = force(lagrangian_jet(ctx.lagrangian, s));
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) {
      throw NonFiniteError("force", i);
    }
  }
  return f;
}

template <class L>
std::vector<double> unconstrained_accel(const DynamicsContext<L>& ctx, const State& s) {
  return solve(lagrangian_jet(ctx.lagrangian, s), nullptr, ctx.jitter).accel;
}

template <class L>
Mat<double> constraint_mass(const DynamicsContext<L>& ctx, const State& s) {
  detail::require_constraints(ctx);
  const auto terms = detail::terms_at(ctx, s);
  return solve(lagrangian_jet(ctx.lagrangian, s), &*terms, ctx.jitter).constraint_mass;
}

template <class L>
std::vector<double> multipliers(const DynamicsContext<L>& ctx, const State& s) {
  detail::require_constraints(ctx);
  const auto terms = detail::terms_at(ctx, s);
  return solve(lagrangian_jet(ctx.lagrangian, s), &*terms, ctx.jitter).multipliers;
}

/// Constrained accelerations; without constraints this is unconstrained_accel.
template <class L>
std::vector<double> nh_accel(const DynamicsContext<L>& ctx, const State& s) {
  const auto terms = detail::terms_at(ctx, s);
  return solve(lagrangian_jet(ctx.lagrangian, s), terms ? &*terms : nullptr, ctx.jitter).accel;
}

}  // namespace nhlnn::dyn
