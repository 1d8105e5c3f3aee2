#pragma once

// Derivatives of scalar fields by nested forward-mode duals.
//
// Fields are generic callables: f(std::span<const S>) -> S, instantiated for
// whatever scalar S the operation seeds. Every operation seeds all input
// directions of one nesting level in a single evaluation. The base scalar T
// may itself be a dual (grad over parameters of a function that takes a
// Hessian internally); total nesting is capped at kMaxNestingDepth.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nhlnn/dual.hpp"
#include "nhlnn/errors.hpp"
#include "nhlnn/matrix.hpp"

namespace nhlnn::ad {

inline constexpr int kMaxNestingDepth = 3;

/// Contiguous block of input indices [begin, begin + count).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t count = 0;
  std::size_t end() const { return begin + count; }
};

template <class T>
struct Taylor2 {
  T value;
  std::vector<T> grad;
  Mat<T> hess;
};

namespace detail {

template <class S>
void require_depth() {
  if constexpr (dual_depth_v<S> > kMaxNestingDepth) {
    throw CapabilityError("derivative nesting depth " + std::to_string(dual_depth_v<S>) +
                          " exceeds the supported maximum of " + std::to_string(kMaxNestingDepth));
  }
}

template <class T>
void require_finite(const T& v, const char* what, std::size_t index) {
  if (!all_finite(v)) {
    throw NonFiniteError(std::string(what) + ": non-finite result", index);
  }
}

template <class T>
std::vector<T> unit(std::size_t i, std::size_t m) {
  std::vector<T> e(m, T(0.0));
  e[i] = T(1.0);
  return e;
}

}  // namespace detail

/// Gradient of f at x.
template <class T = double, class F>
std::vector<T> grad(F&& f, std::span<const T> x) {
  using D = Dual<T>;
  detail::require_depth<D>();
  const std::size_t m = x.size();
  std::vector<D> xs;
  xs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    xs.emplace_back(x[i], detail::unit<T>(i, m));
  }
  const D y = f(std::span<const D>(xs));
  detail::require_finite(y.value(), "grad", m);
  std::vector<T> g(m);
  for (std::size_t i = 0; i < m; ++i) {
    g[i] = y.d(i);
    detail::require_finite(g[i], "grad", i);
  }
  return g;
}

template <class T = double, class F>
std::vector<T> grad(F&& f, const std::vector<T>& x) {
  return grad<T>(std::forward<F>(f), std::span<const T>(x));
}

/// Jacobian of a vector field g: R^m -> R^k, rows are outputs.
template <class T = double, class F>
Mat<T> jacobian(F&& g, std::span<const T> x) {
  using D = Dual<T>;
  detail::require_depth<D>();
  const std::size_t m = x.size();
  std::vector<D> xs;
  xs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    xs.emplace_back(x[i], detail::unit<T>(i, m));
  }
  const std::vector<D> y = g(std::span<const D>(xs));
  Mat<T> jac(y.size(), m);
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      jac(r, i) = y[r].d(i);
      detail::require_finite(jac(r, i), "jacobian", r * m + i);
    }
  }
  return jac;
}

/// Value, gradient and Hessian from one evaluation over Dual<Dual<T>>.
template <class T = double, class F>
Taylor2<T> taylor2(F&& f, std::span<const T> x) {
  using D1 = Dual<T>;
  using D2 = Dual<D1>;
  detail::require_depth<D2>();
  const std::size_t m = x.size();
  std::vector<D2> xs;
  xs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    xs.emplace_back(D1(x[i], detail::unit<T>(i, m)), detail::unit<D1>(i, m));
  }
  const D2 y = f(std::span<const D2>(xs));
  Taylor2<T> out{y.value().value(), std::vector<T>(m), Mat<T>(m, m)};
  detail::require_finite(out.value, "hessian", m * m + m);
  for (std::size_t i = 0; i < m; ++i) {
    out.grad[i] = y.value().d(i);
    detail::require_finite(out.grad[i], "hessian", m * m + i);
    const D1 row = y.d(i);
    for (std::size_t j = 0; j < m; ++j) {
      out.hess(i, j) = row.d(j);
      detail::require_finite(out.hess(i, j), "hessian", i * m + j);
    }
  }
  return out;
}

template <class T = double, class F>
Mat<T> hessian(F&& f, std::span<const T> x) {
  return taylor2<T>(std::forward<F>(f), x).hess;
}

template <class T = double, class F>
Mat<T> hessian(F&& f, const std::vector<T>& x) {
  return hessian<T>(std::forward<F>(f), std::span<const T>(x));
}

/// Entry (i, j) = d^2 f / dx_{b_j} dx_{a_i}; the blocks must be disjoint.
template <class T = double, class F>
Mat<T> mixed_second(F&& f, std::span<const T> x, IndexRange block_a, IndexRange block_b) {
  using D1 = Dual<T>;
  using D2 = Dual<D1>;
  detail::require_depth<D2>();
  const std::size_t m = x.size();
  if (block_a.end() > m || block_b.end() > m) {
    throw ArgumentError("mixed_second: index block out of range");
  }
  if (block_a.begin < block_b.end() && block_b.begin < block_a.end()) {
    throw ArgumentError("mixed_second: index blocks overlap");
  }
  std::vector<D2> xs;
  xs.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    D1 inner(x[k]);
    if (k >= block_b.begin && k < block_b.end()) {
      inner.tangents() = detail::unit<T>(k - block_b.begin, block_b.count);
    }
    D2 outer(std::move(inner));
    if (k >= block_a.begin && k < block_a.end()) {
      outer.tangents() = detail::unit<D1>(k - block_a.begin, block_a.count);
    }
    xs.push_back(std::move(outer));
  }
  const D2 y = f(std::span<const D2>(xs));
  Mat<T> out(block_a.count, block_b.count);
  for (std::size_t i = 0; i < block_a.count; ++i) {
    const D1 row = y.d(i);
    for (std::size_t j = 0; j < block_b.count; ++j) {
      out(i, j) = row.d(j);
      detail::require_finite(out(i, j), "mixed_second", i * block_b.count + j);
    }
  }
  return out;
}

/// Gradient over parameters theta of a scalar g whose evaluation may itself
/// call grad / hessian / mixed_second / taylor2 and la::solve. g receives the
/// parameters as Dual<double> and the inner operations nest on top of that.
template <class G>
std::vector<double> grad_nested(G&& g, std::span<const double> theta) {
  return grad<double>(std::forward<G>(g), theta);
}

}  // namespace nhlnn::ad
