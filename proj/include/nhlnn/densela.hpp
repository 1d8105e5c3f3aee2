#pragma once

// Small dense linear algebra for the mass-matrix and multiplier solves.
// Templated on the scalar so that solves stay differentiable by the dual
// numbers in dual.hpp; pivoting decisions look at primal values only.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "nhlnn/dual.hpp"
#include "nhlnn/errors.hpp"
#include "nhlnn/matrix.hpp"

namespace nhlnn::la {

inline constexpr double kPivotTolerance = 1e-12;

/// LU factorization with partial pivoting, P A = L U. Factor once, solve many.
template <class T>
class LuFactor {
 public:
  explicit LuFactor(Mat<T> a) : lu_(std::move(a)), perm_(lu_.rows()) {
    if (!lu_.square()) {
      throw DimensionMismatchError("solve: matrix is not square");
    }
    for (std::size_t i = 0; i < lu_.entries().size(); ++i) {
      if (!ad::all_finite(lu_.entries()[i])) {
        throw NonFiniteError("solve: non-finite matrix entry", i);
      }
    }
    const std::size_t n = lu_.rows();
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(ad::primal(lu_(k, k)));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double mag = std::abs(ad::primal(lu_(i, k)));
        if (mag > best) {
          best = mag;
          p = i;
        }
      }
      if (best < kPivotTolerance) {
        throw SingularMatrixError("singular matrix", k);
      }
      if (p != k) {
        for (std::size_t j = 0; j < n; ++j) {
          std::swap(lu_(k, j), lu_(p, j));
        }
        std::swap(perm_[k], perm_[p]);
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        T factor = lu_(i, k) / lu_(k, k);
        for (std::size_t j = k + 1; j < n; ++j) {
          lu_(i, j) -= factor * lu_(k, j);
        }
        lu_(i, k) = std::move(factor);
      }
    }
  }

  std::size_t size() const { return lu_.rows(); }

  Mat<T> solve(const Mat<T>& b) const {
    const std::size_t n = lu_.rows();
    if (b.rows() != n) {
      throw DimensionMismatchError("solve: right-hand side row count differs from matrix size");
    }
    Mat<T> x(n, b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        T acc = b(perm_[i], c);
        for (std::size_t j = 0; j < i; ++j) {
          acc -= lu_(i, j) * x(j, c);
        }
        x(i, c) = std::move(acc);
      }
      for (std::size_t i = n; i-- > 0;) {
        T acc = x(i, c);
        for (std::size_t j = i + 1; j < n; ++j) {
          acc -= lu_(i, j) * x(j, c);
        }
        x(i, c) = acc / lu_(i, i);
      }
    }
    return x;
  }

  std::vector<T> solve(const std::vector<T>& b) const { return solve(column(b)).entries(); }

 private:
  Mat<T> lu_;
  std::vector<std::size_t> perm_;
};

/// X with A X = B.
template <class T>
Mat<T> solve(const Mat<T>& a, const Mat<T>& b) {
  return LuFactor<T>(a).solve(b);
}

template <class T>
std::vector<T> solve(const Mat<T>& a, const std::vector<T>& b) {
  return LuFactor<T>(a).solve(b);
}

/// A + eps I.
template <class T>
Mat<T> regularize(Mat<T> a, double eps) {
  if (!a.square()) {
    throw DimensionMismatchError("regularize: matrix is not square");
  }
  if (eps != 0.0) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      a(i, i) += eps;
    }
  }
  return a;
}

}  // namespace nhlnn::la
