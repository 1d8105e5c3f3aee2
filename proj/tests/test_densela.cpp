#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nhlnn/densela.hpp"
#include "nhlnn/diffkernel.hpp"
#include "test_support.hpp"

using namespace nhlnn;

namespace {

double max_abs(const Mat<double>& a) {
  double m = 0.0;
  for (double e : a.entries()) m = std::max(m, std::abs(e));
  return m;
}

/// Random matrix Q1 diag(s) Q2 style: diagonally shifted so conditioning stays bounded.
Mat<double> random_well_conditioned(Rng& rng, std::size_t n) {
  Mat<double> a(n, n);
  for (double& e : a.entries()) e = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * (n + 1.0);
  return a;
}

}  // namespace

TEST_CASE("solve examples") {
  const Mat<double> b(3, 1, {1.5, -2.0, 0.25});
  CHECK(la::solve(Mat<double>::identity(3), b).entries() == b.entries());

  const Mat<double> d(2, 2, {2.0, 0.0, 0.0, 4.0});
  const auto x = la::solve(d, std::vector<double>{2.0, 8.0});
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 2.0);

  const Mat<double> s(2, 2, {1.0, 1.0, 1.0, 1.0});
  try {
    la::solve(s, std::vector<double>{1.0, 1.0});
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.pivot() == 1);
  }
}

TEST_CASE("solve rejects bad input") {
  CHECK_THROWS_AS(la::solve(Mat<double>(2, 3), Mat<double>(2, 1)), DimensionMismatchError);
  Mat<double> a = Mat<double>::identity(2);
  a(1, 0) = std::nan("");
  CHECK_THROWS_AS(la::solve(a, std::vector<double>{1.0, 1.0}), NonFiniteError);
}

TEST_CASE("regularize examples") {
  const Mat<double> a(2, 2, {1.0, 2.0, 3.0, 4.0});
  CHECK(la::regularize(a, 0.0).entries() == a.entries());
  CHECK(la::regularize(Mat<double>(2, 2), 1.0).entries() == Mat<double>::identity(2).entries());
  const Mat<double> r = la::regularize(Mat<double>::identity(2), 1e-6);
  CHECK(r(0, 0) == 1.000001);
  CHECK(r(1, 1) == 1.000001);
  CHECK(r(0, 1) == 0.0);
}

TEST_CASE("property: A solve(A, I) recovers I") {
  Rng rng(2024);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + c % 8;
    const Mat<double> a = random_well_conditioned(rng, n);
    const Mat<double> x = la::solve(a, Mat<double>::identity(n));
    const Mat<double> prod = a * x;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-9);
  }
}

TEST_CASE("property: residual bound on random right-hand sides") {
  Rng rng(77);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + c % 8, k = 1 + c % 3;
    const Mat<double> a = random_well_conditioned(rng, n);
    Mat<double> b(n, k);
    for (double& e : b.entries()) e = rng.uniform(-5.0, 5.0);
    const Mat<double> x = la::solve(a, b);
    const Mat<double> prod = a * x;
    Mat<double> res(n, k);
    for (std::size_t i = 0; i < res.entries().size(); ++i) res.entries()[i] = prod.entries()[i] - b.entries()[i];
    CHECK(max_abs(res) <= 1e-10 * max_abs(b));
  }
}

TEST_CASE("property: row permutation permutes the solution rows identically") {
  Rng rng(5);
  for (int c = 0; c < 50; ++c) {
    const std::size_t n = 2 + c % 6;
    const Mat<double> a = random_well_conditioned(rng, n);
    Mat<double> b(n, 2);
    for (double& e : b.entries()) e = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Mat<double> pa(n, n), pb(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(perm[i], j);
      for (std::size_t j = 0; j < 2; ++j) pb(i, j) = b(perm[i], j);
    }
    // Permuting equations leaves the unknowns unchanged; the pivot order is
    // driven by magnitudes so the computed solution agrees to rounding.
    const Mat<double> x = la::solve(a, b), px = la::solve(pa, pb);
    for (std::size_t i = 0; i < x.entries().size(); ++i) CHECK(std::abs(x.entries()[i] - px.entries()[i]) <= 1e-12);
  }
}

TEST_CASE("property: gradients through solve match finite differences") {
  Rng rng(31);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> k(6);
    for (auto& v : k) v = rng.uniform(-1.0, 1.0);
    auto g = [&k](auto p) {
      using P = typename decltype(p)::value_type;
      Mat<P> a(2, 2);
      a(0, 0) = 3.0 + k[0] * p[0];
      a(0, 1) = k[1] * p[1] * p[0];
      a(1, 0) = k[2] + ad::sin(p[1]);
      a(1, 1) = -3.0 + k[3] * p[1];
      const auto x = la::solve(a, std::vector<P>{P(k[4]), P(k[5]) + p[0]});
      return x[0] * x[0] + 2.0 * x[1];
    };
    const auto p = nhlnn::testing::random_vector(rng, 2);
    const auto exact = ad::grad(g, p);
    const auto fd = nhlnn::testing::fd_grad([&](std::span<const double> v) { return g(v); }, p, 1e-6);
    for (std::size_t i = 0; i < 2; ++i) CHECK(nhlnn::testing::close(exact[i], fd[i], 1e-5, 1e-7));
  }
}
