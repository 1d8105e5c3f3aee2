#include <cmath>
#include <vector>

#include "doctest.h"
#include "nhlnn/densela.hpp"
#include "nhlnn/diffkernel.hpp"
#include "test_support.hpp"

using namespace nhlnn;
using nhlnn::testing::close;

namespace {

struct SumSquares {
  template <class S>
  S operator()(std::span<const S> x) const {
    return x[0] * x[0] + x[1] * x[1];
  }
};

struct SoftplusFirst {
  template <class S>
  S operator()(std::span<const S> x) const {
    return ad::softplus(x[0]);
  }
};

}  // namespace

TEST_CASE("grad of polynomial, constant and softplus") {
  const std::vector<double> x{1.0, 2.0};
  const auto g = ad::grad(SumSquares{}, x);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 4.0);

  const auto zero = ad::grad([](auto x) { return typename decltype(x)::value_type(3.5); }, x);
  CHECK(zero == std::vector<double>{0.0, 0.0});

  const std::vector<double> origin{0.0};
  const double fd = nhlnn::testing::fd_grad([](std::span<const double> v) { return ad::softplus(v[0]); }, origin,
                                            1e-5)[0];
  const double exact = ad::grad(SoftplusFirst{}, origin)[0];
  CHECK(exact == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(close(exact, fd, 1e-8, 1e-10));
}

TEST_CASE("hessian of quadratic form, softplus and linear field") {
  const Mat<double> a(3, 3, {2.0, -1.0, 0.5, -1.0, 3.0, 0.25, 0.5, 0.25, 1.0});
  auto quad = [&a](auto x) {
    using S = typename decltype(x)::value_type;
    S acc(0.0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) acc += 0.5 * a(i, j) * x[i] * x[j];
    return acc;
  };
  const std::vector<double> x{0.3, -0.7, 1.1};
  const Mat<double> h = ad::hessian(quad, x);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(h(i, j) == doctest::Approx(a(i, j)).epsilon(1e-14));

  const std::vector<double> origin{0.0};
  const double fd = nhlnn::testing::fd_second([](std::span<const double> v) { return ad::softplus(v[0]); }, origin, 0,
                                              0, 1e-4);
  const double exact = ad::hessian(SoftplusFirst{}, origin)(0, 0);
  CHECK(exact == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(close(exact, fd, 1e-6, 1e-8));

  auto linear = [](auto x) { return 2.0 * x[0] - 3.0 * x[1] + 0.5; };
  const Mat<double> hl = ad::hessian(linear, std::vector<double>{1.0, 2.0});
  for (double e : hl.entries()) CHECK(e == 0.0);
}

TEST_CASE("mixed_second blocks") {
  auto bilinear = [](auto x) { return x[0] * x[1]; };
  const std::vector<double> x{0.4, -2.0};
  const auto m = ad::mixed_second<double>(bilinear, std::span<const double>(x), {1, 1}, {0, 1});
  CHECK(m(0, 0) == 1.0);

  auto separable = [](auto x) { return ad::exp(x[1]) + x[1] * x[1]; };
  const auto z = ad::mixed_second<double>(separable, std::span<const double>(x), {1, 1}, {0, 1});
  CHECK(z(0, 0) == 0.0);

  // f(q, qd) = q^2 qd at (3, 1), d2f / dq dqd = 2q = 6; checked by finite differences too.
  auto cubic = [](auto x) { return x[0] * x[0] * x[1]; };
  const std::vector<double> p{3.0, 1.0};
  const double exact = ad::mixed_second<double>(cubic, std::span<const double>(p), {1, 1}, {0, 1})(0, 0);
  const double fd = nhlnn::testing::fd_second([](std::span<const double> v) { return v[0] * v[0] * v[1]; }, p, 1, 0,
                                              1e-4);
  CHECK(exact == 6.0);
  CHECK(close(exact, fd, 1e-6, 1e-8));

  CHECK_THROWS_AS(ad::mixed_second<double>(cubic, std::span<const double>(p), {0, 2}, {1, 1}), ArgumentError);
  CHECK_THROWS_AS(ad::mixed_second<double>(cubic, std::span<const double>(p), {0, 1}, {1, 2}), ArgumentError);
}

TEST_CASE("non-finite results carry the coordinate") {
  auto f = [](auto x) { return ad::log(x[1]) + x[0]; };
  try {
    ad::grad(f, std::vector<double>{1.0, 0.0});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 2);  // value slot (index m) is checked first
  }
  // Finite value 1 with derivative -1 / 1e-320 = -inf in the second slot.
  auto g = [](auto x) { return 1e-320 / x[1] + x[0]; };
  try {
    ad::grad(g, std::vector<double>{1.0, 1e-320});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("grad_nested through a hessian") {
  // g(theta) = ||hessian(f_theta)||^2 with f_theta(x) = theta x^2: hessian 2 theta, g = 4 theta^2.
  auto g = [](auto theta) {
    using P = typename decltype(theta)::value_type;
    const P th = theta[0];
    auto f = [&th](auto x) { return th * x[0] * x[0]; };
    const std::vector<P> x{P(0.7)};
    const Mat<P> h = ad::hessian<P>(f, std::span<const P>(x));
    return h(0, 0) * h(0, 0);
  };
  for (double th : {-1.5, 0.0, 0.25, 3.0}) {
    const std::vector<double> theta{th};
    CHECK(ad::grad_nested(g, theta)[0] == doctest::Approx(8.0 * th).epsilon(1e-14));
  }
  auto constant = [](auto theta) {
    using P = typename decltype(theta)::value_type;
    return P(2.0);
  };
  CHECK(ad::grad_nested(constant, std::vector<double>{1.0, 2.0, 3.0}) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("grad_nested through a linear solve matches finite differences") {
  // x(theta) = A(theta)^-1 b, g = sum(x).
  auto g = [](auto theta) {
    using P = typename decltype(theta)::value_type;
    Mat<P> a(2, 2);
    a(0, 0) = 2.0 + theta[0] * theta[0];
    a(0, 1) = theta[1];
    a(1, 0) = ad::sin(theta[0]);
    a(1, 1) = 3.0 + theta[1];
    const std::vector<P> x = la::solve(a, std::vector<P>{P(1.0), P(-2.0)});
    return x[0] + x[1];
  };
  const std::vector<double> theta{0.3, -0.4};
  const auto exact = ad::grad_nested(g, theta);
  const auto fd = nhlnn::testing::fd_grad([&](std::span<const double> t) { return g(t); }, theta, 1e-6);
  for (std::size_t i = 0; i < 2; ++i) CHECK(close(exact[i], fd[i], 1e-7, 1e-9));
}

TEST_CASE("nesting beyond depth three is a capability error") {
  auto g = [](auto theta) {
    using P = typename decltype(theta)::value_type;
    auto f = [&theta](auto x) {
      using S = typename decltype(x)::value_type;
      auto inner = [&theta](auto y) { return theta[0] * y[0] * y[0]; };
      const std::vector<S> y{x[0]};
      return ad::grad<S>(inner, std::span<const S>(y))[0];
    };
    const std::vector<P> x{P(1.0)};
    return ad::hessian<P>(f, std::span<const P>(x))(0, 0);
  };
  CHECK_THROWS_AS(ad::grad_nested(g, std::vector<double>{1.0}), CapabilityError);
}

TEST_CASE("zero-payload duals reproduce double arithmetic bit for bit") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(0.1, 3);
    using D = ad::Dual<ad::Dual<double>>;
    const D da(a), db(b);
    const double plain = ad::softplus(a * b - a / b) + ad::exp(-a) * std::tanh(b) - std::log(b) + ad::sigmoid(a);
    const D dual = ad::softplus(da * db - da / db) + ad::exp(-da) * ad::tanh(db) - ad::log(db) + ad::sigmoid(da);
    CHECK(dual.value().value() == plain);
  }
}

TEST_CASE("property: AD matches central differences on random MLPs") {
  constexpr int kCases = 100;
  int checked = 0;
  for (int c = 0; c < kCases; ++c) {
    Rng rng(1000 + c);
    const std::size_t m = 2 + c % 7;
    const auto net = nhlnn::testing::TinyMlp::random(m, 6, 5000 + c);
    const auto x = nhlnn::testing::random_vector(rng, m);
    const nhlnn::testing::ScalarField f = [&net](std::span<const double> v) { return net(v); };

    const auto g = ad::grad(net, x);
    const auto gfd = nhlnn::testing::fd_grad(f, x, 1e-4);
    for (std::size_t i = 0; i < m; ++i) CHECK(close(g[i], gfd[i], 1e-5, 1e-7));

    const Mat<double> h = ad::hessian(net, x);
    const Mat<double> hfd = nhlnn::testing::fd_hessian(f, x, 1e-4);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(close(h(i, j), hfd(i, j), 1e-5, 1e-7));
        CHECK(std::abs(h(i, j) - h(j, i)) <= 1e-12);
      }

    const std::size_t split = m / 2;
    const ad::IndexRange a{split, m - split}, b{0, split};
    const Mat<double> mixed = ad::mixed_second<double>(net, std::span<const double>(x), a, b);
    for (std::size_t i = 0; i < a.count; ++i)
      for (std::size_t j = 0; j < b.count; ++j) {
        CHECK(close(mixed(i, j), hfd(a.begin + i, b.begin + j), 1e-5, 1e-7));
        CHECK(std::abs(mixed(i, j) - h(b.begin + j, a.begin + i)) <= 1e-12);
      }
    ++checked;
  }
  CHECK(checked == kCases);
}

TEST_CASE("property: grad is linear") {
  Rng rng(99);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> cf(6), cg(6);
    for (auto& v : cf) v = rng.uniform(-2, 2);
    for (auto& v : cg) v = rng.uniform(-2, 2);
    const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    auto poly = [](const std::vector<double>& k) {
      return [k](auto x) { return k[0] * x[0] * x[0] * x[1] + k[1] * x[1] * x[2] + k[2] * x[2] * x[2] * x[2] +
                                  k[3] * x[0] + k[4] * x[0] * x[1] * x[2] + k[5]; };
    };
    auto f = poly(cf);
    auto g = poly(cg);
    auto combo = [&](auto x) { return alpha * f(x) + beta * g(x); };
    const auto x = nhlnn::testing::random_vector(rng, 3);
    const auto gf = ad::grad(f, x), gg = ad::grad(g, x), gc = ad::grad(combo, x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(gc[i] - (alpha * gf[i] + beta * gg[i])) <= 1e-12);
  }
}
