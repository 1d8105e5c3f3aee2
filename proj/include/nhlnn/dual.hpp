#pragma once

// Forward-mode dual numbers whose coefficients may themselves be duals.
//
// A Dual<T> carries a value of type T and a tangent vector of T, one entry per
// seeded direction. Nesting Dual<Dual<double>> yields second derivatives,
// Dual<Dual<Dual<double>>> third. An empty tangent vector means "all zero",
// so constants cost nothing and plain arithmetic on them is bit-identical to
// arithmetic on the underlying doubles.

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <utility>
#include <vector>

namespace nhlnn::ad {

template <class T>
class Dual;

template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T>
struct dual_depth<Dual<T>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};
template <class T>
inline constexpr int dual_depth_v = dual_depth<T>::value;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

template <class T>
concept Scalar = std::is_arithmetic_v<T> || is_dual_v<T>;

/// U may be combined with a Dual<T> as a constant: it sits at or below T in the nesting.
template <class U, class T>
concept ConstantFor = Scalar<U> && (dual_depth_v<U> <= dual_depth_v<T>);

template <class T>
class Dual {
 public:
  using value_type = T;

  Dual() = default;
  Dual(const T& value) : value_(value) {}  // NOLINT(google-explicit-constructor)
  Dual(T value, std::vector<T> tangents) : value_(std::move(value)), tangents_(std::move(tangents)) {}

  template <class U>
    requires(ConstantFor<U, T> && !std::is_same_v<U, T>)
  Dual(const U& value) : value_(T(value)) {}  // NOLINT(google-explicit-constructor)

  const T& value() const { return value_; }
  T& value() { return value_; }
  const std::vector<T>& tangents() const { return tangents_; }
  std::vector<T>& tangents() { return tangents_; }

  /// Tangent along direction i; zero when the direction was never seeded.
  T d(std::size_t i) const { return i < tangents_.size() ? tangents_[i] : T(0.0); }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

 private:
  T value_{};
  std::vector<T> tangents_;
};

// ---- plain-double primitives ------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x))); }

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::tanh;

inline double primal(double x) { return x; }
inline bool all_finite(double x) { return std::isfinite(x); }

template <class T>
double primal(const Dual<T>& x) {
  return primal(x.value());
}

template <class T>
bool all_finite(const Dual<T>& x) {
  if (!all_finite(x.value())) {
    return false;
  }
  for (const auto& t : x.tangents()) {
    if (!all_finite(t)) {
      return false;
    }
  }
  return true;
}

// ---- arithmetic -------------------------------------------------------------

template <class T>
Dual<T> operator-(const Dual<T>& a) {
  std::vector<T> d(a.tangents().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = -a.tangents()[i];
  }
  return {-a.value(), std::move(d)};
}

template <class T>
const Dual<T>& operator+(const Dual<T>& a) {
  return a;
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  const auto& da = a.tangents();
  const auto& db = b.tangents();
  std::vector<T> d(std::max(da.size(), db.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i < da.size() && i < db.size()) {
      d[i] = da[i] + db[i];
    } else {
      d[i] = i < da.size() ? da[i] : db[i];
    }
  }
  return {a.value() + b.value(), std::move(d)};
}

template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  const auto& da = a.tangents();
  const auto& db = b.tangents();
  std::vector<T> d(std::max(da.size(), db.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i < da.size() && i < db.size()) {
      d[i] = da[i] - db[i];
    } else {
      d[i] = i < da.size() ? da[i] : -db[i];
    }
  }
  return {a.value() - b.value(), std::move(d)};
}

template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  const auto& da = a.tangents();
  const auto& db = b.tangents();
  std::vector<T> d(std::max(da.size(), db.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i < da.size() && i < db.size()) {
      d[i] = da[i] * b.value() + a.value() * db[i];
    } else if (i < da.size()) {
      d[i] = da[i] * b.value();
    } else {
      d[i] = a.value() * db[i];
    }
  }
  return {a.value() * b.value(), std::move(d)};
}

template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const auto& da = a.tangents();
  const auto& db = b.tangents();
  T q = a.value() / b.value();
  std::vector<T> d(std::max(da.size(), db.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i < da.size() && i < db.size()) {
      d[i] = (da[i] - q * db[i]) / b.value();
    } else if (i < da.size()) {
      d[i] = da[i] / b.value();
    } else {
      d[i] = -(q * db[i]) / b.value();
    }
  }
  return {std::move(q), std::move(d)};
}

// Mixed operations with constants from a lower nesting level.

template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator+(const Dual<T>& a, const U& b) {
  return {a.value() + b, a.tangents()};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator+(const U& a, const Dual<T>& b) {
  return {a + b.value(), b.tangents()};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator-(const Dual<T>& a, const U& b) {
  return {a.value() - b, a.tangents()};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator-(const U& a, const Dual<T>& b) {
  return a + (-b);
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator*(const Dual<T>& a, const U& b) {
  std::vector<T> d(a.tangents().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = a.tangents()[i] * b;
  }
  return {a.value() * b, std::move(d)};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator*(const U& a, const Dual<T>& b) {
  std::vector<T> d(b.tangents().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = a * b.tangents()[i];
  }
  return {a * b.value(), std::move(d)};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator/(const Dual<T>& a, const U& b) {
  std::vector<T> d(a.tangents().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = a.tangents()[i] / b;
  }
  return {a.value() / b, std::move(d)};
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T> operator/(const U& a, const Dual<T>& b) {
  return Dual<T>(T(a)) / b;
}

template <class T, class U>
  requires ConstantFor<U, T>
Dual<T>& operator+=(Dual<T>& a, const U& b) {
  return a = a + b;
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T>& operator-=(Dual<T>& a, const U& b) {
  return a = a - b;
}
template <class T, class U>
  requires ConstantFor<U, T>
Dual<T>& operator*=(Dual<T>& a, const U& b) {
  return a = a * b;
}

// ---- elementary functions ---------------------------------------------------

namespace detail {
/// Chain rule: tangents of f(a) are a's tangents scaled by f'(a.value()).
template <class T>
Dual<T> chain(const Dual<T>& a, T value, const T& slope) {
  std::vector<T> d(a.tangents().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = a.tangents()[i] * slope;
  }
  return {std::move(value), std::move(d)};
}
}  // namespace detail

template <class T>
Dual<T> exp(const Dual<T>& a) {
  T e = exp(a.value());
  return detail::chain(a, e, e);
}

template <class T>
Dual<T> log(const Dual<T>& a) {
  return detail::chain(a, log(a.value()), T(1.0) / a.value());
}

template <class T>
Dual<T> sin(const Dual<T>& a) {
  return detail::chain(a, sin(a.value()), cos(a.value()));
}

template <class T>
Dual<T> cos(const Dual<T>& a) {
  return detail::chain(a, cos(a.value()), -sin(a.value()));
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T t = tanh(a.value());
  T slope = T(1.0) - t * t;
  return detail::chain(a, std::move(t), slope);
}

template <class T>
Dual<T> sigmoid(const Dual<T>& a) {
  T s = sigmoid(a.value());
  T slope = s * (T(1.0) - s);
  return detail::chain(a, std::move(s), slope);
}

template <class T>
Dual<T> softplus(const Dual<T>& a) {
  return detail::chain(a, softplus(a.value()), sigmoid(a.value()));
}

/// Squared value; saves a temporary in hot code.
template <class T>
T square(const T& x) {
  return x * x;
}

}  // namespace nhlnn::ad
