#pragma once

#include <array>
#include <cmath>

namespace tt {

// Forward-mode scalar with a fixed-capacity partial vector. Constraint blocks
// in the trajectory optimizer seed one slot per dependent decision variable
// and scatter the resulting partials into the sparse Jacobian.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design

  static Dual seeded(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual operator-() const {
    Dual r(-v);
    for (int i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(double s) {
    v *= s;
    for (int i = 0; i < N; ++i) d[i] *= s;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator*(Dual a, double s) { return a *= s; }
  friend Dual operator*(double s, Dual a) { return a *= s; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    const double inv = 1.0 / b.v, inv2 = inv * inv;
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv - a.v * b.d[i] * inv2;
    return r;
  }
  friend Dual operator/(Dual a, double s) { return a *= (1.0 / s); }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <int N>
Dual<N> sin(const Dual<N>& a) {
  Dual<N> r(std::sin(a.v));
  const double c = std::cos(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = c * a.d[i];
  return r;
}

template <int N>
Dual<N> cos(const Dual<N>& a) {
  Dual<N> r(std::cos(a.v));
  const double s = -std::sin(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
  return r;
}

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  const double g = 0.5 / r.v;  // caller keeps arguments away from 0
  for (int i = 0; i < N; ++i) r.d[i] = g * a.d[i];
  return r;
}

template <int N>
Dual<N> abs(const Dual<N>& a) {
  return a.v >= 0.0 ? a : -a;
}

template <int N>
Dual<N> max(const Dual<N>& a, const Dual<N>& b) {
  return a.v >= b.v ? a : b;
}

template <int N>
Dual<N> min(const Dual<N>& a, const Dual<N>& b) {
  return a.v <= b.v ? a : b;
}

template <int N>
Dual<N> clamp(const Dual<N>& a, double lo, double hi) {
  if (a.v < lo) return Dual<N>(lo);
  if (a.v > hi) return Dual<N>(hi);
  return a;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) { return x.v; }

// Minimal 2-vector over any scalar (double or Dual).
template <class T>
struct V2 {
  T x{}, y{};

  V2() = default;
  V2(T xx, T yy) : x(xx), y(yy) {}

  friend V2 operator+(const V2& a, const V2& b) { return {a.x + b.x, a.y + b.y}; }
  friend V2 operator-(const V2& a, const V2& b) { return {a.x - b.x, a.y - b.y}; }
  friend V2 operator*(const T& s, const V2& a) { return {s * a.x, s * a.y}; }
  friend V2 operator*(double s, const V2& a) { return {s * a.x, s * a.y}; }
};

template <class T>
T dot(const V2<T>& a, const V2<T>& b) {
  return a.x * b.x + a.y * b.y;
}

template <class T>
T cross2(const V2<T>& a, const V2<T>& b) {
  return a.x * b.y - a.y * b.x;
}

// Rotate v by angle th (counterclockwise).
template <class T>
V2<T> rotate(const T& th, const V2<T>& v) {
  using std::cos;
  using std::sin;
  const T c = cos(th), s = sin(th);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace tt
