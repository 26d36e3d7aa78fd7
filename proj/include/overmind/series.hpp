#ifndef OVERMIND_SERIES_HPP
#define OVERMIND_SERIES_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "overmind/errors.hpp"

namespace overmind::series {

// Truncated power series arithmetic. A series is a coefficient vector
// c[0..n-1] representing sum c_k t^k + O(t^n). All binary ops truncate to
// the shorter length. Transcendental functions use the standard first-order
// ODE recurrences and accept arbitrary constant terms, so Taylor expansions
// about any center c reduce to applying them to the linear series c + t.

using Series = std::vector<double>;

inline Series constant(double c, std::size_t n) {
  Series s(n, 0.0);
  if (n > 0) s[0] = c;
  return s;
}

// The expansion variable shifted by a center: c + t.
inline Series shifted_var(double center, std::size_t n) {
  Series s(n, 0.0);
  if (n > 0) s[0] = center;
  if (n > 1) s[1] = 1.0;
  return s;
}

inline Series add(const Series& u, const Series& v) {
  std::size_t n = std::min(u.size(), v.size());
  Series r(n);
  for (std::size_t k = 0; k < n; ++k) r[k] = u[k] + v[k];
  return r;
}

inline Series sub(const Series& u, const Series& v) {
  std::size_t n = std::min(u.size(), v.size());
  Series r(n);
  for (std::size_t k = 0; k < n; ++k) r[k] = u[k] - v[k];
  return r;
}

inline Series scale(const Series& u, double a) {
  Series r(u);
  for (double& c : r) c *= a;
  return r;
}

inline Series mul(const Series& u, const Series& v) {
  std::size_t n = std::min(u.size(), v.size());
  Series r(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; i + j < n; ++j) r[i + j] += u[i] * v[j];
  return r;
}

// q = u / v with v[0] != 0: q_k = (u_k - sum_{j=1..k} v_j q_{k-j}) / v_0.
inline Series div(const Series& u, const Series& v) {
  std::size_t n = std::min(u.size(), v.size());
  if (n == 0 || v[0] == 0.0) throw DegenerateFit("series division by zero constant term");
  Series q(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = u[k];
    for (std::size_t j = 1; j <= k; ++j) s -= v[j] * q[k - j];
    q[k] = s / v[0];
  }
  return q;
}

// e = exp(u): e_k = (1/k) sum_{j=1..k} j u_j e_{k-j}.
inline Series exp(const Series& u) {
  std::size_t n = u.size();
  Series e(n, 0.0);
  if (n == 0) return e;
  e[0] = std::exp(u[0]);
  for (std::size_t k = 1; k < n; ++k) {
    double s = 0.0;
    for (std::size_t j = 1; j <= k; ++j) s += static_cast<double>(j) * u[j] * e[k - j];
    e[k] = s / static_cast<double>(k);
  }
  return e;
}

// l = log(u), u[0] > 0: l' = u'/u.
inline Series log(const Series& u) {
  std::size_t n = u.size();
  if (n == 0 || u[0] <= 0.0) throw DegenerateFit("series log of non-positive constant term");
  Series l(n, 0.0);
  l[0] = std::log(u[0]);
  for (std::size_t k = 1; k < n; ++k) {
    // k l_k = k u_k / u_0 - (1/u_0) sum_{j=1..k-1} j l_j u_{k-j}
    double s = static_cast<double>(k) * u[k];
    for (std::size_t j = 1; j < k; ++j) s -= static_cast<double>(j) * l[j] * u[k - j];
    l[k] = s / (static_cast<double>(k) * u[0]);
  }
  return l;
}

// s = sqrt(u), u[0] > 0: from s*s = u.
inline Series sqrt(const Series& u) {
  std::size_t n = u.size();
  if (n == 0 || u[0] <= 0.0) throw DegenerateFit("series sqrt of non-positive constant term");
  Series s(n, 0.0);
  s[0] = std::sqrt(u[0]);
  for (std::size_t k = 1; k < n; ++k) {
    double acc = u[k];
    for (std::size_t j = 1; j < k; ++j) acc -= s[j] * s[k - j];
    s[k] = acc / (2.0 * s[0]);
  }
  return s;
}

inline Series tanh(const Series& u) {
  // tanh(u) = 1 - 2 / (exp(2u) + 1)
  std::size_t n = u.size();
  Series e = exp(scale(u, 2.0));
  Series denom = add(e, constant(1.0, n));
  return sub(constant(1.0, n), div(constant(2.0, n), denom));
}

inline Series sigmoid(const Series& u) {
  std::size_t n = u.size();
  Series e = exp(scale(u, -1.0));
  return div(constant(1.0, n), add(constant(1.0, n), e));
}

inline Series softplus(const Series& u) {
  std::size_t n = u.size();
  return log(add(constant(1.0, n), exp(u)));
}

inline double eval(const Series& u, double t) {
  double acc = 0.0;
  for (std::size_t k = u.size(); k-- > 0;) acc = acc * t + u[k];
  return acc;
}

}  // namespace overmind::series

#endif
