#ifndef OVERMIND_PADE_HPP
#define OVERMIND_PADE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "overmind/errors.hpp"
#include "overmind/series.hpp"

namespace overmind::pade {

struct Interval {
  double lo = -1.0;
  double hi = 1.0;
  bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo < hi; }
};

enum class FitMethod { TaylorMatch, LeastSquares };

struct FitConfig {
  FitMethod method = FitMethod::LeastSquares;
  std::size_t grid_points = 512;   // sample/error grid size, >= 64
  double pole_epsilon = 1e-6;      // minimum |denominator| over the range
  int refine_iters = 3;            // denominator-reweighting passes for least-squares
};

// Rational approximant R(x) = (sum_{i<=m} a_i x^i) / (1 + sum_{j<=n} b_j x^j).
struct PadeApproximant {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> a;  // a_0..a_m
  std::vector<double> b;  // b_1..b_n
  Interval range;
  std::string function_id;
};

struct FunctionSpec {
  std::string function_id;
  std::function<double(double)> f;
  Interval default_range;
  // Taylor coefficients of f about `center`, length `count`; empty function if
  // the spec cannot provide them (e.g. table-backed functions).
  std::function<std::vector<double>(double center, std::size_t count)> taylor;
};

namespace detail {

// Least squares via Householder QR; rows >= cols. Throws DegenerateFit when
// the column space is numerically rank deficient.
inline std::vector<double> lstsq(std::vector<std::vector<double>> A, std::vector<double> y) {
  const std::size_t rows = A.size();
  const std::size_t cols = rows ? A[0].size() : 0;
  if (rows < cols || cols == 0) throw DegenerateFit("underdetermined system");
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < rows; ++i) norm += A[i][k] * A[i][k];
    norm = std::sqrt(norm);
    if (norm < 1e-13) throw DegenerateFit("rank-deficient system at column " + std::to_string(k));
    double alpha = A[k][k] > 0 ? -norm : norm;
    std::vector<double> v(rows - k);
    v[0] = A[k][k] - alpha;
    for (std::size_t i = k + 1; i < rows; ++i) v[i - k] = A[i][k];
    double vnorm2 = 0.0;
    for (double c : v) vnorm2 += c * c;
    if (vnorm2 > 0) {
      for (std::size_t j = k; j < cols; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < rows; ++i) dot += v[i - k] * A[i][j];
        double f = 2.0 * dot / vnorm2;
        for (std::size_t i = k; i < rows; ++i) A[i][j] -= f * v[i - k];
      }
      double dot = 0.0;
      for (std::size_t i = k; i < rows; ++i) dot += v[i - k] * y[i];
      double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < rows; ++i) y[i] -= f * v[i - k];
    }
  }
  std::vector<double> x(cols, 0.0);
  for (std::size_t k = cols; k-- > 0;) {
    double s = y[k];
    for (std::size_t j = k + 1; j < cols; ++j) s -= A[k][j] * x[j];
    if (std::abs(A[k][k]) < 1e-13) throw DegenerateFit("singular triangular factor");
    x[k] = s / A[k][k];
  }
  return x;
}

// Gaussian elimination with partial pivoting for the small square
// order-matching system of the Taylor construction.
inline std::vector<double> solve_square(std::vector<std::vector<double>> A, std::vector<double> y) {
  const std::size_t n = A.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A[i][k]) > std::abs(A[piv][k])) piv = i;
    if (std::abs(A[piv][k]) < 1e-13) throw DegenerateFit("singular order-matching system");
    std::swap(A[k], A[piv]);
    std::swap(y[k], y[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = A[i][k] / A[k][k];
      for (std::size_t j = k; j < n; ++j) A[i][j] -= f * A[k][j];
      y[i] -= f * y[k];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double s = y[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= A[k][j] * x[j];
    x[k] = s / A[k][k];
  }
  return x;
}

inline double denom_at(const PadeApproximant& p, double x) {
  double acc = 0.0;
  for (std::size_t j = p.n; j-- > 0;) acc = (acc + p.b[j]) * x;
  return 1.0 + acc;
}

inline void check_pole_free(const PadeApproximant& p, double pole_epsilon) {
  const std::size_t pts = 2048;
  double prev = denom_at(p, p.range.lo);
  for (std::size_t i = 0; i <= pts; ++i) {
    double x = p.range.lo + (p.range.hi - p.range.lo) * static_cast<double>(i) / pts;
    double d = denom_at(p, x);
    if (std::abs(d) < pole_epsilon || (d > 0) != (prev > 0)) {
      std::ostringstream os;
      os << "denominator " << d << " at x=" << x;
      throw PoleInRange(os.str());
    }
    prev = d;
  }
}

}  // namespace detail

// Classical Padé construction matching a truncated Taylor series c_0..c_{m+n}.
inline PadeApproximant fit_taylor_pade(const std::vector<double>& c, std::size_t m, std::size_t n,
                                       Interval range = {-1.0, 1.0},
                                       double pole_epsilon = 1e-6) {
  if (c.size() < m + n + 1) throw DegenerateFit("need m+n+1 series coefficients");
  auto coef = [&](std::ptrdiff_t i) { return i >= 0 ? c[static_cast<std::size_t>(i)] : 0.0; };
  std::vector<double> b;
  if (n > 0) {
    // For k = m+1..m+n:  c_k + sum_{j=1..n} b_j c_{k-j} = 0
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    std::vector<double> y(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t k = m + 1 + r;
      for (std::size_t j = 1; j <= n; ++j)
        A[r][j - 1] = coef(static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(j));
      y[r] = -c[k];
    }
    b = detail::solve_square(std::move(A), std::move(y));
  }
  std::vector<double> a(m + 1, 0.0);
  for (std::size_t i = 0; i <= m; ++i) {
    double s = c[i];
    for (std::size_t j = 1; j <= std::min(i, n); ++j)
      s += b[j - 1] * c[i - j];
    a[i] = s;
  }
  PadeApproximant p{m, n, std::move(a), std::move(b), range, ""};
  detail::check_pole_free(p, pole_epsilon);
  return p;
}

// Wide-range fit: minimize the linearized residual
//   f(x) (1 + sum b_j x^j) - sum a_i x^i
// over a uniform grid, with a few denominator-reweighting passes. Columns are
// power-scaled to the range half-width before solving.
inline PadeApproximant fit_least_squares(const FunctionSpec& spec, std::size_t m, std::size_t n,
                                         Interval range, const FitConfig& cfg = {}) {
  if (!range.valid()) throw DegenerateFit("invalid range");
  const std::size_t pts = std::max<std::size_t>(cfg.grid_points, m + n + 2);
  const double s = std::max(std::abs(range.lo), std::abs(range.hi));
  std::vector<double> xs(pts), fx(pts), ts(pts);
  for (std::size_t i = 0; i < pts; ++i) {
    xs[i] = range.lo + (range.hi - range.lo) * static_cast<double>(i) / (pts - 1);
    fx[i] = spec.f(xs[i]);
    if (!std::isfinite(fx[i])) throw DegenerateFit("reference not finite at x=" + std::to_string(xs[i]));
    ts[i] = xs[i] / s;
  }
  std::vector<double> w(pts, 1.0);
  std::vector<double> sol;
  for (int iter = 0; iter <= cfg.refine_iters; ++iter) {
    std::vector<std::vector<double>> A(pts, std::vector<double>(m + 1 + n, 0.0));
    std::vector<double> y(pts, 0.0);
    for (std::size_t r = 0; r < pts; ++r) {
      double tp = 1.0;
      for (std::size_t i = 0; i <= m; ++i) {
        A[r][i] = w[r] * tp;
        tp *= ts[r];
      }
      tp = ts[r];
      for (std::size_t j = 1; j <= n; ++j) {
        A[r][m + j] = -w[r] * fx[r] * tp;
        tp *= ts[r];
      }
      y[r] = w[r] * fx[r];
    }
    sol = detail::lstsq(std::move(A), std::move(y));
    for (std::size_t r = 0; r < pts; ++r) {
      double den = 1.0;
      double tp = ts[r];
      for (std::size_t j = 1; j <= n; ++j) {
        den += sol[m + j] * tp;
        tp *= ts[r];
      }
      w[r] = 1.0 / std::max(std::abs(den), 1e-3);
    }
  }
  PadeApproximant p;
  p.m = m;
  p.n = n;
  p.range = range;
  p.function_id = spec.function_id;
  p.a.resize(m + 1);
  p.b.resize(n);
  double sp = 1.0;
  for (std::size_t i = 0; i <= m; ++i) {
    p.a[i] = sol[i] / sp;
    sp *= s;
  }
  sp = s;
  for (std::size_t j = 1; j <= n; ++j) {
    p.b[j - 1] = sol[m + j] / sp;
    sp *= s;
  }
  detail::check_pole_free(p, cfg.pole_epsilon);
  return p;
}

// Numerator and denominator evaluated by iterated power accumulation.
inline double eval(const PadeApproximant& p, double x, double pole_epsilon = 1e-6) {
  double num = 0.0, den = 1.0, xp = 1.0;
  for (std::size_t i = 0; i <= p.m; ++i) {
    num += p.a[i] * xp;
    xp *= x;
  }
  xp = x;
  for (std::size_t j = 1; j <= p.n; ++j) {
    den += p.b[j - 1] * xp;
    xp *= x;
  }
  if (std::abs(den) < pole_epsilon) {
    throw PoleInRange("denominator " + std::to_string(den) + " at x=" + std::to_string(x));
  }
  return num / den;
}

inline double max_abs_error(const PadeApproximant& p, const FunctionSpec& spec, Interval range,
                            std::size_t grid_points = 1001) {
  if (grid_points < 2) throw DegenerateFit("grid_points must be >= 2");
  double worst = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    double x = range.lo + (range.hi - range.lo) * static_cast<double>(i) / (grid_points - 1);
    worst = std::max(worst, std::abs(eval(p, x) - spec.f(x)));
  }
  return worst;
}

// Smallest balanced order (k,k), k = 1..max_k, meeting the MAE target.
// Fits that pole out or degenerate are skipped.
inline PadeApproximant select_order(const FunctionSpec& spec, double target_mae, Interval range,
                                    std::size_t max_k, const FitConfig& cfg = {}) {
  if (!(target_mae > 0)) throw DegenerateFit("target_mae must be positive");
  if (max_k < 1) throw DegenerateFit("max_k must be >= 1");
  for (std::size_t k = 1; k <= max_k; ++k) {
    PadeApproximant p;
    try {
      if (cfg.method == FitMethod::TaylorMatch) {
        if (!spec.taylor) throw DegenerateFit("no taylor provider for " + spec.function_id);
        auto c = spec.taylor(0.0, 2 * k + 1);
        p = fit_taylor_pade(c, k, k, range, cfg.pole_epsilon);
        p.function_id = spec.function_id;
      } else {
        p = fit_least_squares(spec, k, k, range, cfg);
      }
    } catch (const PoleInRange&) {
      continue;
    } catch (const DegenerateFit&) {
      continue;
    }
    if (max_abs_error(p, spec, range, std::max<std::size_t>(cfg.grid_points, 1001)) <= target_mae)
      return p;
  }
  throw TargetUnreachable("no k <= " + std::to_string(max_k) + " meets MAE " +
                          std::to_string(target_mae) + " for " + spec.function_id);
}

// --- built-in function specs ---------------------------------------------

inline double gelu_fn(double x) {
  constexpr double kRoot2OverPi = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(kRoot2OverPi * (x + 0.044715 * x * x * x)));
}

inline FunctionSpec builtin_spec(const std::string& id) {
  using series::Series;
  auto var = [](double c, std::size_t n) { return series::shifted_var(c, n); };
  if (id == "tanh") {
    return {"tanh", [](double x) { return std::tanh(x); }, {-8, 8},
            [var](double c, std::size_t n) { return series::tanh(var(c, n)); }};
  }
  if (id == "sigmoid") {
    return {"sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, {-8, 8},
            [var](double c, std::size_t n) { return series::sigmoid(var(c, n)); }};
  }
  if (id == "exp") {
    return {"exp", [](double x) { return std::exp(x); }, {-4, 4},
            [var](double c, std::size_t n) { return series::exp(var(c, n)); }};
  }
  if (id == "sqrt") {
    // Not analytic at 0, so no Maclaurin provider; least-squares only.
    return {"sqrt", [](double x) { return std::sqrt(x); }, {0.0625, 4}, nullptr};
  }
  if (id == "gelu") {
    return {"gelu", gelu_fn, {-6, 6},
            [var](double c, std::size_t n) {
              constexpr double kRoot2OverPi = 0.7978845608028654;
              Series u = var(c, n);
              Series inner = series::scale(
                  series::add(u, series::scale(series::mul(series::mul(u, u), u), 0.044715)),
                  kRoot2OverPi);
              Series t = series::tanh(inner);
              Series one = series::constant(1.0, n);
              return series::scale(series::mul(u, series::add(one, t)), 0.5);
            }};
  }
  if (id == "softplus" || id == "relu-smooth") {
    return {"softplus", [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); }, {-8, 8},
            [var](double c, std::size_t n) { return series::softplus(var(c, n)); }};
  }
  throw UnknownOperator("unknown function id '" + id + "'");
}

// Piecewise-linear spec from a sampled table over [lo, hi].
inline FunctionSpec table_spec(const std::string& id, std::vector<double> ys, Interval range) {
  if (ys.size() < 2 || !range.valid()) throw DegenerateFit("table needs >= 2 samples and a valid range");
  return {id,
          [ys = std::move(ys), range](double x) {
            double t = (x - range.lo) / (range.hi - range.lo) * (ys.size() - 1);
            t = std::clamp(t, 0.0, static_cast<double>(ys.size() - 1));
            std::size_t i = std::min(static_cast<std::size_t>(t), ys.size() - 2);
            double frac = t - static_cast<double>(i);
            return ys[i] * (1.0 - frac) + ys[i + 1] * frac;
          },
          range, nullptr};
}

}  // namespace overmind::pade

#endif
