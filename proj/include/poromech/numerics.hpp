#ifndef POROMECH_NUMERICS_HPP
#define POROMECH_NUMERICS_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace poromech {

/// Adaptive quadrature failed to reach its tolerance.
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested derivative diverges at a graph endpoint (e.g. gamma'(1) for Brooks-Corey).
struct EndpointDivergence : std::domain_error {
  using std::domain_error::domain_error;
};

/// Root of an increasing function f on [lo, hi], safeguarded Newton with
/// bisection fallback. f(lo) <= 0 <= f(hi) is assumed; the answer is accurate
/// to x_tol in the argument.
template <class F, class DF>
double solve_increasing(F&& f, DF&& df, double lo, double hi, double x_tol,
                        int max_iter = 200) {
  double a = lo, b = hi;
  double x = 0.5 * (a + b);
  for (int it = 0; it < max_iter; ++it) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx > 0.0) b = x; else a = x;
    if (b - a <= x_tol) return 0.5 * (a + b);
    const double d = df(x);
    double next = (d > 0.0 && std::isfinite(d)) ? x - fx / d
                                                : std::numeric_limits<double>::quiet_NaN();
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    x = next;
  }
  return 0.5 * (a + b);
}

namespace detail {

template <class F>
double simpson(F&&, double a, double fa, double, double fm, double b, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive_simpson_rec(F&& f, double a, double fa, double b, double fb,
                            double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(f, a, fa, lm, flm, m, fm);
  const double right = simpson(f, m, fm, rm, frm, b, fb);
  const double delta = left + right - whole;
  if (depth <= 0) {
    if (std::fabs(delta) > 15.0 * tol)
      throw QuadratureError("adaptive quadrature: recursion limit before tolerance");
    return left + right + delta / 15.0;
  }
  if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

} // namespace detail

/// Adaptive Simpson on [a,b]; integrand must be finite on the closed interval.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double tol = 1e-12,
                          int max_depth = 40) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(fm))
    throw QuadratureError("adaptive quadrature: non-finite integrand sample");
  const double whole = detail::simpson(f, a, fa, m, fm, b, fb);
  return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

/// Tanh-sinh (double exponential) quadrature on (a,b). Tolerates integrable
/// endpoint singularities; used by test oracles as a route independent of the
/// substitution-based evaluation in the library proper. The integrand is
/// called as f(da, db) with the distances da = z - a and db = b - z computed
/// without cancellation, so algebraic endpoint singularities keep full
/// precision even where z itself would round onto an endpoint.
template <class F>
double integrate_tanh_sinh(F&& f, double a, double b, int levels = 12) {
  const double half = 0.5 * (b - a);
  const double pi_half = 1.5707963267948966;
  double h = 1.0;
  auto eval = [&](double t) {
    const double u = pi_half * std::sinh(t);
    const double e = std::exp(-2.0 * std::fabs(u));
    const double comp = 2.0 * e / (1.0 + e);  // 1 - |tanh(u)|
    if (comp == 0.0) return 0.0;
    const double w = pi_half * std::cosh(t) * comp * (2.0 - comp);  // sech^2 factor
    const double near_dist = half * comp, far_dist = half * (2.0 - comp);
    const double da = (t >= 0.0) ? far_dist : near_dist;
    const double db = (t >= 0.0) ? near_dist : far_dist;
    const double v = f(da, db);
    return std::isfinite(v) ? v * w : 0.0;
  };
  double sum = eval(0.0);
  double t = h;
  while (t < 7.0) {
    sum += eval(t) + eval(-t);
    t += h;
  }
  double result = sum * h;
  for (int lvl = 0; lvl < levels; ++lvl) {
    h *= 0.5;
    double add = 0.0;
    for (double tt = h; tt < 7.0; tt += 2.0 * h) add += eval(tt) + eval(-tt);
    const double next = 0.5 * result + add * h;
    if (std::fabs(next - result) <= 1e-15 * (1.0 + std::fabs(next)) && lvl > 3) {
      result = next;
      break;
    }
    result = next;
  }
  return result * half;
}

} // namespace poromech

#endif
