#ifndef POROMECH_CONSTITUTIVE_HPP
#define POROMECH_CONSTITUTIVE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "poromech/numerics.hpp"

namespace poromech {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Porosity bounds and phase contents
// ---------------------------------------------------------------------------

/// Hard porosity bounds 0 < lo < hi < 1 entering the multiplier graph.
struct PorosityBounds {
  double lo = 0.1;
  double hi = 0.4;

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  void validate() const {
    if (!(0.0 < lo && lo < hi && hi < 1.0))
      throw std::invalid_argument("porosity bounds must satisfy 0 < lo < hi < 1");
  }
};

/// Per-phase volume contents (phi_n, phi_w); porosity is their sum.
struct PhaseContentPair {
  double n = 0.0;
  double w = 0.0;

  double phi() const { return n + w; }
  double sn() const { return n / phi(); }
  double sw() const { return w / phi(); }

  bool in_k_phi(const PorosityBounds& b, double slack = 0.0) const {
    const double p = phi();
    return n >= -slack && w >= -slack && p >= b.lo - slack && p <= b.hi + slack;
  }
};

struct GammaTriple {
  double value;   // gamma(s)
  double d1;      // gamma'(s)
  double d2;      // gamma''(s)
};

struct HatPressures {
  double n;
  double w;
  bool selection = false;  // endpoint of the multivalued graph
};

struct KirchhoffPair {
  double xi;
  double psi;
};

// ---------------------------------------------------------------------------
// Capillary energy density models
// ---------------------------------------------------------------------------

namespace detail {

/// Fritsch-Carlson monotone cubic slopes for data (x_i, y_i).
inline std::vector<double> pchip_slopes(const std::vector<double>& x,
                                        const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / (x[1] - x[0]);
    return d;
  }
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) s = 0.0;
    else if (d0 * d1 <= 0.0 && std::fabs(s) > 3.0 * std::fabs(d0)) s = 3.0 * d0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

/// Antiderivative of sqrt(z(1-z)); used on clamp plateaus of the xi transform.
inline double sqrt_weight_antiderivative(double z) {
  z = std::clamp(z, 0.0, 1.0);
  const double r = std::sqrt(std::max(z * (1.0 - z), 0.0));
  return (std::asin(2.0 * z - 1.0) + 2.0 * (2.0 * z - 1.0) * r) / 8.0;
}

/// Antiderivative of z(1-z).
inline double poly_weight_antiderivative(double z) {
  return z * z / 2.0 - z * z * z / 3.0;
}

} // namespace detail

enum class CapillaryKind { BrooksCorey, Tabulated };

/// Capillary energy density gamma: [0,1] -> R_+, convex and increasing, with
/// gamma' the capillary pressure law. Brooks-Corey is the concrete default;
/// tabulated models interpolate gamma'' samples with a monotone cubic and
/// integrate the interpolant exactly.
class CapillaryModel {
public:
  static CapillaryModel brooks_corey(double entry_pressure, double lambda_bc,
                                     double gamma0 = 0.0) {
    if (!(entry_pressure > 0.0))
      throw std::invalid_argument("brooks-corey: entry pressure must be positive");
    if (!(lambda_bc > 1.0))
      throw std::invalid_argument("brooks-corey: exponent must exceed 1");
    CapillaryModel m;
    m.kind_ = CapillaryKind::BrooksCorey;
    m.pe_ = entry_pressure;
    m.lambda_ = lambda_bc;
    m.gamma0_ = gamma0;
    return m;
  }

  /// Tabulated gamma'' at knots covering [0,1]; gamma'(0) and gamma(0) close
  /// the two integration constants.
  static CapillaryModel tabulated(std::vector<double> knots,
                                  std::vector<double> d2_values,
                                  double gamma_prime0, double gamma0 = 0.0) {
    if (knots.size() < 2 || knots.size() != d2_values.size())
      throw std::invalid_argument("tabulated: need matching knot/value arrays");
    if (knots.front() != 0.0 || knots.back() != 1.0)
      throw std::invalid_argument("tabulated: knots must span [0,1]");
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
      if (!(knots[i] < knots[i + 1]))
        throw std::invalid_argument("tabulated: knots must be strictly increasing");
    for (double v : d2_values)
      if (!(v > 0.0))
        throw std::invalid_argument("tabulated: gamma'' samples must be positive");
    if (!(gamma_prime0 >= 0.0))
      throw std::invalid_argument("tabulated: gamma'(0) must be nonnegative");
    CapillaryModel m;
    m.kind_ = CapillaryKind::Tabulated;
    m.gamma0_ = gamma0;
    m.gp0_ = gamma_prime0;
    m.knots_ = std::move(knots);
    m.d2_ = std::move(d2_values);
    m.build_table();
    return m;
  }

  CapillaryKind kind() const { return kind_; }
  double entry_pressure() const { return pe_; }
  double exponent() const { return lambda_; }
  double gamma0() const { return gamma0_; }

  double gamma_value(double s) const {
    check_domain(s);
    if (kind_ == CapillaryKind::BrooksCorey) {
      const double q = 1.0 - 1.0 / lambda_;
      return gamma0_ + pe_ / q * (1.0 - std::pow(1.0 - s, q));
    }
    return table_eval(s).value;
  }

  /// gamma'(s); +inf at s=1 for Brooks-Corey.
  double gamma_prime(double s) const {
    check_domain(s);
    if (kind_ == CapillaryKind::BrooksCorey) {
      if (s >= 1.0) return kInf;
      return pe_ * std::pow(1.0 - s, -1.0 / lambda_);
    }
    return table_eval(s).d1;
  }

  /// gamma''(s); +inf at s=1 for Brooks-Corey.
  double gamma_second(double s) const {
    check_domain(s);
    if (kind_ == CapillaryKind::BrooksCorey) {
      if (s >= 1.0) return kInf;
      return pe_ / lambda_ * std::pow(1.0 - s, -1.0 / lambda_ - 1.0);
    }
    return table_eval(s).d2;
  }

  double gamma_prime_at_zero() const {
    return kind_ == CapillaryKind::BrooksCorey ? pe_ : gp0_;
  }
  double gamma_prime_at_one() const {
    return kind_ == CapillaryKind::BrooksCorey ? kInf : table_eval(1.0).d1;
  }

  bool derivative_diverges_at_one() const {
    return kind_ == CapillaryKind::BrooksCorey;
  }

  /// Knot grid of a tabulated model; {0,1} for Brooks-Corey.
  std::vector<double> smooth_pieces() const {
    if (kind_ == CapillaryKind::Tabulated) return knots_;
    return {0.0, 1.0};
  }

private:
  static void check_domain(double s) {
    if (!(s >= 0.0 && s <= 1.0))
      throw std::domain_error("capillary model: saturation outside [0,1]");
  }

  struct TableRow {
    double value, d1, d2;
  };

  void build_table() {
    slopes_ = detail::pchip_slopes(knots_, d2_);
    const std::size_t m = knots_.size() - 1;
    coef_.resize(m);
    cum_d1_.assign(m + 1, gp0_);
    cum_val_.assign(m + 1, gamma0_);
    for (std::size_t i = 0; i < m; ++i) {
      const double h = knots_[i + 1] - knots_[i];
      const double y0 = d2_[i], y1 = d2_[i + 1];
      const double m0 = slopes_[i], m1 = slopes_[i + 1];
      auto& c = coef_[i];
      c[0] = y0;
      c[1] = m0;
      c[2] = (-3.0 * y0 - 2.0 * h * m0 + 3.0 * y1 - h * m1) / (h * h);
      c[3] = (2.0 * y0 + h * m0 - 2.0 * y1 + h * m1) / (h * h * h);
      // exact integrals of the cubic over the segment
      const double I1 = c[0] * h + c[1] * h * h / 2.0 + c[2] * h * h * h / 3.0 +
                        c[3] * h * h * h * h / 4.0;
      const double I2 = c[0] * h * h / 2.0 + c[1] * h * h * h / 6.0 +
                        c[2] * h * h * h * h / 12.0 + c[3] * h * h * h * h * h / 20.0;
      cum_d1_[i + 1] = cum_d1_[i] + I1;
      cum_val_[i + 1] = cum_val_[i] + cum_d1_[i] * h + I2;
    }
  }

  TableRow table_eval(double s) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), s);
    std::size_t i = (it == knots_.begin()) ? 0 : std::size_t(it - knots_.begin()) - 1;
    i = std::min(i, knots_.size() - 2);
    const double x = s - knots_[i];
    const auto& c = coef_[i];
    TableRow r;
    r.d2 = c[0] + x * (c[1] + x * (c[2] + x * c[3]));
    const double J1 = c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 +
                      c[3] * x * x * x * x / 4.0;
    const double J2 = c[0] * x * x / 2.0 + c[1] * x * x * x / 6.0 +
                      c[2] * x * x * x * x / 12.0 + c[3] * x * x * x * x * x / 20.0;
    r.d1 = cum_d1_[i] + J1;
    r.value = cum_val_[i] + cum_d1_[i] * x + J2;
    return r;
  }

  CapillaryKind kind_ = CapillaryKind::BrooksCorey;
  double pe_ = 1.0;
  double lambda_ = 3.0;
  double gamma0_ = 0.0;
  double gp0_ = 0.0;
  std::vector<double> knots_, d2_, slopes_;
  std::vector<std::array<double, 4>> coef_;
  std::vector<double> cum_d1_, cum_val_;
};

/// Clamped regularization gamma_eps'' = min(1/eps, max(eps, gamma'')) with its
/// antiderivatives integrated exactly piecewise. Coincides with gamma wherever
/// the clamp is inactive.
class RegularizedModel {
public:
  RegularizedModel(CapillaryModel base, double eps) : base_(std::move(base)), eps_(eps) {
    if (!(eps > 0.0 && eps <= 0.25))
      throw std::invalid_argument("regularization parameter must lie in (0, 1/4]");
    build_pieces();
  }

  const CapillaryModel& base() const { return base_; }
  double eps() const { return eps_; }

  double gamma_second(double s) const {
    check_domain(s);
    double d2 = base_raw_d2(s);
    return std::min(1.0 / eps_, std::max(eps_, d2));
  }

  double gamma_prime(double s) const {
    check_domain(s);
    const Piece& p = locate(s);
    if (p.mode == Mode::Pass)
      return p.gp0 + (base_.gamma_prime(s) - p.base_gp0);
    return p.gp0 + p.clamp * (s - p.s0);
  }

  double gamma_value(double s) const {
    check_domain(s);
    const Piece& p = locate(s);
    const double x = s - p.s0;
    if (p.mode == Mode::Pass)
      return p.g0 + (p.gp0 - p.base_gp0) * x + (base_.gamma_value(s) - p.base_g0);
    return p.g0 + p.gp0 * x + 0.5 * p.clamp * x * x;
  }

  double gamma_prime_at_zero() const { return pieces_.front().gp0; }
  double gamma_prime_at_one() const { return gp_at_one_; }
  double gamma0() const { return base_.gamma0(); }
  bool derivative_diverges_at_one() const { return false; }

  /// Exact piecewise evaluation of the Kirchhoff transforms for the clamped
  /// density: closed forms on clamp plateaus, base quadrature elsewhere.
  KirchhoffPair kirchhoff(double s) const;

  struct Piece {
    enum class M { Lo, Hi, Pass } mode;
    double s0, s1;
    double clamp;     // constant value on Lo/Hi pieces
    double gp0, g0;   // gamma_eps', gamma_eps at s0
    double base_gp0, base_g0;  // base values at s0 (Pass pieces)
  };
  using Mode = Piece::M;
  const std::vector<Piece>& pieces() const { return pieces_; }

private:
  static void check_domain(double s) {
    if (!(s >= 0.0 && s <= 1.0))
      throw std::domain_error("regularized model: saturation outside [0,1]");
  }

  double base_raw_d2(double s) const {
    if (base_.kind() == CapillaryKind::BrooksCorey && s >= 1.0) return kInf;
    return base_.gamma_second(s);
  }

  const Piece& locate(double s) const {
    for (const auto& p : pieces_)
      if (s <= p.s1 || &p == &pieces_.back()) return p;
    return pieces_.back();
  }

  void build_pieces();

  CapillaryModel base_;
  double eps_;
  std::vector<Piece> pieces_;
  double gp_at_one_ = 0.0;
};

inline void RegularizedModel::build_pieces() {
  const double lo = eps_, hi = 1.0 / eps_;
  // collect clamp crossings; base gamma'' is piecewise smooth between knots
  std::vector<double> cuts{0.0, 1.0};
  if (base_.kind() == CapillaryKind::BrooksCorey) {
    const double pe = base_.entry_pressure(), lam = base_.exponent();
    const double expo = lam / (lam + 1.0);
    // gamma''(s) = (pe/lam)(1-s)^{-(lam+1)/lam}, increasing
    auto crossing = [&](double bound) {
      const double r = std::pow(bound * lam / pe, -expo);
      return 1.0 - r;
    };
    const double s_lo = crossing(lo);
    const double s_hi = crossing(hi);
    if (s_lo > 0.0 && s_lo < 1.0) cuts.push_back(s_lo);
    if (s_hi > 0.0 && s_hi < 1.0) cuts.push_back(s_hi);
  } else {
    const auto knots = base_.smooth_pieces();
    for (double k : knots)
      if (k > 0.0 && k < 1.0) cuts.push_back(k);
    // scan each knot segment for clamp crossings
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      const int ns = 16;
      for (double bound : {lo, hi}) {
        for (int j = 0; j < ns; ++j) {
          double a = knots[i] + (knots[i + 1] - knots[i]) * j / ns;
          double b = knots[i] + (knots[i + 1] - knots[i]) * (j + 1) / ns;
          double fa = base_.gamma_second(a) - bound;
          double fb = base_.gamma_second(b) - bound;
          if (fa == 0.0) cuts.push_back(a);
          if (fa * fb < 0.0) {
            for (int it = 0; it < 80; ++it) {
              const double m = 0.5 * (a + b);
              const double fm = base_.gamma_second(m) - bound;
              if (fa * fm <= 0.0) { b = m; fb = fm; } else { a = m; fa = fm; }
            }
            cuts.push_back(0.5 * (a + b));
          }
        }
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::fabs(a - b) < 1e-14; }),
             cuts.end());

  pieces_.clear();
  double gp = base_.gamma_prime_at_zero();
  double g = base_.gamma0();
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    Piece p;
    p.s0 = cuts[i];
    p.s1 = cuts[i + 1];
    const double smid = 0.5 * (p.s0 + p.s1);
    const double d2 = base_raw_d2(smid);
    if (d2 < lo) { p.mode = Mode::Lo; p.clamp = lo; }
    else if (d2 > hi) { p.mode = Mode::Hi; p.clamp = hi; }
    else { p.mode = Mode::Pass; p.clamp = 0.0; }
    p.gp0 = gp;
    p.g0 = g;
    p.base_gp0 = (p.mode == Mode::Pass) ? base_.gamma_prime(p.s0) : 0.0;
    p.base_g0 = (p.mode == Mode::Pass) ? base_.gamma_value(p.s0) : 0.0;
    const double len = p.s1 - p.s0;
    if (p.mode == Mode::Pass) {
      const double dgp = base_.gamma_prime(p.s1) - p.base_gp0;
      g = p.g0 + (p.gp0 - p.base_gp0) * len + (base_.gamma_value(p.s1) - p.base_g0);
      gp = p.gp0 + dgp;
    } else {
      g = p.g0 + p.gp0 * len + 0.5 * p.clamp * len * len;
      gp = p.gp0 + p.clamp * len;
    }
    pieces_.push_back(p);
  }
  gp_at_one_ = gp;
}

// ---------------------------------------------------------------------------
// Pointwise operations
// ---------------------------------------------------------------------------

/// (gamma, gamma', gamma'') at s. Throws EndpointDivergence where the
/// unregularized model has an infinite derivative.
template <class Model>
GammaTriple gamma_eval(const Model& m, double s) {
  GammaTriple t{m.gamma_value(s), m.gamma_prime(s), m.gamma_second(s)};
  if (!std::isfinite(t.d1) || !std::isfinite(t.d2))
    throw EndpointDivergence("gamma derivative diverges at the saturation endpoint");
  return t;
}

/// Phase pressure decomposition contributions hat p_alpha. Endpoints return
/// the finite selection of the multivalued graph, flagged.
template <class Model>
HatPressures hat_pressures(const Model& m, double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::domain_error("hat_pressures: saturation outside [0,1]");
  HatPressures hp;
  if (s == 0.0) {
    const double g0 = m.gamma_value(0.0);
    hp.n = g0 + m.gamma_prime_at_zero();
    hp.w = g0;
    hp.selection = true;
    return hp;
  }
  if (s == 1.0) {
    const double g1 = m.gamma_value(1.0);
    const double gp1 = m.gamma_prime_at_one();
    hp.n = g1;
    hp.w = std::isfinite(gp1) ? g1 - gp1 : -kInf;
    hp.selection = true;
    return hp;
  }
  const double g = m.gamma_value(s);
  const double gp = m.gamma_prime(s);
  hp.n = g + (1.0 - s) * gp;
  hp.w = g - s * gp;
  return hp;
}

namespace detail {

inline KirchhoffPair kirchhoff_brooks_corey(const CapillaryModel& m, double s) {
  const double pe = m.entry_pressure(), lam = m.exponent();
  KirchhoffPair k;
  // psi closed form: (pe/lam) * int_0^s z (1-z)^{-1/lam} dz
  {
    const double q1 = 1.0 - 1.0 / lam, q2 = 2.0 - 1.0 / lam;
    const double r = 1.0 - s;
    k.psi = pe / lam * ((1.0 - std::pow(r, q1)) / q1 - (1.0 - std::pow(r, q2)) / q2);
  }
  // xi: substitution u = (1-z)^alpha absorbs the endpoint singularity, then
  // u = 1 - v^2 removes the square-root kink, leaving a smooth integrand
  const double alpha = 0.5 - 1.0 / lam;
  if (!(alpha > 0.0))
    throw QuadratureError("xi transform requires a Brooks-Corey exponent above 2");
  const double u_s = std::pow(1.0 - s, alpha);
  const double inv_alpha = 1.0 / alpha;
  const double v_max = std::sqrt(std::max(0.0, 1.0 - u_s));
  auto g = [&](double v) {
    const double u = 1.0 - v * v;
    return 2.0 * v * std::sqrt(std::max(0.0, 1.0 - std::pow(u, inv_alpha)));
  };
  k.xi = pe / lam * inv_alpha * integrate_adaptive(g, 0.0, v_max, 1e-13);
  return k;
}

inline double kirchhoff_integral_generic(const CapillaryModel& m, double a, double b,
                                         bool sqrt_weight) {
  auto f = [&](double z) {
    const double w = sqrt_weight ? std::sqrt(std::max(z * (1.0 - z), 0.0))
                                 : z * (1.0 - z);
    return w * m.gamma_second(z);
  };
  return integrate_adaptive(f, a, b, 1e-12);
}

} // namespace detail

inline KirchhoffPair RegularizedModel::kirchhoff(double s) const {
  check_domain(s);
  KirchhoffPair k{0.0, 0.0};
  for (const auto& p : pieces_) {
    if (p.s0 >= s) break;
    const double b = std::min(s, p.s1);
    if (p.mode != Mode::Pass) {
      k.xi += p.clamp * (detail::sqrt_weight_antiderivative(b) -
                         detail::sqrt_weight_antiderivative(p.s0));
      k.psi += p.clamp * (detail::poly_weight_antiderivative(b) -
                          detail::poly_weight_antiderivative(p.s0));
    } else if (base_.kind() == CapillaryKind::BrooksCorey) {
      const auto kb = detail::kirchhoff_brooks_corey(base_, b);
      const auto ka = detail::kirchhoff_brooks_corey(base_, p.s0);
      k.xi += kb.xi - ka.xi;
      k.psi += kb.psi - ka.psi;
    } else {
      k.xi += detail::kirchhoff_integral_generic(base_, p.s0, b, true);
      k.psi += detail::kirchhoff_integral_generic(base_, p.s0, b, false);
    }
  }
  return k;
}

/// Kirchhoff transforms xi(s) = int sqrt(z(1-z)) gamma'' and
/// psi(s) = int z(1-z) gamma''.
inline KirchhoffPair kirchhoff_eval(const CapillaryModel& m, double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::domain_error("kirchhoff_eval: saturation outside [0,1]");
  if (s == 0.0) return {0.0, 0.0};
  if (m.kind() == CapillaryKind::BrooksCorey)
    return detail::kirchhoff_brooks_corey(m, s);
  KirchhoffPair k{0.0, 0.0};
  const auto knots = m.smooth_pieces();
  for (std::size_t i = 0; i + 1 < knots.size() && knots[i] < s; ++i) {
    const double b = std::min(s, knots[i + 1]);
    k.xi += detail::kirchhoff_integral_generic(m, knots[i], b, true);
    k.psi += detail::kirchhoff_integral_generic(m, knots[i], b, false);
  }
  return k;
}

inline KirchhoffPair kirchhoff_eval(const RegularizedModel& m, double s) {
  return m.kirchhoff(s);
}

/// Extended saturation map S(p): the continuous extension of (gamma')^{-1},
/// clamped to 0 below gamma'(0) and to 1 above gamma'(1).
template <class Model>
double saturation_from_capillary(const Model& m, double p) {
  const double gp0 = m.gamma_prime_at_zero();
  if (p <= gp0) return 0.0;
  const double gp1 = m.gamma_prime_at_one();
  if (std::isfinite(gp1) && p >= gp1) return 1.0;
  auto f = [&](double s) { return m.gamma_prime(s) - p; };
  auto df = [&](double s) { return m.gamma_second(s); };
  // keep the upper bracket away from a divergent endpoint
  double hi = 1.0;
  if (!std::isfinite(gp1)) {
    hi = 0.5;
    int guard = 0;
    while (f(hi) < 0.0) {
      hi = 0.5 * (1.0 + hi);
      if (++guard > 1000) return 1.0;  // p beyond double resolution of gamma'
    }
  }
  return solve_increasing(f, df, 0.0, hi, 1e-13);
}

/// Soft constraint G_eps(phi) = eps log((phi - lo)/(hi - phi)).
inline double soft_constraint_g(const PorosityBounds& b, double eps, double phi) {
  if (!(phi > b.lo && phi < b.hi))
    throw std::domain_error("soft constraint diverges at or outside the porosity bounds");
  return eps * std::log((phi - b.lo) / (b.hi - phi));
}

/// dG_eps/dphi, positive on (lo, hi), >= eps whenever hi - lo <= 4.
inline double soft_constraint_g_prime(const PorosityBounds& b, double eps, double phi) {
  return eps * (b.hi - b.lo) / ((phi - b.lo) * (b.hi - phi));
}

/// Inverse of G_eps; overflow-safe and mapped strictly inside (lo, hi).
inline double soft_constraint_g_inv(const PorosityBounds& b, double eps, double chi) {
  const double t = chi / eps;
  double phi;
  if (t >= 0.0) {
    const double e = std::exp(-t);
    phi = (b.lo * e + b.hi) / (1.0 + e);
  } else {
    const double e = std::exp(t);
    phi = (b.lo + b.hi * e) / (1.0 + e);
  }
  const double lo_in = std::nextafter(b.lo, 1.0);
  const double hi_in = std::nextafter(b.hi, 0.0);
  return std::clamp(phi, lo_in, hi_in);
}

/// Antiderivative of G_eps anchored at the midpoint (vanishes there).
inline double soft_constraint_antiderivative(const PorosityBounds& b, double eps,
                                             double z) {
  auto H = [&](double v) {
    const double a = v - b.lo, c = b.hi - v;
    const double ta = a > 0.0 ? a * std::log(a) : 0.0;
    const double tc = c > 0.0 ? c * std::log(c) : 0.0;
    return ta + tc;
  };
  if (!(z >= b.lo && z <= b.hi))
    throw std::domain_error("soft constraint antiderivative outside [lo, hi]");
  return eps * (H(z) - H(b.mid()));
}

/// Mobility floor k_eps(s) = max(eps, s).
inline double mobility_floor(double eps, double s) { return std::max(eps, s); }

/// Potential-to-content map Phi_eps: shifted potentials y_alpha = p_alpha - pi
/// to phase contents. Total on R^2 and Lipschitz for fixed eps.
inline PhaseContentPair phi_from_potentials(const RegularizedModel& reg,
                                            const PorosityBounds& b, double eps,
                                            double y_n, double y_w) {
  const double s_n = saturation_from_capillary(reg, y_n - y_w);
  const double s_w = 1.0 - s_n;
  const double arg = s_n * y_n + s_w * y_w - reg.gamma_value(s_n);
  const double phi = soft_constraint_g_inv(b, eps, arg);
  return {phi * s_n, phi * s_w};
}

/// 2x2 Jacobian d(phi_n, phi_w)/d(y_n, y_w) of Phi_eps; symmetric PSD. On
/// saturation plateaus the generalized derivative (zero slope) is used.
struct PhiJacobian {
  PhaseContentPair value;
  double j_nn, j_nw, j_ww;  // j_wn == j_nw
};

inline PhiJacobian phi_potentials_jacobian(const RegularizedModel& reg,
                                           const PorosityBounds& b, double eps,
                                           double y_n, double y_w,
                                           bool slant_plateau = false) {
  const double dp = y_n - y_w;
  const double s_n = saturation_from_capillary(reg, dp);
  const double s_w = 1.0 - s_n;
  const double arg = s_n * y_n + s_w * y_w - reg.gamma_value(s_n);
  const double phi = soft_constraint_g_inv(b, eps, arg);
  double s_slope = 0.0;
  if (s_n > 0.0 && s_n < 1.0) s_slope = 1.0 / reg.gamma_second(s_n);
  else if (slant_plateau) s_slope = 1.0 / reg.gamma_second(s_n <= 0.0 ? 0.0 : 1.0);
  const double g_prime = soft_constraint_g_prime(b, eps, phi);
  PhiJacobian J;
  J.value = {phi * s_n, phi * s_w};
  J.j_nn = s_n * s_n / g_prime + phi * s_slope;
  J.j_nw = s_n * s_w / g_prime - phi * s_slope;
  J.j_ww = s_w * s_w / g_prime + phi * s_slope;
  return J;
}

/// Regularized free energy density F_eps and its gradient DF_eps.
struct FEpsResult {
  double value;
  std::array<double, 2> grad;  // (dF/dphi_n, dF/dphi_w)
  bool boundary_selection = false;
};

inline FEpsResult f_eps_energy(const RegularizedModel& reg, const PorosityBounds& b,
                               double eps, const PhaseContentPair& pair) {
  if (!pair.in_k_phi(b, 1e-12))
    throw std::domain_error("f_eps_energy: contents outside K_phi (value is +inf)");
  const double phi = pair.phi();
  const double s_n = std::clamp(pair.n / phi, 0.0, 1.0);
  FEpsResult r;
  r.value = phi * reg.gamma_value(s_n) + soft_constraint_antiderivative(b, eps, phi);
  const double g_eps = (phi > b.lo && phi < b.hi)
                           ? soft_constraint_g(b, eps, phi)
                           : (phi <= b.lo ? -kInf : kInf);
  const auto hp = hat_pressures(reg, s_n);
  r.grad = {hp.n + g_eps, hp.w + g_eps};
  r.boundary_selection = hp.selection || !(phi > b.lo && phi < b.hi);
  return r;
}

/// Euclidean projection onto K_phi = {phi_n >= 0, phi_w >= 0,
/// lo <= phi_n + phi_w <= hi}; exhaustive over the boundary segments.
inline PhaseContentPair project_k_phi(const PhaseContentPair& p,
                                      const PorosityBounds& b) {
  if (p.in_k_phi(b)) return p;
  struct Seg {
    double ax, ay, bx, by;
  };
  const Seg segs[4] = {
      {b.lo, 0.0, b.hi, 0.0},  // phi_w = 0 face
      {0.0, b.lo, 0.0, b.hi},  // phi_n = 0 face
      {b.lo, 0.0, 0.0, b.lo},  // sum = lo face
      {b.hi, 0.0, 0.0, b.hi},  // sum = hi face
  };
  PhaseContentPair best{0.0, 0.0};
  double best_d2 = kInf;
  for (const auto& s : segs) {
    const double vx = s.bx - s.ax, vy = s.by - s.ay;
    const double len2 = vx * vx + vy * vy;
    double t = ((p.n - s.ax) * vx + (p.w - s.ay) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = s.ax + t * vx, qy = s.ay + t * vy;
    const double d2 = (p.n - qx) * (p.n - qx) + (p.w - qy) * (p.w - qy);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = {qx, qy};
    }
  }
  return best;
}

} // namespace poromech

#endif
