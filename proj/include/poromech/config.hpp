#ifndef POROMECH_CONFIG_HPP
#define POROMECH_CONFIG_HPP

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "poromech/stepper.hpp"

namespace poromech {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  std::vector<std::string> violations;
  explicit ValidationError(std::vector<std::string> v)
      : std::runtime_error("configuration violates model assumptions"),
        violations(std::move(v)) {}
};

// ---------------------------------------------------------------------------
// Small expression evaluator over (x, y)
// ---------------------------------------------------------------------------

/// Arithmetic expressions with +-*/^, parentheses, x/y variables, pi/e and
/// the usual scalar functions. Used for spatially varying configuration
/// fields.
class Expression {
public:
  explicit Expression(std::string text) : text_(std::move(text)) {
    pos_ = 0;
    root_ = parse_sum();
    skip_ws();
    if (pos_ != text_.size())
      throw ConfigError("expression: trailing characters at position " +
                        std::to_string(pos_) + " in '" + text_ + "'");
  }

  double operator()(double x, double y = 0.0) const { return eval(root_, x, y); }
  const std::string& text() const { return text_; }

private:
  struct Node {
    char op = 0;          // 0: leaf number, 'x','y': variable, else operator/function id
    double value = 0.0;
    int fn = -1;
    int a = -1, b = -1;   // child indices
  };

  static constexpr const char* kFnNames[] = {"sin", "cos", "tan", "exp", "log",
                                             "sqrt", "abs", "tanh", "sinh", "cosh"};

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int make(Node n) {
    nodes_.push_back(n);
    return int(nodes_.size()) - 1;
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (consume('+')) lhs = make({'+', 0, -1, lhs, parse_product()});
      else if (consume('-')) lhs = make({'-', 0, -1, lhs, parse_product()});
      else return lhs;
    }
  }
  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (consume('*')) lhs = make({'*', 0, -1, lhs, parse_unary()});
      else if (consume('/')) lhs = make({'/', 0, -1, lhs, parse_unary()});
      else return lhs;
    }
  }
  // unary minus binds looser than '^': -x^2 is -(x^2)
  int parse_unary() {
    if (consume('-')) return make({'n', 0, -1, parse_unary(), -1});
    (void)consume('+');
    return parse_power();
  }
  int parse_power() {
    int base = parse_primary();
    if (consume('^')) return make({'^', 0, -1, base, parse_unary()});
    return base;
  }
  int parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ConfigError("expression: unexpected end in '" + text_ + "'");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(text_.substr(pos_), &used);
      pos_ += used;
      return make({0, v, -1, -1, -1});
    }
    if (c == '(') {
      ++pos_;
      const int inner = parse_sum();
      if (!consume(')')) throw ConfigError("expression: missing ')' in '" + text_ + "'");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_'))
        ++end;
      const std::string name = text_.substr(pos_, end - pos_);
      pos_ = end;
      if (name == "x") return make({'x', 0, -1, -1, -1});
      if (name == "y") return make({'y', 0, -1, -1, -1});
      if (name == "pi") return make({0, 3.14159265358979323846, -1, -1, -1});
      if (name == "e") return make({0, 2.71828182845904523536, -1, -1, -1});
      for (int f = 0; f < 10; ++f)
        if (name == kFnNames[f]) {
          if (!consume('(')) throw ConfigError("expression: '" + name + "' needs '('");
          const int arg = parse_sum();
          if (!consume(')')) throw ConfigError("expression: missing ')' after '" + name + "'");
          return make({'f', 0, f, arg, -1});
        }
      throw ConfigError("expression: unknown identifier '" + name + "'");
    }
    throw ConfigError(std::string("expression: unexpected character '") + c + "' in '" +
                      text_ + "'");
  }

  double eval(int id, double x, double y) const {
    const Node& n = nodes_[std::size_t(id)];
    switch (n.op) {
      case 0: return n.value;
      case 'x': return x;
      case 'y': return y;
      case 'n': return -eval(n.a, x, y);
      case '+': return eval(n.a, x, y) + eval(n.b, x, y);
      case '-': return eval(n.a, x, y) - eval(n.b, x, y);
      case '*': return eval(n.a, x, y) * eval(n.b, x, y);
      case '/': return eval(n.a, x, y) / eval(n.b, x, y);
      case '^': return std::pow(eval(n.a, x, y), eval(n.b, x, y));
      case 'f': {
        const double v = eval(n.a, x, y);
        switch (n.fn) {
          case 0: return std::sin(v);
          case 1: return std::cos(v);
          case 2: return std::tan(v);
          case 3: return std::exp(v);
          case 4: return std::log(v);
          case 5: return std::sqrt(v);
          case 6: return std::fabs(v);
          case 7: return std::tanh(v);
          case 8: return std::sinh(v);
          case 9: return std::cosh(v);
        }
        break;
      }
    }
    throw std::logic_error("expression: corrupt node");
  }

  std::string text_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// ---------------------------------------------------------------------------
// Configuration document
// ---------------------------------------------------------------------------

/// Scenario configuration; plain `key = value` lines, '#' comments, unknown
/// keys rejected. Nondimensional by default (all scales one).
struct Config {
  // mesh and boundary partitions
  std::string mesh_kind = "rectangle";  // rectangle | interval
  int nx = 8, ny = 8;
  double lx = 1.0, ly = 1.0;
  std::vector<int> flow_dirichlet{side::left};
  std::vector<int> mech_dirichlet{side::left};
  // constants
  double viscosity_n = 1.0, viscosity_w = 1.0;
  double density_n = 1.0, density_w = 1.0;
  double gravity_x = 0.0, gravity_y = 0.0;
  double lame_mu = 1.0, lame_lambda = 10.0;
  double biot_b = 1.0, biot_M = 0.5;
  double phi_lo = 0.1, phi_hi = 0.4;
  double k0 = 1.0;
  std::string permeability_law = "kozeny-carman";  // or constant
  // capillary model
  std::string capillary = "brooks-corey";  // or tabulated
  double entry_pressure = 1.0, bc_lambda = 3.0, gamma0 = 0.0;
  std::vector<double> table_s, table_d2;
  double table_gamma_prime0 = 0.0;
  // fields (expressions in x, y; or file:<path> with one value per vertex)
  std::string phi_ref = "0.25";
  std::string rock_density = "1.0";
  std::string f_ext_x = "0", f_ext_y = "0";
  std::string phi_n0 = "0.05", phi_w0 = "0.2";
  std::string p_dirichlet_n = "0", p_dirichlet_w = "0";
  // stepping
  StepControls controls;
  int n_steps = 10;
  // output and reproducibility
  std::string out_dir = "out";
  int snapshot_every = 0;  // 0: every step up to 100 steps, else ceil(N/100)
  unsigned long seed = 0;
  int audit_samples = 32;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline int side_from_name(const std::string& name, int line_no) {
  if (name == "left") return side::left;
  if (name == "right") return side::right;
  if (name == "bottom") return side::bottom;
  if (name == "top") return side::top;
  throw ConfigError("line " + std::to_string(line_no) + ": unknown side '" + name + "'");
}

inline double to_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line_no) + ": expected a number, got '" +
                      s + "'");
  }
}

inline long to_long(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line_no) + ": expected an integer, got '" +
                      s + "'");
  }
}

} // namespace detail

inline void apply_config_entry(Config& c, const std::string& key, const std::string& value,
                               int line_no) {
  {
    const auto toks = detail::split_ws(value);
    auto need = [&](std::size_t n) {
      if (toks.size() != n)
        throw ConfigError("line " + std::to_string(line_no) + ": '" + key + "' expects " +
                          std::to_string(n) + " token(s)");
    };

    if (key == "mesh") {
      if (toks.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty mesh spec");
      c.mesh_kind = toks[0];
      if (c.mesh_kind == "interval") {
        need(2);
        c.nx = int(detail::to_long(toks[1], line_no));
      } else if (c.mesh_kind == "rectangle") {
        need(3);
        c.nx = int(detail::to_long(toks[1], line_no));
        c.ny = int(detail::to_long(toks[2], line_no));
      } else {
        throw ConfigError("line " + std::to_string(line_no) + ": mesh must be interval or rectangle");
      }
    } else if (key == "domain") {
      if (toks.size() == 1) {
        c.lx = detail::to_double(toks[0], line_no);
      } else {
        need(2);
        c.lx = detail::to_double(toks[0], line_no);
        c.ly = detail::to_double(toks[1], line_no);
      }
    } else if (key == "flow_dirichlet" || key == "mech_dirichlet") {
      std::vector<int> sides;
      for (const auto& t : toks)
        if (t != "none") sides.push_back(detail::side_from_name(t, line_no));
      (key == "flow_dirichlet" ? c.flow_dirichlet : c.mech_dirichlet) = sides;
    } else if (key == "gravity") {
      need(2);
      c.gravity_x = detail::to_double(toks[0], line_no);
      c.gravity_y = detail::to_double(toks[1], line_no);
    } else if (key == "eps_schedule") {
      if (toks.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty eps schedule");
      c.controls.eps_schedule.clear();
      for (const auto& t : toks)
        c.controls.eps_schedule.push_back(detail::to_double(t, line_no));
    } else if (key == "capillary_table_s" || key == "capillary_table_d2") {
      auto& dst = (key == "capillary_table_s") ? c.table_s : c.table_d2;
      dst.clear();
      for (const auto& t : toks) dst.push_back(detail::to_double(t, line_no));
    } else {
      auto set_double = [&](double& dst) { need(1); dst = detail::to_double(toks[0], line_no); };
      auto set_int = [&](int& dst) { need(1); dst = int(detail::to_long(toks[0], line_no)); };
      auto set_expr = [&](std::string& dst) { dst = value; };
      if (key == "viscosity_n") set_double(c.viscosity_n);
      else if (key == "viscosity_w") set_double(c.viscosity_w);
      else if (key == "density_n") set_double(c.density_n);
      else if (key == "density_w") set_double(c.density_w);
      else if (key == "lame_mu") set_double(c.lame_mu);
      else if (key == "lame_lambda") set_double(c.lame_lambda);
      else if (key == "biot_b") set_double(c.biot_b);
      else if (key == "biot_M") set_double(c.biot_M);
      else if (key == "phi_lo") set_double(c.phi_lo);
      else if (key == "phi_hi") set_double(c.phi_hi);
      else if (key == "k0") set_double(c.k0);
      else if (key == "permeability_law") { need(1); c.permeability_law = toks[0]; }
      else if (key == "capillary") { need(1); c.capillary = toks[0]; }
      else if (key == "entry_pressure") set_double(c.entry_pressure);
      else if (key == "bc_lambda") set_double(c.bc_lambda);
      else if (key == "gamma0") set_double(c.gamma0);
      else if (key == "table_gamma_prime0") set_double(c.table_gamma_prime0);
      else if (key == "phi_ref") set_expr(c.phi_ref);
      else if (key == "rock_density") set_expr(c.rock_density);
      else if (key == "f_ext_x") set_expr(c.f_ext_x);
      else if (key == "f_ext_y") set_expr(c.f_ext_y);
      else if (key == "phi_n0") set_expr(c.phi_n0);
      else if (key == "phi_w0") set_expr(c.phi_w0);
      else if (key == "p_dirichlet_n") set_expr(c.p_dirichlet_n);
      else if (key == "p_dirichlet_w") set_expr(c.p_dirichlet_w);
      else if (key == "h") set_double(c.controls.h);
      else if (key == "n_steps") set_int(c.n_steps);
      else if (key == "newton_tol") set_double(c.controls.newton_tol);
      else if (key == "newton_max") set_int(c.controls.newton_max);
      else if (key == "fp_tol") set_double(c.controls.fp_tol);
      else if (key == "fp_max") set_int(c.controls.fp_max);
      else if (key == "fp_relax") set_double(c.controls.fp_relax);
      else if (key == "h_max") set_double(c.controls.h_max);
      else if (key == "h_eps2_max") set_double(c.controls.h_eps2_max);
      else if (key == "out_dir") { need(1); c.out_dir = toks[0]; }
      else if (key == "snapshot_every") set_int(c.snapshot_every);
      else if (key == "seed") { need(1); c.seed = std::stoul(toks[0]); }
      else if (key == "audit_samples") set_int(c.audit_samples);
      else if (key == "eps_final") {
        // convenience override: truncate the schedule at this final level
        need(1);
        const double ef = detail::to_double(toks[0], line_no);
        std::vector<double> sched;
        for (double e : c.controls.eps_schedule)
          if (e > ef) sched.push_back(e);
        sched.push_back(ef);
        c.controls.eps_schedule = sched;
      }
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
}

inline Config load_config(std::istream& is) {
  Config c;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!detail::split_ws(line).empty())
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_entry(c, key, value, line_no);
  }
  return c;
}

inline Config load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return load_config(f);
}

/// Canonical serialization used for the manifest hash.
inline std::string canonical_config_text(const Config& c) {
  std::ostringstream os;
  os.precision(17);
  os << "mesh=" << c.mesh_kind << ' ' << c.nx << ' ' << c.ny << '\n'
     << "domain=" << c.lx << ' ' << c.ly << '\n';
  os << "flow_dirichlet=";
  for (int s : c.flow_dirichlet) os << s << ' ';
  os << "\nmech_dirichlet=";
  for (int s : c.mech_dirichlet) os << s << ' ';
  os << "\nvisc=" << c.viscosity_n << ' ' << c.viscosity_w << "\nrho=" << c.density_n
     << ' ' << c.density_w << "\ng=" << c.gravity_x << ' ' << c.gravity_y << "\nlame="
     << c.lame_mu << ' ' << c.lame_lambda << "\nbiot=" << c.biot_b << ' ' << c.biot_M
     << "\nbounds=" << c.phi_lo << ' ' << c.phi_hi << "\nperm=" << c.permeability_law
     << ' ' << c.k0 << "\ncap=" << c.capillary << ' ' << c.entry_pressure << ' '
     << c.bc_lambda << ' ' << c.gamma0 << "\nphi_ref=" << c.phi_ref << "\nrho_s="
     << c.rock_density << "\nf_ext=" << c.f_ext_x << ';' << c.f_ext_y << "\ninit="
     << c.phi_n0 << ';' << c.phi_w0 << "\npD=" << c.p_dirichlet_n << ';'
     << c.p_dirichlet_w << "\nh=" << c.controls.h << "\nsteps=" << c.n_steps << "\neps=";
  for (double e : c.controls.eps_schedule) os << e << ' ';
  os << "\ntol=" << c.controls.newton_tol << ' ' << c.controls.newton_max << ' '
     << c.controls.fp_tol << ' ' << c.controls.fp_max << ' ' << c.controls.fp_relax
     << "\ncaps=" << c.controls.h_max << ' ' << c.controls.h_eps2_max << "\nseed="
     << c.seed << "\n";
  return os.str();
}

inline std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

/// One validation line per violated machine-checkable clause of the model
/// assumptions; empty means the configuration is admissible. The weak
/// coupling condition is estimate-based and reported as a warning by the
/// caller, not here.
inline std::vector<std::string> validate_config(const Config& c) {
  std::vector<std::string> v;
  auto fail = [&](const std::string& msg) { v.push_back(msg); };

  if (c.mesh_kind == "interval") {
    if (c.nx < 1) fail("mesh: interval needs n >= 1");
  } else if (c.nx < 1 || c.ny < 1) {
    fail("mesh: rectangle needs nx, ny >= 1");
  }
  if (!(c.lx > 0.0) || (c.mesh_kind == "rectangle" && !(c.ly > 0.0)))
    fail("mesh: domain lengths must be positive");

  if (!(c.viscosity_n > 0.0 && c.viscosity_w > 0.0))
    fail("(H1) viscosities must be positive constants");
  if (!(c.density_n > 0.0 && c.density_w > 0.0))
    fail("(H1) densities must be positive constants");
  if (!(c.lame_mu > 0.0 && c.lame_lambda > 0.0))
    fail("(H1) Lame coefficients must be positive constants");
  if (!(c.biot_M > 0.0)) fail("(H1) the Biot modulus must be positive");
  if (!(c.biot_b > 0.0 && c.biot_b <= 1.0))
    fail("(H1) the Biot coefficient belongs to (0,1]");
  if (!(0.0 < c.phi_lo && c.phi_lo < c.phi_hi && c.phi_hi < 1.0))
    fail("(H1) porosity bounds must satisfy 0 < phi_lo < phi_hi < 1");

  if (c.capillary == "brooks-corey") {
    if (!(c.entry_pressure > 0.0)) fail("(H2) entry pressure must be positive");
    if (!(c.bc_lambda > 2.0))
      fail("(H2) sqrt(1-s) gamma'' must belong to L1(0,1): brooks-corey needs lambda > 2");
    if (!(c.gamma0 >= 0.0)) fail("(H2) gamma(0) must be nonnegative");
  } else if (c.capillary == "tabulated") {
    if (c.table_s.size() < 2 || c.table_s.size() != c.table_d2.size())
      fail("(H2) tabulated capillary model needs matching knot and value lists");
    for (double d2 : c.table_d2)
      if (!(d2 > 0.0)) {
        fail("(H2) gamma must be strictly convex: tabulated gamma'' must be positive");
        break;
      }
    if (!(c.table_gamma_prime0 >= 0.0)) fail("(H2) gamma'(0) must be nonnegative");
  } else {
    fail("(H2) capillary model must be brooks-corey or tabulated");
  }

  if (c.permeability_law != "kozeny-carman" && c.permeability_law != "constant")
    fail("(H3) permeability law must be kozeny-carman or constant");
  if (!(c.k0 > 0.0)) fail("(H3) permeability scale must be positive");

  if (c.mech_dirichlet.empty())
    fail("(H6) the mechanics Dirichlet part must have positive measure");

  try {
    c.controls.validate();
  } catch (const std::exception& e) {
    fail(std::string("stepper controls: ") + e.what());
  }
  if (c.controls.h > c.controls.h_max)
    fail("stepper: h exceeds the configured smallness cap h_max");
  if (!c.controls.eps_schedule.empty() &&
      c.controls.h * c.controls.eps_schedule.front() * c.controls.eps_schedule.front() >
          c.controls.h_eps2_max)
    fail("stepper: h*eps^2 exceeds its configured smallness cap");
  if (c.n_steps < 0) fail("n_steps must be nonnegative");

  // expression syntax; field-value checks need the mesh and run at build time
  for (const auto* e : {&c.phi_ref, &c.rock_density, &c.f_ext_x, &c.f_ext_y, &c.phi_n0,
                        &c.phi_w0, &c.p_dirichlet_n, &c.p_dirichlet_w}) {
    if (e->rfind("file:", 0) == 0) continue;
    try {
      (void)Expression(*e);
    } catch (const std::exception& ex) {
      fail(std::string("field expression '") + *e + "': " + ex.what());
    }
  }
  return v;
}

/// Human-readable mapping of assumption clauses to validation rules,
/// including the clauses that hold by construction.
inline std::vector<std::string> explain_validation() {
  return {
      "(H1) positivity of viscosities, densities, Lame constants, Biot modulus: checked",
      "(H1) Biot coefficient in (0,1]: checked",
      "(H1) porosity bounds 0 < phi_lo < phi_hi < 1: checked",
      "(H1) reference porosity inside the bounds: checked nodally at build time",
      "(H2) capillary energy density convex increasing: checked via model parameters",
      "(H2) integrability sqrt(1-s) gamma'' in L1: brooks-corey exponent > 2",
      "(H3) permeability bounds K_lo, K_hi positive on [phi_lo, phi_hi]: by the law",
      "(H4) initial contents nonnegative with phi0 in [phi_lo, phi_hi]: checked nodally",
      "(H4) initial displacement/compression from the constrained minimization: by construction",
      "(H5) Dirichlet pressures time-independent: by construction of the data model",
      "(H6) mechanics Dirichlet part nonempty: checked",
      "(H6) elliptic regularity constant: estimated numerically, advisory only",
      "(H7) weak coupling lambda > M b^2 C1: estimate-based warning",
      "(H8) external body force is a nodal L2 field: by construction",
      "eps schedule in (0, 1/4], strictly decreasing: checked",
      "smallness caps h <= h_max and h eps^2 <= cap: checked",
  };
}

} // namespace poromech

#endif
