#ifndef POROMECH_STEPPER_HPP
#define POROMECH_STEPPER_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "poromech/diagnostics.hpp"

namespace poromech {

struct StepControls {
  double h = 0.01;
  std::vector<double> eps_schedule{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  double newton_tol = 1e-10;
  int newton_max = 50;
  double fp_tol = 1e-8;
  int fp_max = 60;
  double fp_relax = 1.0;
  double h_max = 1e-1;        // smallness cap on the time step
  double h_eps2_max = 1e-3;   // smallness cap on h eps^2

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("time step must be positive");
    if (eps_schedule.empty())
      throw std::invalid_argument("eps schedule must be nonempty");
    for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
      if (!(eps_schedule[i] > 0.0 && eps_schedule[i] <= 0.25))
        throw std::invalid_argument("eps schedule entries must lie in (0, 1/4]");
      if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
        throw std::invalid_argument("eps schedule must be strictly decreasing");
    }
    if (!(fp_relax > 0.0 && fp_relax <= 1.0))
      throw std::invalid_argument("relaxation factor must lie in (0, 1]");
  }
};

struct StepFailure : std::runtime_error {
  double best_residual = kInf;
  std::vector<double> trace;
  StepFailure(const std::string& what, double best, std::vector<double> tr)
      : std::runtime_error(what), best_residual(best), trace(std::move(tr)) {}
};

/// Frozen mobility/permeability/gravity data of the inner solve. Raw iterates
/// are projected onto K_phi nodewise before forming the frozen porosity and
/// saturations.
struct FrozenData {
  Vec raw_n, raw_w;       // current outer iterate, unprojected
  Vec proj_n, proj_w;     // projected contents
  Vec u_tilde;            // frozen displacement (vector dofs)
  Vec phi_cell;           // barycenter porosity of the projected pair
  Vec sn_cell;            // barycenter saturation
};

inline FrozenData make_frozen(const Spaces& sp, const MaterialParams& p, Vec raw_n,
                              Vec raw_w, Vec u_tilde) {
  const Mesh& mesh = *sp.mesh;
  FrozenData f;
  f.raw_n = std::move(raw_n);
  f.raw_w = std::move(raw_w);
  f.u_tilde = std::move(u_tilde);
  f.proj_n.resize(mesh.n_vertices());
  f.proj_w.resize(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const auto pr = project_k_phi({f.raw_n[i], f.raw_w[i]}, p.bounds);
    f.proj_n[i] = pr.n;
    f.proj_w[i] = pr.w;
  }
  const Vec phi_nodal = f.proj_n + f.proj_w;
  f.phi_cell = cell_means(mesh, phi_nodal);
  const Vec n_cell = cell_means(mesh, f.proj_n);
  f.sn_cell.resize(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c)
    f.sn_cell[c] = std::clamp(n_cell[c] / f.phi_cell[c], 0.0, 1.0);
  return f;
}

/// Unknowns of one frozen solve. Pressures are stored as full nodal fields
/// whose Dirichlet entries carry p^D (the free part is the offset p°);
/// theta and pi live cellwise, pi is lifted to nodes wherever the
/// constitutive map needs pointwise values.
struct StepUnknowns {
  Vec p_n, p_w;   // nodal
  Vec u;          // vector dofs, zero on the mechanics Dirichlet part
  Vec theta;      // cellwise
  Vec pi_cell;    // cellwise
};

/// One backward-Euler step at frozen coefficients: the strongly monotone
/// map in (p_n, p_w, u, theta, pi), solved by damped Newton with the exact
/// generalized Jacobian of the potential-to-content map.
class FrozenStepSolver {
public:
  FrozenStepSolver(const Spaces& sp, const MaterialParams& p, const RegularizedModel& reg,
                   double h, const FrozenData& frozen, const Vec& phi_n_prev,
                   const Vec& phi_w_prev)
      : sp_(sp), p_(p), reg_(reg), prev_n_(phi_n_prev), prev_w_(phi_w_prev) {
    const Mesh& mesh = *sp.mesh;
    w_ = lumped_mass_weights(mesh);
    vol_.resize(mesh.n_cells());
    for (int c = 0; c < mesh.n_cells(); ++c) vol_[c] = mesh.cell_volume(c);

    cells_of_vertex_.assign(std::size_t(mesh.n_vertices()), {});
    for (int c = 0; c < mesh.n_cells(); ++c)
      for (int k = 0; k < mesh.verts_per_cell(); ++k)
        cells_of_vertex_[std::size_t(mesh.cells[std::size_t(c)][std::size_t(k)])].push_back(c);

    const Vec K = permeability(p, frozen.phi_cell);
    coeff_n_.resize(mesh.n_cells());
    coeff_w_.resize(mesh.n_cells());
    for (int c = 0; c < mesh.n_cells(); ++c) {
      coeff_n_[c] = mobility_floor(reg.eps(), frozen.sn_cell[c]) / p.mu_n * K[c];
      coeff_w_[c] = mobility_floor(reg.eps(), 1.0 - frozen.sn_cell[c]) / p.mu_w * K[c];
    }
    A_n_ = assemble_stiffness(sp.flow, &coeff_n_).mat * h;
    A_w_ = assemble_stiffness(sp.flow, &coeff_w_).mat * h;
    E_ = assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda).mat;
    B_ = assemble_div_cell(sp.mech, p.biot_b).mat;

    grav_n_.resize(mesh.n_vertices());
    grav_w_.resize(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      Eigen::Vector2d xu = mesh.vertices[std::size_t(i)];
      for (int a = 0; a < mesh.dim; ++a) xu[a] += frozen.u_tilde[sp.mech.dof(i, a)];
      grav_n_[i] = p.rho_n * p.gravity.head(2).dot(xu);
      grav_w_[i] = p.rho_w * p.gravity.head(2).dot(xu);
    }
    f_tilde_ = body_force(sp, p, frozen.proj_n, frozen.proj_w);
    load_u_ = vector_load(sp, f_tilde_);
    phir_cell_ = cell_means(mesh, p.phi_ref);

    n_flow_ = sp.flow.n_free();
    n_mech_ = sp.mech.n_free();
    n_cells_ = mesh.n_cells();
    off_pw_ = n_flow_;
    off_u_ = 2 * n_flow_;
    off_th_ = off_u_ + n_mech_;
    off_pi_ = off_th_ + n_cells_;
    total_ = off_pi_ + n_cells_;
    build_constant_triplets();
  }

  int system_size() const { return total_; }
  const Vec& coeff_n() const { return coeff_n_; }
  const Vec& coeff_w() const { return coeff_w_; }
  const Vec& grav_n() const { return grav_n_; }
  const Vec& grav_w() const { return grav_w_; }
  const Vec& frozen_body_force() const { return f_tilde_; }

  Vec lift_pi(const Vec& pi_cell) const {
    const Mesh& mesh = *sp_.mesh;
    Vec out = Vec::Zero(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      double acc = 0.0;
      for (int c : cells_of_vertex_[std::size_t(i)])
        acc += vol_[c] / mesh.verts_per_cell() * pi_cell[c];
      out[i] = acc / w_[i];
    }
    return out;
  }

  /// Nodal contents Phi_eps(p - pi) of an unknown vector.
  void contents(const StepUnknowns& y, Vec& phi_n, Vec& phi_w) const {
    const Mesh& mesh = *sp_.mesh;
    const Vec pl = lift_pi(y.pi_cell);
    phi_n.resize(mesh.n_vertices());
    phi_w.resize(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      const auto pr = phi_from_potentials(reg_, p_.bounds, reg_.eps(), y.p_n[i] - pl[i],
                                          y.p_w[i] - pl[i]);
      phi_n[i] = pr.n;
      phi_w[i] = pr.w;
    }
  }

  Vec residual(const StepUnknowns& y) const {
    const Mesh& mesh = *sp_.mesh;
    Vec phi_n, phi_w;
    contents(y, phi_n, phi_w);
    Vec r = Vec::Zero(total_);

    const Vec fn = A_n_ * Vec(y.p_n - grav_n_);
    const Vec fw = A_w_ * Vec(y.p_w - grav_w_);
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      const int k = sp_.flow.free_index[std::size_t(i)];
      if (k < 0) continue;
      r[k] = w_[i] * (phi_n[i] - prev_n_[i]) + fn[i];
      r[off_pw_ + k] = w_[i] * (phi_w[i] - prev_w_[i]) + fw[i];
    }

    const Vec ru = E_ * y.u - B_ * y.pi_cell - load_u_;
    for (int d = 0; d < sp_.mech.n_total(); ++d) {
      const int k = sp_.mech.free_index[std::size_t(d)];
      if (k >= 0) r[off_u_ + k] = ru[d];
    }

    const Vec divu = cell_divergence(sp_.mech, y.u);
    const Vec phi_cell = cell_means(mesh, Vec(phi_n + phi_w));
    for (int c = 0; c < n_cells_; ++c) {
      r[off_th_ + c] = vol_[c] * 2.0 * (p_.biot_M * y.theta[c] - y.pi_cell[c]);
      r[off_pi_ + c] = vol_[c] * (-phi_cell[c] + phir_cell_[c] + p_.biot_b * divu[c] +
                                  y.pi_cell[c] / p_.biot_M);
    }
    return r;
  }

  struct NewtonResult {
    StepUnknowns y;
    int iters = 0;
    double residual_norm = kInf;
    std::vector<double> trace;
  };

  NewtonResult newton(StepUnknowns y, const StepControls& ctl) const {
    NewtonResult res;
    Vec r = residual(y);
    double rn = r.norm();
    res.trace.push_back(rn);
    bool slant = false;
    int stalls = 0;
    for (int it = 0; it < ctl.newton_max; ++it) {
      if (rn <= ctl.newton_tol) break;
      const SpMat J = jacobian(y, slant);
      Eigen::SparseLU<SpMat> lu(J);
      if (lu.info() != Eigen::Success)
        throw StepFailure("frozen step: singular Newton matrix", rn, res.trace);
      const Vec delta = lu.solve(Vec(-r));
      double t = 1.0;
      StepUnknowns y_best = y;
      Vec r_best = r;
      double rn_best = rn;
      for (int ls = 0; ls < 40; ++ls) {
        StepUnknowns yt = apply_delta(y, delta, t);
        Vec rt = residual(yt);
        const double rtn = rt.norm();
        if (rtn < rn_best) {
          y_best = std::move(yt);
          r_best = std::move(rt);
          rn_best = rtn;
        }
        if (rtn <= (1.0 - 1e-4 * t) * rn) break;
        t *= 0.5;
      }
      const bool progress = rn_best <= (1.0 - 1e-4) * rn;
      if (!progress) {
        if (!slant) {
          // plateau chattering: retry with the slanted plateau derivative
          slant = true;
          res.trace.push_back(rn);
          res.iters = it + 1;
          continue;
        }
        if (++stalls >= 4)
          throw StepFailure("frozen step: Newton stagnated", rn_best, res.trace);
      } else {
        stalls = 0;
        if (slant && rn_best <= 1e-2 * rn) slant = false;  // back to the exact map
      }
      y = std::move(y_best);
      r = std::move(r_best);
      rn = rn_best;
      res.trace.push_back(rn);
      res.iters = it + 1;
    }
    if (rn > ctl.newton_tol)
      throw StepFailure("frozen step: Newton did not reach its tolerance", rn, res.trace);
    res.y = std::move(y);
    res.residual_norm = rn;
    return res;
  }

  /// Generalized Jacobian of the frozen map at y (nonsymmetric; its
  /// symmetric part is positive semidefinite by the monotonicity identity).
  /// With slant = true, saturation plateaus use the one-sided interior slope
  /// instead of the zero generalized derivative; the exact map is kept for
  /// local convergence and the slant serves as a globalization fallback when
  /// iterates chatter across the plateau kinks.
  SpMat jacobian(const StepUnknowns& y, bool slant = false) const {
    const Mesh& mesh = *sp_.mesh;
    const int vpc = mesh.verts_per_cell();
    std::vector<Triplet> trip = const_trip_;
    const Vec pl = lift_pi(y.pi_cell);
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      const auto J = phi_potentials_jacobian(reg_, p_.bounds, reg_.eps(), y.p_n[i] - pl[i],
                                             y.p_w[i] - pl[i], slant);
      const double row_n = J.j_nn + J.j_nw;  // d phi_n / d(common shift)
      const double row_w = J.j_nw + J.j_ww;
      const double jsum = row_n + row_w;
      const int k = sp_.flow.free_index[std::size_t(i)];
      if (k >= 0) {
        trip.emplace_back(k, k, w_[i] * J.j_nn);
        trip.emplace_back(k, off_pw_ + k, w_[i] * J.j_nw);
        trip.emplace_back(off_pw_ + k, k, w_[i] * J.j_nw);
        trip.emplace_back(off_pw_ + k, off_pw_ + k, w_[i] * J.j_ww);
      }
      for (int c : cells_of_vertex_[std::size_t(i)]) {
        const double share = vol_[c] / vpc;
        if (k >= 0) {
          trip.emplace_back(k, off_pi_ + c, -row_n * share);
          trip.emplace_back(off_pw_ + k, off_pi_ + c, -row_w * share);
          trip.emplace_back(off_pi_ + c, k, -share * row_n);
          trip.emplace_back(off_pi_ + c, off_pw_ + k, -share * row_w);
        }
        // phi at vertex i depends on pi in every cell adjacent to i
        for (int c2 : cells_of_vertex_[std::size_t(i)]) {
          const double share2 = vol_[c2] / vpc;
          trip.emplace_back(off_pi_ + c, off_pi_ + c2, share * jsum * share2 / w_[i]);
        }
      }
    }
    SpMat J(total_, total_);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }

  StepUnknowns apply_delta(const StepUnknowns& y, const Vec& delta, double t) const {
    StepUnknowns out = y;
    const Mesh& mesh = *sp_.mesh;
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      const int k = sp_.flow.free_index[std::size_t(i)];
      if (k < 0) continue;
      out.p_n[i] += t * delta[k];
      out.p_w[i] += t * delta[off_pw_ + k];
    }
    for (int d = 0; d < sp_.mech.n_total(); ++d) {
      const int k = sp_.mech.free_index[std::size_t(d)];
      if (k >= 0) out.u[d] += t * delta[off_u_ + k];
    }
    for (int c = 0; c < n_cells_; ++c) {
      out.theta[c] += t * delta[off_th_ + c];
      out.pi_cell[c] += t * delta[off_pi_ + c];
    }
    return out;
  }

private:
  void build_constant_triplets() {
    auto add_reduced = [&](const SpMat& A, int row_off, int col_off, const FeSpace& rs,
                           const FeSpace& cs, double scale) {
      for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) {
          const int ri = rs.free_index[std::size_t(it.row())];
          const int ci = cs.free_index[std::size_t(it.col())];
          if (ri >= 0 && ci >= 0)
            const_trip_.emplace_back(row_off + ri, col_off + ci, scale * it.value());
        }
    };
    add_reduced(A_n_, 0, 0, sp_.flow, sp_.flow, 1.0);
    add_reduced(A_w_, off_pw_, off_pw_, sp_.flow, sp_.flow, 1.0);
    add_reduced(E_, off_u_, off_u_, sp_.mech, sp_.mech, 1.0);
    for (int k = 0; k < B_.outerSize(); ++k)
      for (SpMat::InnerIterator it(B_, k); it; ++it) {
        const int ri = sp_.mech.free_index[std::size_t(it.row())];
        if (ri < 0) continue;
        const_trip_.emplace_back(off_u_ + ri, off_pi_ + int(it.col()), -it.value());
        const_trip_.emplace_back(off_pi_ + int(it.col()), off_u_ + ri, it.value());
      }
    for (int c = 0; c < n_cells_; ++c) {
      const_trip_.emplace_back(off_th_ + c, off_th_ + c, 2.0 * p_.biot_M * vol_[c]);
      const_trip_.emplace_back(off_th_ + c, off_pi_ + c, -2.0 * vol_[c]);
      const_trip_.emplace_back(off_pi_ + c, off_pi_ + c, vol_[c] / p_.biot_M);
    }
  }

  const Spaces& sp_;
  const MaterialParams& p_;
  const RegularizedModel& reg_;
  Vec prev_n_, prev_w_;
  Vec w_, vol_;
  std::vector<std::vector<int>> cells_of_vertex_;
  Vec coeff_n_, coeff_w_;
  SpMat A_n_, A_w_, E_, B_;
  Vec grav_n_, grav_w_, f_tilde_, load_u_, phir_cell_;
  int n_flow_ = 0, n_mech_ = 0, n_cells_ = 0;
  int off_pw_ = 0, off_u_ = 0, off_th_ = 0, off_pi_ = 0, total_ = 0;
  std::vector<Triplet> const_trip_;
};

/// Public wrapper around the residual of the frozen monotone map.
inline Vec frozen_residual(const Spaces& sp, const MaterialParams& p,
                           const RegularizedModel& reg, double h, const FrozenData& frozen,
                           const State& prev, const StepUnknowns& y) {
  FrozenStepSolver solver(sp, p, reg, h, frozen, prev.phi_n, prev.phi_w);
  return solver.residual(y);
}

struct FixedPointReport {
  int fp_iters = 0;
  int newton_iters = 0;
  bool converged = false;
  std::vector<double> change_history;
  double constraint_violation = 0.0;
  double pi_identity_violation = 0.0;
  StepAuditData audit;
  std::vector<std::string> warnings;
};

/// Initial guess for the inner Newton: pressures reconstructed from the
/// state's contents at the target eps, Dirichlet data enforced.
inline StepUnknowns warm_start(const Spaces& sp, const MaterialParams& p,
                               const RegularizedModel& reg, const State& st) {
  const Mesh& mesh = *sp.mesh;
  StepUnknowns y;
  y.p_n.resize(mesh.n_vertices());
  y.p_w.resize(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = std::clamp(st.phi_n[i] + st.phi_w[i],
                                  std::nextafter(p.bounds.lo, 1.0),
                                  std::nextafter(p.bounds.hi, 0.0));
    const double sn = std::clamp(st.phi_n[i] / phi, 0.0, 1.0);
    const auto hp = hat_pressures(reg, sn);
    const double chi = soft_constraint_g(p.bounds, reg.eps(), phi);
    y.p_n[i] = hp.n + st.pi[i] + chi;
    y.p_w[i] = (std::isfinite(hp.w) ? hp.w : hp.n - reg.gamma_prime_at_one()) + st.pi[i] + chi;
  }
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    if (!sp.flow.constrained(i)) continue;
    y.p_n[i] = p.p_dirichlet_n[i];
    y.p_w[i] = p.p_dirichlet_w[i];
  }
  y.u = st.u;
  for (int i = 0; i < mesh.n_vertices(); ++i)
    if (sp.mech.constrained(i))
      for (int a = 0; a < mesh.dim; ++a) y.u[sp.mech.dof(i, a)] = 0.0;
  y.theta = st.theta;
  y.pi_cell = st.pi_cell;
  return y;
}

/// Outer fixed point unfreezing mobility and gravity: iterates the frozen
/// solve with relaxed updates of (phi~, u~) until the relative change in
/// (phi, u) drops below fp_tol.
inline State fixed_point_step(const Spaces& sp, const MaterialParams& p,
                              const CapillaryModel& cap, const State& prev, double eps,
                              double h, const StepControls& ctl, FixedPointReport& rep,
                              const State* warm = nullptr) {
  if (h > ctl.h_max)
    throw std::invalid_argument("time step violates the configured smallness cap h_max");
  if (h * eps * eps > ctl.h_eps2_max)
    throw std::invalid_argument("h*eps^2 violates the configured smallness cap");
  if (h > 0.8 * ctl.h_max)
    rep.warnings.push_back("time step within 20% of the smallness cap h_max");
  if (h * eps * eps > 0.8 * ctl.h_eps2_max)
    rep.warnings.push_back("h*eps^2 within 20% of its smallness cap");

  const Mesh& mesh = *sp.mesh;
  const RegularizedModel reg(cap, eps);
  const State& start = warm ? *warm : prev;
  FrozenData frozen = make_frozen(sp, p, start.phi_n, start.phi_w, start.u);
  StepUnknowns y = warm_start(sp, p, reg, start);

  const auto E = assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda);
  double omega = ctl.fp_relax;
  int oscillations = 0;
  Vec phi_n_new, phi_w_new;
  std::optional<FrozenStepSolver> solver;

  for (int it = 1; it <= ctl.fp_max; ++it) {
    solver.emplace(sp, p, reg, h, frozen, prev.phi_n, prev.phi_w);
    auto res = solver->newton(std::move(y), ctl);
    y = std::move(res.y);
    rep.newton_iters += res.iters;
    rep.fp_iters = it;
    solver->contents(y, phi_n_new, phi_w_new);

    const Vec w = lumped_mass_weights(mesh);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < mesh.n_vertices(); ++i) {
      num += w[i] * ((phi_n_new[i] - frozen.raw_n[i]) * (phi_n_new[i] - frozen.raw_n[i]) +
                     (phi_w_new[i] - frozen.raw_w[i]) * (phi_w_new[i] - frozen.raw_w[i]));
      den += w[i] * (phi_n_new[i] * phi_n_new[i] + phi_w_new[i] * phi_w_new[i]);
    }
    const Vec du = y.u - frozen.u_tilde;
    num += du.dot(E.mat * du);
    den += y.u.dot(E.mat * y.u);
    const double change = std::sqrt(num / std::max(den, 1e-300));
    rep.change_history.push_back(change);
    if (change <= ctl.fp_tol) {
      rep.converged = true;
      break;
    }
    if (rep.change_history.size() >= 2 &&
        change > rep.change_history[rep.change_history.size() - 2]) {
      if (++oscillations >= 2) {
        omega = std::max(0.0625, 0.5 * omega);
        oscillations = 0;
        rep.warnings.push_back("fixed point oscillation, relaxation halved");
      }
    }
    const Vec rn = frozen.raw_n + omega * (phi_n_new - frozen.raw_n);
    const Vec rw = frozen.raw_w + omega * (phi_w_new - frozen.raw_w);
    const Vec ru = frozen.u_tilde + omega * (y.u - frozen.u_tilde);
    frozen = make_frozen(sp, p, rn, rw, ru);
  }
  if (!rep.converged)
    throw StepFailure("fixed point did not converge within fp_max",
                      rep.change_history.empty() ? kInf : rep.change_history.back(),
                      rep.change_history);

  State st;
  st.phi_n = phi_n_new;
  st.phi_w = phi_w_new;
  st.u = y.u;
  st.theta = y.theta;
  st.pi_cell = y.pi_cell;
  st.pi = solver->lift_pi(y.pi_cell);
  st.eps = eps;
  st.chi.resize(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = std::clamp(st.phi_n[i] + st.phi_w[i],
                                  std::nextafter(p.bounds.lo, 1.0),
                                  std::nextafter(p.bounds.hi, 0.0));
    st.chi[i] = soft_constraint_g(p.bounds, eps, phi);
  }

  // accepted-state invariants, checked separately from the solver's own
  // combined residual blocks
  const Vec phi_cell = cell_means(mesh, Vec(st.phi_n + st.phi_w));
  const Vec phir_cell = cell_means(mesh, p.phi_ref);
  const Vec divu = cell_divergence(sp.mech, st.u);
  double cmax = 0.0, pmax = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    cmax = std::max(cmax, std::fabs(phi_cell[c] - p.biot_b * divu[c] - st.theta[c] -
                                    phir_cell[c]));
    pmax = std::max(pmax, std::fabs(p.biot_M * st.theta[c] - st.pi_cell[c]));
  }
  rep.constraint_violation = cmax;
  rep.pi_identity_violation = pmax;

  rep.audit.p_n = y.p_n;
  rep.audit.p_w = y.p_w;
  rep.audit.coeff_n = solver->coeff_n();
  rep.audit.coeff_w = solver->coeff_w();
  rep.audit.grav_n = solver->grav_n();
  rep.audit.grav_w = solver->grav_w();
  rep.audit.f_tilde = solver->frozen_body_force();
  return st;
}

struct LevelRecord {
  double eps = 0.0;
  int fp_iters = 0;
  int newton_iters = 0;
  double graph_max_distance = 0.0;
};

struct ContinuationReport {
  std::vector<LevelRecord> levels;
  FixedPointReport last_fp;
  int total_fp = 0, total_newton = 0;
  std::vector<std::string> warnings;
};

struct ContinuationFailure : StepFailure {
  std::optional<State> last_good;
  double failed_eps = 0.0;
  ContinuationFailure(const StepFailure& inner, std::optional<State> good, double eps)
      : StepFailure(inner.what(), inner.best_residual, inner.trace),
        last_good(std::move(good)), failed_eps(eps) {}
};

/// Walks the decreasing eps schedule, warm-starting each level from the one
/// before; the backward-Euler anchor stays the previous time state.
inline State eps_continuation(const Spaces& sp, const MaterialParams& p,
                              const CapillaryModel& cap, const State& prev, double h,
                              const StepControls& ctl, ContinuationReport& rep) {
  ctl.validate();
  std::optional<State> current;
  for (double eps : ctl.eps_schedule) {
    FixedPointReport fp;
    try {
      State next = fixed_point_step(sp, p, cap, prev, eps, h, ctl, fp,
                                    current ? &*current : nullptr);
      current = std::move(next);
    } catch (const StepFailure& f) {
      throw ContinuationFailure(f, std::move(current), eps);
    }
    LevelRecord rec;
    rec.eps = eps;
    rec.fp_iters = fp.fp_iters;
    rec.newton_iters = fp.newton_iters;
    rec.graph_max_distance = graph_consistency(*current, p.bounds).max_distance;
    rep.levels.push_back(rec);
    rep.total_fp += fp.fp_iters;
    rep.total_newton += fp.newton_iters;
    for (auto& wmsg : fp.warnings) rep.warnings.push_back(wmsg);
    rep.last_fp = std::move(fp);
  }
  return *current;
}

struct Trajectory {
  std::vector<State> states;                 // initial state first
  std::vector<EnergyLedger> ledgers;         // one per accepted step
  std::vector<ContinuationReport> reports;   // one per accepted step
  bool failed = false;
  int failed_step = -1;
  std::string error;
};

/// Transient loop: State^j = eps_continuation(State^{j-1}), diagnostics after
/// every step, incremental emission through the callback. A step failure
/// terminates the run and flushes what completed.
inline Trajectory run_transient(
    const Spaces& sp, const MaterialParams& p, const CapillaryModel& cap,
    const State& initial, int n_steps, const StepControls& ctl,
    const std::function<void(int, const State&, const EnergyLedger&)>& on_step = {}) {
  ctl.validate();
  Trajectory traj;
  traj.states.push_back(initial);
  const RegularizedModel reg_final(cap, ctl.eps_schedule.back());
  for (int j = 1; j <= n_steps; ++j) {
    ContinuationReport rep;
    State next;
    try {
      next = eps_continuation(sp, p, cap, traj.states.back(), ctl.h, ctl, rep);
    } catch (const StepFailure& f) {
      traj.failed = true;
      traj.failed_step = j;
      traj.error = f.what();
      break;
    }
    const State& prev = traj.states.back();
    EnergyLedger led;
    led.t = j * ctl.h;
    helmholtz_energy(sp, p, reg_final, next, led);
    dissipation(sp, p, reg_final, next, led);
    // the initial state may carry a different eps tag; the audit evaluates
    // both states under the step's final eps
    State prev_audit = prev;
    prev_audit.eps = next.eps;
    const auto audit = energy_audit(sp, p, reg_final, prev_audit, next, rep.last_fp.audit, ctl.h);
    led.boundary_work = audit.boundary_work;
    led.step_inequality_residual = audit.convexity_residual;
    led.identity_residual = audit.identity_residual;

    const Vec w = lumped_mass_weights(*sp.mesh);
    led.mass_n = w.dot(next.phi_n);
    led.mass_w = w.dot(next.phi_w);
    step_boundary_flux(sp, prev, next, rep.last_fp.audit, ctl.h, led);
    Vec ell_n = w.cwiseProduct(Vec(next.phi_n - prev.phi_n));
    Vec ell_w = w.cwiseProduct(Vec(next.phi_w - prev.phi_w));
    led.dual_norm_incr_n = dual_norm_vprime(sp.flow, ell_n);
    led.dual_norm_incr_w = dual_norm_vprime(sp.flow, ell_w);
    led.graph_max_distance = rep.levels.back().graph_max_distance;
    led.newton_iters = rep.total_newton;
    led.fp_iters = rep.total_fp;

    traj.states.push_back(std::move(next));
    traj.ledgers.push_back(led);
    traj.reports.push_back(std::move(rep));
    if (on_step) on_step(j, traj.states.back(), led);
  }
  return traj;
}

} // namespace poromech

#endif
