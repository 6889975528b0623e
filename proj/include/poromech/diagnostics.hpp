#ifndef POROMECH_DIAGNOSTICS_HPP
#define POROMECH_DIAGNOSTICS_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "poromech/coupled.hpp"

namespace poromech {

/// Per-step bookkeeping row: energies, dissipation, audit residuals, masses,
/// increments and solver counters. Everything here is finite by construction;
/// constraint and bound violations are magnitudes, never infinities.
struct EnergyLedger {
  double t = 0.0;
  double F_f = 0.0;       // fluid capillary energy, unregularized gamma
  double F_s = 0.0;       // solid energy: M/2 theta^2 + mu eps:eps + lambda/2 div^2
  double F_g = 0.0;       // gravity potential -int f(phi).(x+u)
  double F_eps = 0.0;     // regularized total incl. soft-constraint potential
  double constraint_violation = 0.0;  // cellwise max |phi - b div u - theta - phi_r|
  double k_phi_violation = 0.0;       // nodal max distance of contents to K_phi
  double D = 0.0;                     // dissipation of the accepted state
  double kirchhoff_lower_bound = 0.0; // |grad xi|^2 + |grad(pi+chi)|^2 integral
  double boundary_work = 0.0;         // Dirichlet-and-gravity work (weak form)
  double step_inequality_residual = 0.0;  // convexity inequality slack (>= ~0)
  double identity_residual = 0.0;         // tested-form identity mismatch (relative)
  double mass_n = 0.0, mass_w = 0.0;
  double boundary_flux_n = 0.0, boundary_flux_w = 0.0;  // outflow through Gamma^D
  double dual_norm_incr_n = 0.0, dual_norm_incr_w = 0.0;
  double graph_max_distance = 0.0;
  int newton_iters = 0, fp_iters = 0;
};

struct GraphReport {
  double max_distance = 0.0;
  int sign_violations = 0;
};

/// Pointwise distance of (phi, chi) to the maximal monotone graph of the
/// porosity bounds: |chi| strictly inside (by margin delta), otherwise the
/// distance to the vertical rays at the bounds.
inline GraphReport graph_consistency(const State& st, const PorosityBounds& b,
                                     double tol = 1e-6, double delta = -1.0) {
  if (delta < 0.0) delta = b.width() / 100.0;
  GraphReport rep;
  for (Eigen::Index i = 0; i < st.chi.size(); ++i) {
    const double phi = st.phi_n[i] + st.phi_w[i];
    const double chi = st.chi[i];
    double d = kInf;
    if (phi > b.lo + delta && phi < b.hi - delta) d = std::fabs(chi);
    const double d_lo = std::hypot(phi - b.lo, std::max(chi, 0.0));
    const double d_hi = std::hypot(phi - b.hi, std::max(-chi, 0.0));
    d = std::min({d, d_lo, d_hi});
    rep.max_distance = std::max(rep.max_distance, d);
    const bool neg_away = chi < -tol && phi > b.lo + delta;
    const bool pos_away = chi > tol && phi < b.hi - delta;
    if (neg_away || pos_away) ++rep.sign_violations;
  }
  return rep;
}

namespace detail {

inline double elastic_energy(const Spaces& sp, const MaterialParams& p, const Vec& u) {
  const auto E = assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda);
  return 0.5 * u.dot(E.mat * u);  // = int mu eps:eps + lambda/2 div^2
}

} // namespace detail

/// Helmholtz and gravitational energies of a state. Nonlinear densities use
/// vertex quadrature, matching the solver's zero-order pairing, so the
/// convexity audit below is exact at the discrete level.
inline void helmholtz_energy(const Spaces& sp, const MaterialParams& p,
                             const RegularizedModel& reg, const State& st,
                             EnergyLedger& led) {
  const Mesh& mesh = *sp.mesh;
  const Vec w = lumped_mass_weights(mesh);
  const CapillaryModel& base = reg.base();

  double ff = 0.0, feps_phi = 0.0, kviol = 0.0;
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = st.phi_n[i] + st.phi_w[i];
    const double sn = phi > 0.0 ? std::clamp(st.phi_n[i] / phi, 0.0, 1.0) : 0.0;
    ff += w[i] * phi * base.gamma_value(sn);
    const PhaseContentPair pr{st.phi_n[i], st.phi_w[i]};
    if (!pr.in_k_phi(p.bounds)) {
      const auto proj = project_k_phi(pr, p.bounds);
      kviol = std::max(kviol, std::hypot(pr.n - proj.n, pr.w - proj.w));
    }
    const double phi_in = std::clamp(phi, p.bounds.lo, p.bounds.hi);
    feps_phi += w[i] * (phi * reg.gamma_value(sn) +
                        soft_constraint_antiderivative(p.bounds, reg.eps(), phi_in));
  }

  double fs_theta = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    fs_theta += mesh.cell_volume(c) * 0.5 * p.biot_M * st.theta[c] * st.theta[c];
  const double fs_elastic = detail::elastic_energy(sp, p, st.u);

  // -int f(phi).(x+u), exact for the P1 product
  const Vec f = body_force(sp, p, st.phi_n, st.phi_w);
  Vec xu = Vec::Zero(sp.mech.n_total());
  for (int i = 0; i < mesh.n_vertices(); ++i)
    for (int a = 0; a < mesh.dim; ++a)
      xu[sp.mech.dof(i, a)] = mesh.vertices[std::size_t(i)][a] + st.u[sp.mech.dof(i, a)];
  const double fg = -vector_load(sp, f).dot(xu);

  const Vec phi_cell = cell_means(mesh, Vec(st.phi_n + st.phi_w));
  const Vec phir_cell = cell_means(mesh, p.phi_ref);
  const Vec cons = phi_cell - p.biot_b * cell_divergence(sp.mech, st.u) - st.theta - phir_cell;

  led.F_f = ff;
  led.F_s = fs_theta + fs_elastic;
  led.F_g = fg;
  led.F_eps = feps_phi + fs_theta + fs_elastic;
  led.constraint_violation = cons.size() ? cons.cwiseAbs().maxCoeff() : 0.0;
  led.k_phi_violation = kviol;
}

/// Dissipation of a state with pressures reconstructed nodally as
/// p_alpha = hat p_alpha + pi + chi. Gradients of the saturation-dependent
/// parts are evaluated by the chain rule at cell barycenters, which makes the
/// Kirchhoff ordering (K_lo/mu_hi)(|grad xi|^2 + |grad(pi+chi)|^2) <= D exact
/// cellwise.
inline void dissipation(const Spaces& sp, const MaterialParams& p,
                        const RegularizedModel& reg, const State& st, EnergyLedger& led) {
  const Mesh& mesh = *sp.mesh;
  const Vec q_nodal = st.pi + st.chi;
  const auto grad_q = cell_gradients(sp.aux, q_nodal);
  Vec s_nodal(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = st.phi_n[i] + st.phi_w[i];
    s_nodal[i] = phi > 0.0 ? std::clamp(st.phi_n[i] / phi, 0.0, 1.0) : 0.0;
  }
  const auto grad_s = cell_gradients(sp.aux, s_nodal);
  const Vec s_cell = cell_means(mesh, s_nodal);
  const Vec phi_cell = cell_means(mesh, Vec(st.phi_n + st.phi_w));

  double D = 0.0, lower = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    const double s = std::clamp(s_cell[c], 0.0, 1.0);
    const double g2 = reg.gamma_second(s);
    const double K = p.permeability_scalar(std::clamp(phi_cell[c], p.bounds.lo, p.bounds.hi));
    const Eigen::Vector2d gp_n = (1.0 - s) * g2 * grad_s[std::size_t(c)] + grad_q[std::size_t(c)];
    const Eigen::Vector2d gp_w = -s * g2 * grad_s[std::size_t(c)] + grad_q[std::size_t(c)];
    D += vol * K * (s / p.mu_n * gp_n.squaredNorm() + (1.0 - s) / p.mu_w * gp_w.squaredNorm());
    const double xi2 = s * (1.0 - s) * g2 * g2 * grad_s[std::size_t(c)].squaredNorm();
    lower += vol * (xi2 + grad_q[std::size_t(c)].squaredNorm());
  }
  led.D = D;
  led.kirchhoff_lower_bound = lower;
}

/// Everything the energy audit needs from the accepted solve itself: the
/// discrete pressures and the frozen coefficient fields of the last inner
/// solve.
struct StepAuditData {
  Vec p_n, p_w;            // nodal pressures of the accepted solve
  Vec coeff_n, coeff_w;    // cellwise k_eps(s~)/mu K(phi~)
  Vec grav_n, grav_w;      // nodal rho_alpha g.(x + u~)
  Vec f_tilde;             // frozen body force (vector-dof layout)
};

struct EnergyAudit {
  double A = 0.0, B = 0.0, D_full = 0.0, R = 0.0, work = 0.0;
  double identity_residual = 0.0;   // relative mismatch of the tested form
  double convexity_residual = 0.0;  // rhs - lhs of the convexity inequality
  double boundary_work = 0.0;
};

/// Audits one accepted backward-Euler step: (i) the tested-form identity
/// A + B + D_full = R + Dirichlet-and-gravity work, and (ii) the convexity
/// inequality F_eps(next) - F_eps(prev) <= A + B + int f.(u_next - u_prev).
inline EnergyAudit energy_audit(const Spaces& sp, const MaterialParams& p,
                                const RegularizedModel& reg, const State& prev,
                                const State& next, const StepAuditData& data, double h) {
  if (std::fabs(prev.eps - next.eps) > 1e-15 && prev.eps > 0.0)
    throw std::invalid_argument("energy audit: states at mismatched eps levels");
  const Mesh& mesh = *sp.mesh;
  const Vec w = lumped_mass_weights(mesh);
  EnergyAudit out;

  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double dn = next.phi_n[i] - prev.phi_n[i];
    const double dw = next.phi_w[i] - prev.phi_w[i];
    out.A += w[i] * (dn * (data.p_n[i] - next.pi[i]) + dw * (data.p_w[i] - next.pi[i]));
    out.B += w[i] * (dn + dw) * next.pi[i];
    out.R += w[i] * (dn * p.p_dirichlet_n[i] + dw * p.p_dirichlet_w[i]);
  }

  const auto gp_n = cell_gradients(sp.aux, data.p_n);
  const auto gp_w = cell_gradients(sp.aux, data.p_w);
  const auto gd_n = cell_gradients(sp.aux, p.p_dirichlet_n);
  const auto gd_w = cell_gradients(sp.aux, p.p_dirichlet_w);
  const auto gg_n = cell_gradients(sp.aux, data.grav_n);
  const auto gg_w = cell_gradients(sp.aux, data.grav_w);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    const std::size_t cc = std::size_t(c);
    out.D_full += h * vol * (data.coeff_n[c] * gp_n[cc].squaredNorm() +
                             data.coeff_w[c] * gp_w[cc].squaredNorm());
    out.work += h * vol * (data.coeff_n[c] * gp_n[cc].dot(gd_n[cc]) +
                           data.coeff_w[c] * gp_w[cc].dot(gd_w[cc]));
    out.work += h * vol * (data.coeff_n[c] * gg_n[cc].dot(gp_n[cc] - gd_n[cc]) +
                           data.coeff_w[c] * gg_w[cc].dot(gp_w[cc] - gd_w[cc]));
  }

  const double lhs = out.A + out.B + out.D_full;
  const double rhs = out.R + out.work;
  const double scale = std::max({std::fabs(out.A), std::fabs(out.B), out.D_full,
                                 std::fabs(out.R), std::fabs(out.work), 1e-30});
  out.identity_residual = std::fabs(lhs - rhs) / scale;
  out.boundary_work = rhs;

  EnergyLedger lp, ln;
  helmholtz_energy(sp, p, reg, prev, lp);
  helmholtz_energy(sp, p, reg, next, ln);
  const double work_f = data.f_tilde.size()
                            ? vector_load(sp, data.f_tilde).dot(Vec(next.u - prev.u))
                            : 0.0;
  out.convexity_residual = (out.A + out.B + work_f) - (ln.F_eps - lp.F_eps);
  return out;
}

/// Per-step Dirichlet outflow, read off the conservation residual extended
/// over the constrained rows: summing the discrete phase equation over every
/// vertex leaves exactly the boundary contribution (free rows vanish at
/// solver tolerance).
inline void step_boundary_flux(const Spaces& sp, const State& prev, const State& next,
                               const StepAuditData& data, double h, EnergyLedger& led) {
  const Mesh& mesh = *sp.mesh;
  const Vec w = lumped_mass_weights(mesh);
  const SpMat A_n = assemble_stiffness(sp.flow, &data.coeff_n).mat * h;
  const SpMat A_w = assemble_stiffness(sp.flow, &data.coeff_w).mat * h;
  const Vec fn = A_n * Vec(data.p_n - data.grav_n);
  const Vec fw = A_w * Vec(data.p_w - data.grav_w);
  double sum_n = 0.0, sum_w = 0.0;
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    if (!sp.flow.constrained(i)) continue;
    sum_n += w[i] * (next.phi_n[i] - prev.phi_n[i]) + fn[i];
    sum_w += w[i] * (next.phi_w[i] - prev.phi_w[i]) + fw[i];
  }
  led.boundary_flux_n = sum_n;
  led.boundary_flux_w = sum_w;
}

/// Lumped per-phase totals; under pure-Neumann flow boundaries the drift per
/// step must sit at solver tolerance, and with Dirichlet data the drift
/// matches the accumulated boundary flux.
struct MassSeries {
  std::vector<double> mass_n, mass_w;      // per state
  std::vector<double> drift_n, drift_w;    // vs the initial state
};

inline MassSeries mass_balance(const Spaces& sp, const std::vector<State>& trajectory) {
  MassSeries ms;
  const Vec w = lumped_mass_weights(*sp.mesh);
  for (const auto& st : trajectory) {
    ms.mass_n.push_back(w.dot(st.phi_n));
    ms.mass_w.push_back(w.dot(st.phi_w));
  }
  for (std::size_t j = 0; j < ms.mass_n.size(); ++j) {
    ms.drift_n.push_back(ms.mass_n[j] - ms.mass_n[0]);
    ms.drift_w.push_back(ms.mass_w[j] - ms.mass_w[0]);
  }
  return ms;
}

} // namespace poromech

#endif
