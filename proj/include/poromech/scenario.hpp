#ifndef POROMECH_SCENARIO_HPP
#define POROMECH_SCENARIO_HPP

#include <chrono>
#include <memory>
#include <random>

#include "poromech/output.hpp"

namespace poromech {

/// A configuration bound to a mesh: spaces, material fields and the initial
/// equilibrium state.
struct BuiltScenario {
  Config config;
  std::shared_ptr<Mesh> mesh;
  Spaces sp;
  MaterialParams params;
  CapillaryModel cap = CapillaryModel::brooks_corey(1.0, 3.0);
  State init;
};

namespace detail {

inline Vec nodal_field(const Mesh& mesh, const std::string& spec) {
  Vec out(mesh.n_vertices());
  if (spec.rfind("file:", 0) == 0) {
    const std::string path = spec.substr(5);
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open field file '" + path + "'");
    for (int i = 0; i < mesh.n_vertices(); ++i)
      if (!(f >> out[i]))
        throw ConfigError("field file '" + path + "': expected one value per vertex");
    return out;
  }
  const Expression e(spec);
  for (int i = 0; i < mesh.n_vertices(); ++i)
    out[i] = e(mesh.vertices[std::size_t(i)].x(), mesh.vertices[std::size_t(i)].y());
  return out;
}

} // namespace detail

inline BuiltScenario build_scenario(const Config& c) {
  {
    auto violations = validate_config(c);
    if (!violations.empty()) throw ValidationError(std::move(violations));
  }
  BuiltScenario b;
  b.config = c;
  if (c.mesh_kind == "interval")
    b.mesh = std::make_shared<Mesh>(make_interval_mesh(c.nx, c.lx, c.flow_dirichlet));
  else
    b.mesh = std::make_shared<Mesh>(make_rectangle_mesh(c.nx, c.ny, c.lx, c.ly,
                                                        c.flow_dirichlet));
  b.sp = make_spaces(*b.mesh, c.flow_dirichlet, c.mech_dirichlet);

  MaterialParams& p = b.params;
  p.mu_n = c.viscosity_n;
  p.mu_w = c.viscosity_w;
  p.rho_n = c.density_n;
  p.rho_w = c.density_w;
  p.gravity = {c.gravity_x, c.gravity_y};
  p.lame_mu = c.lame_mu;
  p.lame_lambda = c.lame_lambda;
  p.biot_b = c.biot_b;
  p.biot_M = c.biot_M;
  p.bounds = {c.phi_lo, c.phi_hi};
  p.k0 = c.k0;
  p.kozeny_carman = (c.permeability_law == "kozeny-carman");
  p.phi_ref = detail::nodal_field(*b.mesh, c.phi_ref);
  p.rock_density_ref = detail::nodal_field(*b.mesh, c.rock_density);
  p.p_dirichlet_n = detail::nodal_field(*b.mesh, c.p_dirichlet_n);
  p.p_dirichlet_w = detail::nodal_field(*b.mesh, c.p_dirichlet_w);
  if (c.f_ext_x != "0" || c.f_ext_y != "0") {
    const Vec fx = detail::nodal_field(*b.mesh, c.f_ext_x);
    const Vec fy = detail::nodal_field(*b.mesh, c.f_ext_y);
    p.f_ext = Vec::Zero(b.sp.mech.n_total());
    for (int i = 0; i < b.mesh->n_vertices(); ++i) {
      p.f_ext[b.sp.mech.dof(i, 0)] = fx[i];
      if (b.mesh->dim == 2) p.f_ext[b.sp.mech.dof(i, 1)] = fy[i];
    }
  }

  std::vector<std::string> value_violations;
  for (int i = 0; i < b.mesh->n_vertices(); ++i)
    if (!(p.phi_ref[i] > c.phi_lo && p.phi_ref[i] < c.phi_hi)) {
      value_violations.push_back(
          "(H1) reference porosity must take values strictly inside the bounds");
      break;
    }

  if (c.capillary == "brooks-corey")
    b.cap = CapillaryModel::brooks_corey(c.entry_pressure, c.bc_lambda, c.gamma0);
  else
    b.cap = CapillaryModel::tabulated(c.table_s, c.table_d2, c.table_gamma_prime0,
                                      c.gamma0);

  const Vec phi_n0 = detail::nodal_field(*b.mesh, c.phi_n0);
  const Vec phi_w0 = detail::nodal_field(*b.mesh, c.phi_w0);
  for (int i = 0; i < b.mesh->n_vertices(); ++i) {
    const double phi = phi_n0[i] + phi_w0[i];
    if (phi_n0[i] < 0.0 || phi_w0[i] < 0.0 || phi < c.phi_lo - 1e-14 ||
        phi > c.phi_hi + 1e-14) {
      value_violations.push_back(
          "(H4) initial contents must be nonnegative with total porosity in the bounds");
      break;
    }
  }
  if (!value_violations.empty()) throw ValidationError(std::move(value_violations));

  b.init = init_state(b.sp, b.params, c.controls.eps_schedule.back(), phi_n0, phi_w0);
  return b;
}

struct RunResult {
  Trajectory trajectory;
  RunManifest manifest;
};

inline RunResult run_scenario(const BuiltScenario& b, bool quiet = true,
                              std::ostream* log = nullptr) {
  RunResult out;
  out.manifest.config_hash = fnv1a_hash(canonical_config_text(b.config));
  out.manifest.seed = b.config.seed;
  auto last = std::chrono::steady_clock::now();
  auto on_step = [&](int j, const State&, const EnergyLedger& led) {
    const auto now = std::chrono::steady_clock::now();
    out.manifest.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(now - last).count());
    last = now;
    out.manifest.newton_iters.push_back(led.newton_iters);
    out.manifest.fp_iters.push_back(led.fp_iters);
    out.manifest.identity_residuals.push_back(led.identity_residual);
    out.manifest.graph_distances.push_back(led.graph_max_distance);
    if (!quiet && log)
      (*log) << "step " << j << ": newton " << led.newton_iters << ", fp " << led.fp_iters
             << ", D " << led.D << "\n";
  };
  out.trajectory = run_transient(b.sp, b.params, b.cap, b.init, b.config.n_steps,
                                 b.config.controls, on_step);
  out.manifest.steps_completed = int(out.trajectory.states.size()) - 1;
  out.manifest.failed = out.trajectory.failed;
  out.manifest.error = out.trajectory.error;
  return out;
}

// ---------------------------------------------------------------------------
// Property-test battery for the `audit` subcommand
// ---------------------------------------------------------------------------

struct AuditLine {
  std::string name;
  bool pass = false;
  double measure = 0.0;
};

struct AuditBattery {
  std::vector<AuditLine> lines;
  bool all_pass() const {
    for (const auto& l : lines)
      if (!l.pass) return false;
    return true;
  }
};

inline AuditBattery audit_battery(const BuiltScenario& b) {
  AuditBattery out;
  std::mt19937_64 rng(b.config.seed + 1);
  const CapillaryModel& cap = b.cap;

  {  // capillary algebra identities on 1000 interior samples
    double worst = 0.0;
    for (int i = 1; i < 1000; ++i) {
      const double s = i / 1000.0;
      const auto hp = hat_pressures(cap, s);
      const double gp = cap.gamma_prime(s);
      const double g = cap.gamma_value(s);
      worst = std::max(worst, std::fabs(hp.n - hp.w - gp));
      worst = std::max(worst, std::fabs(s * hp.n + (1.0 - s) * hp.w - g));
    }
    out.lines.push_back({"capillary pressure algebra (1000 samples)", worst <= 1e-12, worst});
  }
  {  // derivative identities against central differences
    double worst = 0.0;
    const double fd = 1e-6;
    for (int i = 1; i < 50; ++i) {
      const double s = 0.02 + 0.96 * i / 50.0;
      const double d2 = cap.gamma_second(s);
      const double dpn = (hat_pressures(cap, s + fd).n - hat_pressures(cap, s - fd).n) / (2 * fd);
      const double dpsi =
          (kirchhoff_eval(cap, s + fd).psi - kirchhoff_eval(cap, s - fd).psi) / (2 * fd);
      worst = std::max(worst, std::fabs(dpn - (1.0 - s) * d2) / std::max(1.0, std::fabs(d2)));
      worst = std::max(worst,
                       std::fabs(dpsi - s * (1.0 - s) * d2) / std::max(1.0, std::fabs(d2)));
    }
    out.lines.push_back({"derivative identities vs central differences", worst <= 1e-6, worst});
  }
  {  // half-Lipschitz composites
    std::uniform_real_distribution<double> up(-2.0, 6.0);
    double worst = -kInf;
    for (int i = 0; i < 2000; ++i) {
      const double a = up(rng), c2 = up(rng);
      const double xa = kirchhoff_eval(cap, saturation_from_capillary(cap, a)).xi;
      const double xc = kirchhoff_eval(cap, saturation_from_capillary(cap, c2)).xi;
      worst = std::max(worst, std::fabs(xa - xc) - 0.5 * std::fabs(a - c2));
    }
    out.lines.push_back({"xi(S(.)) half-Lipschitz (2000 samples)", worst <= 1e-12, worst});
  }
  {  // convex duality roundtrip and monotonicity at the schedule's levels
    double worst = 0.0, worst_ip = kInf;
    for (double eps : b.config.controls.eps_schedule) {
      const RegularizedModel reg(cap, eps);
      const double lo_p = reg.gamma_prime_at_zero(), hi_p = reg.gamma_prime_at_one();
      std::uniform_real_distribution<double> mid(0.05, 0.95), sh(-5.0 * eps, 5.0 * eps),
          wide(-2.0, 2.0);
      for (int i = 0; i < 200; ++i) {
        const double dp = lo_p + (hi_p - lo_p) * mid(rng);
        const double s = saturation_from_capillary(reg, dp);
        const double yw = reg.gamma_value(s) - s * dp + sh(rng);
        const double yn = yw + dp;
        const auto pair = phi_from_potentials(reg, b.params.bounds, eps, yn, yw);
        const auto fe = f_eps_energy(reg, b.params.bounds, eps, pair);
        worst = std::max(worst, std::fabs(fe.grad[0] - yn));
        worst = std::max(worst, std::fabs(fe.grad[1] - yw));
      }
      for (int i = 0; i < 200; ++i) {
        const double a1 = wide(rng), a2 = wide(rng), c1 = wide(rng), c2 = wide(rng);
        const auto f1 = phi_from_potentials(reg, b.params.bounds, eps, a1, a2);
        const auto f2 = phi_from_potentials(reg, b.params.bounds, eps, c1, c2);
        worst_ip = std::min(worst_ip,
                            (f1.n - f2.n) * (a1 - c1) + (f1.w - f2.w) * (a2 - c2));
      }
    }
    out.lines.push_back({"duality roundtrip DF(Phi(y)) = y", worst <= 1e-8, worst});
    out.lines.push_back({"Phi monotonicity inner products", worst_ip >= -1e-12, worst_ip});
  }
  {  // monotonicity of the frozen map on the configured scenario
    const double eps = b.config.controls.eps_schedule.back();
    const RegularizedModel reg(cap, eps);
    FrozenData frozen =
        make_frozen(b.sp, b.params, b.init.phi_n, b.init.phi_w, b.init.u);
    FrozenStepSolver solver(b.sp, b.params, reg, b.config.controls.h, frozen,
                            b.init.phi_n, b.init.phi_w);
    std::normal_distribution<double> g(0.0, 1.0);
    auto rand_y = [&]() {
      StepUnknowns y = warm_start(b.sp, b.params, reg, b.init);
      Vec d(solver.system_size());
      for (int i = 0; i < d.size(); ++i) d[i] = 0.3 * g(rng);
      return solver.apply_delta(y, d, 1.0);
    };
    auto dof_difference = [&](const StepUnknowns& y1, const StepUnknowns& y2) {
      Vec dy = Vec::Zero(solver.system_size());
      const Mesh& mesh = *b.mesh;
      for (int i2 = 0; i2 < mesh.n_vertices(); ++i2) {
        const int k = b.sp.flow.free_index[std::size_t(i2)];
        if (k < 0) continue;
        dy[k] = y1.p_n[i2] - y2.p_n[i2];
        dy[b.sp.flow.n_free() + k] = y1.p_w[i2] - y2.p_w[i2];
      }
      const int off_u = 2 * b.sp.flow.n_free();
      for (int d2 = 0; d2 < b.sp.mech.n_total(); ++d2) {
        const int k = b.sp.mech.free_index[std::size_t(d2)];
        if (k >= 0) dy[off_u + k] = y1.u[d2] - y2.u[d2];
      }
      const int off_th = off_u + b.sp.mech.n_free();
      const int off_pi = off_th + mesh.n_cells();
      for (int c2 = 0; c2 < mesh.n_cells(); ++c2) {
        dy[off_th + c2] = y1.theta[c2] - y2.theta[c2];
        dy[off_pi + c2] = y1.pi_cell[c2] - y2.pi_cell[c2];
      }
      return dy;
    };
    double worst = kInf;
    for (int i = 0; i < 20; ++i) {
      const StepUnknowns y1 = rand_y(), y2 = rand_y();
      const Vec dr = solver.residual(y1) - solver.residual(y2);
      const Vec dy = dof_difference(y1, y2);
      worst = std::min(worst, dr.dot(dy) / std::max(dy.squaredNorm(), 1e-300));
    }
    out.lines.push_back({"frozen map monotonicity (20 pairs)", worst >= -1e-12, worst});
  }
  {  // one backward-Euler step with its energy audit
    StepControls ctl = b.config.controls;
    ctl.newton_tol = std::min(ctl.newton_tol, 1e-12);
    const double eps = ctl.eps_schedule.back();
    FixedPointReport rep;
    State prev = b.init;
    prev.eps = eps;
    try {
      const State next =
          fixed_point_step(b.sp, b.params, b.cap, prev, eps, ctl.h, ctl, rep);
      const RegularizedModel reg(cap, eps);
      const auto audit = energy_audit(b.sp, b.params, reg, prev, next, rep.audit, ctl.h);
      out.lines.push_back(
          {"one-step tested-form identity", audit.identity_residual <= 1e-7,
           audit.identity_residual});
      EnergyLedger led;
      helmholtz_energy(b.sp, b.params, reg, next, led);
      const double scale = std::max(1.0, std::fabs(led.F_eps));
      out.lines.push_back({"one-step convexity inequality",
                           audit.convexity_residual >= -1e-7 * scale,
                           audit.convexity_residual});
    } catch (const StepFailure& f) {
      out.lines.push_back({std::string("one-step solve failed: ") + f.what(), false,
                           f.best_residual});
    }
  }
  return out;
}

} // namespace poromech

#endif
