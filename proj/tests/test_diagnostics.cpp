#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "scenarios.hpp"

using namespace poromech;
using namespace poromech::testing;

namespace {

State blank_state(const Scenario& sc, double eps) {
  State st;
  const int nv = sc.mesh->n_vertices();
  st.phi_n = Vec::Zero(nv);
  st.phi_w = Vec::Constant(nv, 0.25);
  st.u = Vec::Zero(sc.sp.mech.n_total());
  st.theta = Vec::Zero(sc.mesh->n_cells());
  st.pi_cell = Vec::Zero(sc.mesh->n_cells());
  st.pi = Vec::Zero(nv);
  st.chi = Vec::Zero(nv);
  st.eps = eps;
  return st;
}

} // namespace

TEST_CASE("helmholtz energies: rest state and prescribed strain") {
  Scenario sc = equilibrium_scenario(4);
  const RegularizedModel reg(sc.cap, 0.01);

  // u = 0, theta = 0, s_n = 0 with gamma(0) = 0 and phi at the midpoint
  State rest = blank_state(sc, 0.01);
  MaterialParams p0 = sc.params;
  p0.gravity = Eigen::Vector2d::Zero();
  EnergyLedger led;
  helmholtz_energy(sc.sp, p0, reg, rest, led);
  CHECK(std::fabs(led.F_f) < 1e-14);
  CHECK(std::fabs(led.F_s) < 1e-14);
  CHECK(led.k_phi_violation == 0.0);

  // linear displacement u = (x, 0): eps = diag(1, 0), closed-form energies
  State lin = rest;
  for (int i = 0; i < sc.mesh->n_vertices(); ++i)
    lin.u[sc.sp.mech.dof(i, 0)] = sc.mesh->vertices[std::size_t(i)].x();
  EnergyLedger led2;
  helmholtz_energy(sc.sp, p0, reg, lin, led2);
  const double want = p0.lame_mu + 0.5 * p0.lame_lambda;  // |Omega| = 1
  CHECK(led2.F_s == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("regularized energy approaches the unregularized one as eps halves") {
  Scenario sc = equilibrium_scenario(4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  State st = blank_state(sc, 0.1);
  for (Eigen::Index i = 0; i < st.phi_n.size(); ++i) {
    const double phi = 0.15 + 0.2 * u01(rng);
    const double sn = 0.2 + 0.6 * u01(rng);
    st.phi_n[i] = phi * sn;
    st.phi_w[i] = phi * (1.0 - sn);
  }
  double prev_gap = kInf;
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
    st.eps = eps;
    const RegularizedModel reg(sc.cap, eps);
    EnergyLedger led;
    helmholtz_energy(sc.sp, sc.params, reg, st, led);
    const double gap = std::fabs(led.F_eps - led.F_f - led.F_s);
    CHECK(gap < prev_gap + 1e-15);
    prev_gap = gap;
  }
  CHECK(prev_gap < 0.02);
}

TEST_CASE("dissipation: uniform state, single-phase oracle, kirchhoff ordering") {
  Scenario sc = equilibrium_scenario(6);
  const RegularizedModel reg(sc.cap, 0.01);

  State uni = blank_state(sc, 0.01);
  EnergyLedger led;
  dissipation(sc.sp, sc.params, reg, uni, led);
  CHECK(led.D == 0.0);
  CHECK(led.kirchhoff_lower_bound == 0.0);

  // single-phase region s_n = 0: D reduces to (1/mu_w) int K |grad p_w|^2
  State sp1 = blank_state(sc, 0.01);
  for (int i = 0; i < sc.mesh->n_vertices(); ++i) {
    const auto& x = sc.mesh->vertices[std::size_t(i)];
    sp1.pi[i] = std::sin(2.0 * x.x()) + 0.3 * x.y();
  }
  EnergyLedger led1;
  dissipation(sc.sp, sc.params, reg, sp1, led1);
  const auto g = cell_gradients(sc.sp.aux, sp1.pi);
  double want = 0.0;
  const double K = sc.params.permeability_scalar(0.25);
  for (int c = 0; c < sc.mesh->n_cells(); ++c)
    want += sc.mesh->cell_volume(c) * K / sc.params.mu_w * g[std::size_t(c)].squaredNorm();
  CHECK(led1.D == doctest::Approx(want).epsilon(1e-12));

  // mixed state: ordering of the two dissipation expressions
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  State mix = blank_state(sc, 0.01);
  for (int i = 0; i < sc.mesh->n_vertices(); ++i) {
    const auto& x = sc.mesh->vertices[std::size_t(i)];
    const double phi = 0.2 + 0.1 * std::sin(3.0 * x.x()) * std::cos(2.0 * x.y());
    const double sn = 0.3 + 0.4 * u01(rng);
    mix.phi_n[i] = phi * sn;
    mix.phi_w[i] = phi * (1.0 - sn);
    mix.pi[i] = 0.4 * std::cos(2.5 * x.x() + x.y());
    mix.chi[i] = soft_constraint_g(sc.params.bounds, 0.01,
                                   std::clamp(phi, 0.100001, 0.399999));
  }
  EnergyLedger ledm;
  dissipation(sc.sp, sc.params, reg, mix, ledm);
  CHECK(ledm.D >= 0.0);
  const double ratio = sc.params.mu_max() / sc.params.k_floor();
  CHECK(ledm.kirchhoff_lower_bound <= ratio * ledm.D + 1e-10 * std::max(1.0, ledm.D));
}

TEST_CASE("energy audit: equilibrium step vanishes, drainage step is consistent") {
  Scenario eq = equilibrium_scenario(4);
  StepControls ctl = eq.ctl;
  ctl.eps_schedule = {1e-2};
  const Trajectory t = run_transient(eq.sp, eq.params, eq.cap, eq.init, 1, ctl);
  REQUIRE_FALSE(t.failed);
  const auto& led = t.ledgers[0];
  CHECK(std::fabs(led.boundary_work) < 1e-11);
  CHECK(std::fabs(led.D) < 1e-12);
  CHECK(led.identity_residual < 1e-9);
  CHECK(led.step_inequality_residual >= -1e-10);

  Scenario dr = drainage_scenario(6);
  StepControls ctl2 = dr.ctl;
  ctl2.eps_schedule = {1e-2};
  ctl2.newton_tol = 1e-14;  // the identity inherits the achieved solve residual
  const Trajectory td = run_transient(dr.sp, dr.params, dr.cap, dr.init, 3, ctl2);
  REQUIRE_FALSE(td.failed);
  for (const auto& l : td.ledgers) {
    CHECK(l.identity_residual < 1e-9);
    CHECK(l.step_inequality_residual >= -1e-8 * std::max(1.0, std::fabs(l.F_eps)));
    CHECK(l.D >= 0.0);
    const double ratio = dr.params.mu_max() / dr.params.k_floor();
    CHECK(l.kirchhoff_lower_bound <= ratio * l.D + 1e-10 * std::max(1.0, l.D));
  }

  // mismatched eps levels are rejected
  State a = td.states[1], b = td.states[2];
  a.eps = 0.02;
  const RegularizedModel reg(dr.cap, 1e-2);
  CHECK_THROWS_AS((void)energy_audit(dr.sp, dr.params, reg, a, b,
                                     StepAuditData{}, ctl2.h),
                  std::invalid_argument);
}

TEST_CASE("graph consistency distances and sign violations") {
  Scenario sc = equilibrium_scenario(3);
  State st = blank_state(sc, 0.01);
  // interior phi with chi = 0 sits on the graph
  auto rep = graph_consistency(st, sc.params.bounds);
  CHECK(rep.max_distance == 0.0);
  CHECK(rep.sign_violations == 0);

  // phi at the lower bound with negative chi: lower branch, distance 0
  st.phi_n[0] = 0.0;
  st.phi_w[0] = sc.params.bounds.lo;
  st.chi[0] = -3.0;
  rep = graph_consistency(st, sc.params.bounds);
  CHECK(rep.max_distance == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(rep.sign_violations == 0);

  // positive chi far from the upper bound is a sign violation; the nearest
  // graph branch is the upper ray, 0.15 away in phi
  st.phi_n[1] = 0.05;
  st.phi_w[1] = 0.2;
  st.chi[1] = 0.5;
  rep = graph_consistency(st, sc.params.bounds);
  CHECK(rep.sign_violations == 1);
  CHECK(rep.max_distance == doctest::Approx(0.15).epsilon(1e-14));
}

TEST_CASE("mass balance: trivial series and pure-neumann conservation") {
  Scenario sc = gravity_neumann_scenario(6);
  const auto single = mass_balance(sc.sp, {sc.init});
  CHECK(single.drift_n[0] == 0.0);
  CHECK(single.drift_w[0] == 0.0);

  StepControls ctl = sc.ctl;
  ctl.eps_schedule = {1e-2};
  const Trajectory t = run_transient(sc.sp, sc.params, sc.cap, sc.init, 5, ctl);
  REQUIRE_FALSE(t.failed);
  const auto ms = mass_balance(sc.sp, t.states);
  for (std::size_t j = 0; j < ms.drift_n.size(); ++j) {
    CHECK(std::fabs(ms.drift_n[j]) <= 1e-10 * std::fabs(ms.mass_n[0]));
    CHECK(std::fabs(ms.drift_w[j]) <= 1e-10 * std::fabs(ms.mass_w[0]));
  }
}

TEST_CASE("mass balance: dirichlet drift equals the accumulated boundary flux") {
  Scenario sc = drainage_scenario(8);
  StepControls ctl = sc.ctl;
  ctl.eps_schedule = {1e-2};
  const Trajectory t = run_transient(sc.sp, sc.params, sc.cap, sc.init, 8, ctl);
  REQUIRE_FALSE(t.failed);
  const auto ms = mass_balance(sc.sp, t.states);
  double acc_n = 0.0, acc_w = 0.0;
  for (std::size_t j = 0; j < t.ledgers.size(); ++j) {
    acc_n += t.ledgers[j].boundary_flux_n;
    acc_w += t.ledgers[j].boundary_flux_w;
    CHECK(ms.drift_n[j + 1] == doctest::Approx(acc_n).epsilon(1e-8));
    CHECK(ms.drift_w[j + 1] == doctest::Approx(acc_w).epsilon(1e-8));
  }
  // the drainage boundary actually moves mass
  CHECK(std::fabs(acc_n) > 1e-6);
}

TEST_CASE("helmholtz energy is midpoint-convex without the gravity part") {
  Scenario sc = equilibrium_scenario(4);
  const double eps = 0.03;
  const RegularizedModel reg(sc.cap, eps);
  const Vec w = lumped_mass_weights(*sc.mesh);

  // F_f + F_s + soft-constraint potential, gravity excluded
  auto convex_part = [&](const State& st) {
    EnergyLedger led;
    helmholtz_energy(sc.sp, sc.params, reg, st, led);
    double gpart = 0.0;
    for (int i = 0; i < sc.mesh->n_vertices(); ++i) {
      const double phi = std::clamp(st.phi_n[i] + st.phi_w[i], sc.params.bounds.lo,
                                    sc.params.bounds.hi);
      gpart += w[i] * soft_constraint_antiderivative(sc.params.bounds, eps, phi);
    }
    return led.F_f + led.F_s + gpart;
  };

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uphi(0.12, 0.38), us(0.02, 0.98), ug(-0.5, 0.5);
  auto random_state = [&]() {
    State st = blank_state(sc, eps);
    for (Eigen::Index i = 0; i < st.phi_n.size(); ++i) {
      const double phi = uphi(rng), s = us(rng);
      st.phi_n[i] = phi * s;
      st.phi_w[i] = phi * (1.0 - s);
    }
    for (Eigen::Index k = 0; k < st.u.size(); ++k) st.u[k] = 0.1 * ug(rng);
    for (Eigen::Index c = 0; c < st.theta.size(); ++c) st.theta[c] = ug(rng);
    return st;
  };
  for (int rep = 0; rep < 100; ++rep) {
    const State a = random_state(), b = random_state();
    State mid = a;
    mid.phi_n = 0.5 * (a.phi_n + b.phi_n);
    mid.phi_w = 0.5 * (a.phi_w + b.phi_w);
    mid.u = 0.5 * (a.u + b.u);
    mid.theta = 0.5 * (a.theta + b.theta);
    CHECK(convex_part(mid) <= 0.5 * (convex_part(a) + convex_part(b)) + 1e-12);
  }
}
