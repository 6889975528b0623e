#ifndef POROMECH_TEST_SCENARIOS_HPP
#define POROMECH_TEST_SCENARIOS_HPP

#include <memory>

#include "poromech/stepper.hpp"

namespace poromech::testing {

struct Scenario {
  std::shared_ptr<Mesh> mesh;
  Spaces sp;
  MaterialParams params;
  CapillaryModel cap = CapillaryModel::brooks_corey(1.0, 3.0);
  StepControls ctl;
  State init;
};

inline MaterialParams base_params(const Mesh& mesh) {
  MaterialParams p;
  const int nv = mesh.n_vertices();
  p.bounds = {0.1, 0.4};
  p.lame_mu = 1.0;
  p.lame_lambda = 10.0;
  p.biot_b = 1.0;
  p.biot_M = 0.5;
  p.phi_ref = Vec::Constant(nv, 0.25);
  p.rock_density_ref = Vec::Constant(nv, 1.0);
  p.p_dirichlet_n = Vec::Zero(nv);
  p.p_dirichlet_w = Vec::Zero(nv);
  return p;
}

/// g = 0, contents at the reference porosity midpoint, Dirichlet pressures
/// matched to the interior reconstruction: stationary at every eps level.
inline Scenario equilibrium_scenario(int n, double h = 0.01) {
  Scenario sc;
  sc.mesh = std::make_shared<Mesh>(make_rectangle_mesh(n, n, 1.0, 1.0, {side::left}));
  sc.sp = make_spaces(*sc.mesh, {side::left}, {side::left});
  sc.params = base_params(*sc.mesh);
  const int nv = sc.mesh->n_vertices();
  const double sn0 = 0.2, phi0 = 0.25;
  const auto hp = hat_pressures(sc.cap, sn0);
  sc.params.p_dirichlet_n = Vec::Constant(nv, hp.n);
  sc.params.p_dirichlet_w = Vec::Constant(nv, hp.w);
  sc.ctl.h = h;
  sc.init = init_state(sc.sp, sc.params, sc.ctl.eps_schedule.back(),
                       Vec::Constant(nv, phi0 * sn0), Vec::Constant(nv, phi0 * (1.0 - sn0)));
  return sc;
}

/// Pure-Neumann flow boundary, gravity-driven redistribution; mechanics held
/// at the bottom edge.
inline Scenario gravity_neumann_scenario(int n, double h = 0.005) {
  Scenario sc;
  sc.mesh = std::make_shared<Mesh>(make_rectangle_mesh(n, n, 1.0, 1.0, {}));
  sc.sp = make_spaces(*sc.mesh, {}, {side::bottom});
  sc.params = base_params(*sc.mesh);
  sc.params.gravity = {0.0, -1.0};
  sc.params.rho_n = 0.5;
  sc.params.rho_w = 1.0;
  const int nv = sc.mesh->n_vertices();
  sc.ctl.h = h;
  sc.init = init_state(sc.sp, sc.params, sc.ctl.eps_schedule.back(),
                       Vec::Constant(nv, 0.25 * 0.3), Vec::Constant(nv, 0.25 * 0.7));
  return sc;
}

/// Gravity-free drainage: constant Dirichlet data on the left edge pull the
/// nonwetting saturation down from its uniform initial value.
inline Scenario drainage_scenario(int n, double h = 0.01) {
  Scenario sc;
  sc.mesh = std::make_shared<Mesh>(make_rectangle_mesh(n, n, 1.0, 1.0, {side::left}));
  sc.sp = make_spaces(*sc.mesh, {side::left}, {side::left});
  sc.params = base_params(*sc.mesh);
  const int nv = sc.mesh->n_vertices();
  const double snD = 0.2;
  const auto hp = hat_pressures(sc.cap, snD);
  sc.params.p_dirichlet_n = Vec::Constant(nv, hp.n);
  sc.params.p_dirichlet_w = Vec::Constant(nv, hp.w);
  sc.ctl.h = h;
  sc.init = init_state(sc.sp, sc.params, sc.ctl.eps_schedule.back(),
                       Vec::Constant(nv, 0.25 * 0.5), Vec::Constant(nv, 0.25 * 0.5));
  return sc;
}

/// Reference compaction: gravity on, overfilled initial porosity relaxing
/// against the bottom support, drainage through the top edge.
inline Scenario compaction_scenario(int n, double h = 0.005) {
  Scenario sc;
  sc.mesh = std::make_shared<Mesh>(make_rectangle_mesh(n, n, 1.0, 1.0, {side::top}));
  sc.sp = make_spaces(*sc.mesh, {side::top}, {side::bottom});
  sc.params = base_params(*sc.mesh);
  sc.params.gravity = {0.0, -0.5};
  sc.params.rho_n = 0.5;
  sc.params.rho_w = 1.0;
  const int nv = sc.mesh->n_vertices();
  const double snD = 0.25;
  const auto hp = hat_pressures(sc.cap, snD);
  sc.params.p_dirichlet_n = Vec::Constant(nv, hp.n);
  sc.params.p_dirichlet_w = Vec::Constant(nv, hp.w);
  sc.ctl.h = h;
  const double phi0 = 0.3, sn0 = 0.25;
  sc.init = init_state(sc.sp, sc.params, sc.ctl.eps_schedule.back(),
                       Vec::Constant(nv, phi0 * sn0), Vec::Constant(nv, phi0 * (1.0 - sn0)));
  return sc;
}

} // namespace poromech::testing

#endif
