#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "poromech/coupled.hpp"

using namespace poromech;

namespace {

MaterialParams default_params(const Spaces& sp) {
  MaterialParams p;
  const int nv = sp.mesh->n_vertices();
  p.phi_ref = Vec::Constant(nv, 0.25);
  p.rock_density_ref = Vec::Constant(nv, 1.0);
  p.p_dirichlet_n = Vec::Zero(nv);
  p.p_dirichlet_w = Vec::Zero(nv);
  return p;
}

} // namespace

TEST_CASE("kozeny-carman permeability: value, monotonicity, constant mode") {
  const Mesh mesh = make_rectangle_mesh(2, 2);
  const Spaces sp = make_spaces(mesh, {}, {side::left});
  MaterialParams p = default_params(sp);
  p.bounds = {0.1, 0.6};

  CHECK(p.permeability_scalar(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  Vec phis(5);
  phis << 0.15, 0.2, 0.3, 0.4, 0.55;
  const Vec k = permeability(p, phis);
  for (int i = 0; i + 1 < 5; ++i) CHECK(k[i] <= k[i + 1]);
  for (int i = 0; i < 5; ++i) {
    CHECK(k[i] >= p.k_floor() - 1e-15);
    CHECK(k[i] <= p.k_ceil() + 1e-15);
  }

  p.kozeny_carman = false;
  const Vec kc = permeability(p, phis);
  for (int i = 0; i < 5; ++i) CHECK(kc[i] == p.k0);

  p.kozeny_carman = true;
  Vec bad(1);
  bad << 0.99;
  CHECK_THROWS_AS((void)permeability(p, bad), std::domain_error);
}

TEST_CASE("body force: zero, arithmetic and affinity") {
  const Mesh mesh = make_rectangle_mesh(3, 3);
  const Spaces sp = make_spaces(mesh, {}, {side::bottom});
  MaterialParams p = default_params(sp);
  const int nv = mesh.n_vertices();

  const Vec fn0 = body_force(sp, p, Vec::Zero(nv), Vec::Constant(nv, 0.25));
  CHECK(fn0.cwiseAbs().maxCoeff() == 0.0);  // g = 0, f_ext = 0

  p.gravity = {0.0, -9.81};
  p.rho_w = 1000.0;
  p.rho_n = 1.0;
  p.rock_density_ref = Vec::Constant(nv, 2650.0);
  const Vec f = body_force(sp, p, Vec::Zero(nv), Vec::Constant(nv, 0.25));
  const double want = -9.81 * (0.25 * 1000.0 + 0.75 * 2650.0);
  for (int i = 0; i < nv; ++i) {
    CHECK(f[sp.mech.dof(i, 0)] == doctest::Approx(0.0));
    CHECK(f[sp.mech.dof(i, 1)] == doctest::Approx(want).epsilon(1e-12));
  }

  // affinity in the contents
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  Vec an(nv), aw(nv), bn(nv), bw(nv);
  for (int i = 0; i < nv; ++i) {
    an[i] = u(rng); aw[i] = u(rng); bn[i] = u(rng); bw[i] = u(rng);
  }
  const double t = 0.3;
  const Vec fa = body_force(sp, p, an, aw);
  const Vec fb = body_force(sp, p, bn, bw);
  const Vec fm = body_force(sp, p, Vec(t * an + (1 - t) * bn), Vec(t * aw + (1 - t) * bw));
  CHECK((fm - (t * fa + (1 - t) * fb)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mechanics solve: trivial kernels and manufactured solution") {
  const Mesh mesh = make_rectangle_mesh(8, 8);
  const Spaces sp = make_spaces(mesh, {}, {side::left});
  MaterialParams p = default_params(sp);
  p.lame_mu = 1.0;
  p.lame_lambda = 2.0;

  // pi = 0, f = 0 -> u = 0
  const Vec u0 = solve_mechanics(sp, p, Vec::Zero(mesh.n_cells()),
                                 Vec::Zero(sp.mech.n_total()));
  CHECK(u0.cwiseAbs().maxCoeff() < 1e-14);

  // constant pi, full Dirichlet boundary, f = 0 -> u = 0
  {
    const Spaces spd = make_spaces(mesh, {}, {side::left, side::right, side::bottom, side::top});
    const Vec uc = solve_mechanics(spd, p, Vec::Constant(mesh.n_cells(), 3.0),
                                   Vec::Zero(spd.mech.n_total()));
    CHECK(uc.cwiseAbs().maxCoeff() < 1e-11);
  }

  // manufactured 1d: u*(x) = sin(pi x), load f = (2mu+lambda) pi^2 sin(pi x)
  auto run_1d = [&](int n) {
    const Mesh m1 = make_interval_mesh(n, 1.0, {side::left, side::right});
    const Spaces s1 = make_spaces(m1, {}, {side::left, side::right});
    MaterialParams p1 = default_params(s1);
    p1.lame_mu = 1.0;
    p1.lame_lambda = 2.0;
    const double pi_c = 3.14159265358979324;
    Vec f(s1.mech.n_total());
    for (int i = 0; i < m1.n_vertices(); ++i)
      f[i] = (2.0 * p1.lame_mu + p1.lame_lambda) * pi_c * pi_c *
             std::sin(pi_c * m1.vertices[std::size_t(i)].x());
    const Vec u = solve_mechanics(s1, p1, Vec::Zero(m1.n_cells()), f);
    double err = 0.0;
    for (int i = 0; i < m1.n_vertices(); ++i)
      err = std::max(err, std::fabs(u[i] - std::sin(pi_c * m1.vertices[std::size_t(i)].x())));
    return err;
  };
  const double e16 = run_1d(16), e32 = run_1d(32);
  CHECK(e32 < e16);
  CHECK(e16 / e32 > 3.0);  // second order (nodal) for the smooth solution
  CHECK(e32 < 3e-3);
}

TEST_CASE("mechanics energy identity at the solution") {
  const Mesh mesh = make_rectangle_mesh(6, 6);
  const Spaces sp = make_spaces(mesh, {}, {side::left});
  MaterialParams p = default_params(sp);
  p.lame_mu = 0.7;
  p.lame_lambda = 3.0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec pi_cell(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) pi_cell[c] = u(rng);
  Vec f(sp.mech.n_total());
  for (int i = 0; i < f.size(); ++i) f[i] = 0.5 * u(rng);
  const Vec uu = solve_mechanics(sp, p, pi_cell, f);

  const auto E = assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda);
  const auto B = assemble_div_cell(sp.mech, p.biot_b);
  const double lhs = uu.dot(E.mat * uu);
  const double rhs = uu.dot(B.mat * pi_cell) + uu.dot(vector_load(sp, f));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("initial equilibrium state") {
  const Mesh mesh = make_rectangle_mesh(6, 6);
  const Spaces sp = make_spaces(mesh, {}, {side::left});
  MaterialParams p = default_params(sp);
  const int nv = mesh.n_vertices();

  // rest state: phi0 = phi_ref, no forces
  const State rest = init_state(sp, p, 0.1, Vec::Constant(nv, 0.05), Vec::Constant(nv, 0.2));
  CHECK(rest.u.cwiseAbs().maxCoeff() < 1e-13);
  CHECK(rest.theta.cwiseAbs().maxCoeff() < 1e-13);
  CHECK(rest.pi.cwiseAbs().maxCoeff() < 1e-13);
  CHECK(rest.chi.cwiseAbs().maxCoeff() < 1e-12);  // contents sit at the midpoint

  // loaded state still satisfies the cellwise constraint and the variational
  // characterization against random test fields
  MaterialParams pg = p;
  pg.gravity = {0.0, -1.0};
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  Vec phin(nv), phiw(nv);
  for (int i = 0; i < nv; ++i) {
    const double phi = 0.15 + 0.2 * uu(rng);
    const double sn = 0.3 * uu(rng);
    phin[i] = phi * sn;
    phiw[i] = phi * (1.0 - sn);
  }
  const State st = init_state(sp, pg, 0.1, phin, phiw);
  const Vec phi_cell = cell_means(mesh, Vec(phin + phiw));
  const Vec phir_cell = cell_means(mesh, pg.phi_ref);
  const Vec constraint = phi_cell - pg.biot_b * cell_divergence(sp.mech, st.u) -
                         st.theta - phir_cell;
  CHECK(constraint.cwiseAbs().maxCoeff() < 1e-12);

  // weak mechanics residual with pi0 = M theta0 against random fields
  const auto E = assemble_elasticity(sp.mech, pg.lame_mu, pg.lame_lambda);
  const auto B = assemble_div_cell(sp.mech, pg.biot_b);
  const Vec resid = E.mat * st.u - B.mat * st.pi_cell -
                    vector_load(sp, body_force(sp, pg, phin, phiw));
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    Vec v = Vec::Zero(sp.mech.n_total());
    for (int dof : sp.mech.free_dofs) v[dof] = g(rng);
    CHECK(std::fabs(resid.dot(v)) / v.norm() < 1e-10);
  }

  Vec bad = Vec::Constant(nv, 0.5);
  CHECK_THROWS_AS((void)init_state(sp, p, 0.1, bad, bad), std::domain_error);
}

TEST_CASE("weak coupling audit: monotone in samples, refinement-stable") {
  auto run = [&](int n, int samples) {
    const Mesh mesh = make_rectangle_mesh(n, n);
    const Spaces sp = make_spaces(mesh, {}, {side::left});
    MaterialParams p = default_params(sp);
    p.lame_mu = 1.0;
    p.lame_lambda = 10.0;
    p.biot_M = 0.5;
    return weak_coupling_audit(sp, p, samples);
  };
  const auto r8a = run(8, 16);
  const auto r8b = run(8, 64);
  CHECK(r8a.c1_estimate > 0.0);
  CHECK(r8b.c1_estimate >= r8a.c1_estimate);  // a max never decreases
  const auto r16 = run(16, 64);
  CHECK(std::fabs(r16.c1_estimate - r8b.c1_estimate) /
            std::max(r16.c1_estimate, r8b.c1_estimate) <
        0.25);
  CHECK(r8b.samples == 64);
}

TEST_CASE("flow operators inherit the permeability bounds") {
  const Mesh mesh = make_rectangle_mesh(6, 6);
  const Spaces sp = make_spaces(mesh, {side::left}, {side::left});
  MaterialParams p = default_params(sp);
  p.bounds = {0.1, 0.4};
  p.mu_n = 2.0;
  p.mu_w = 0.5;

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uphi(0.1, 0.4);
  Vec phi_cell(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) phi_cell[c] = uphi(rng);
  Vec coeff = permeability(p, phi_cell) / p.mu_n;
  const auto A_k = assemble_stiffness(sp.flow, &coeff);
  const auto A_1 = assemble_stiffness(sp.flow);

  const double lo = p.k_floor() / p.mu_max();
  const double hi = p.k_ceil() / std::min(p.mu_n, p.mu_w);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    Vec v = Vec::Zero(sp.flow.n_total());
    for (int d : sp.flow.free_dofs) v[d] = g(rng);
    const double q = v.dot(A_k.mat * v) / v.dot(A_1.mat * v);
    CHECK(q >= lo - 1e-13);
    CHECK(q <= hi + 1e-13);
  }
}
