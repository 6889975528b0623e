#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "poromech/fem.hpp"
#include "poromech/mesh.hpp"

using namespace poromech;

namespace {

// seeded trig fields give mesh-independent probe ensembles
double trig_field(double x, double y, const std::array<double, 6>& c) {
  return c[0] * std::sin(c[1] * x + c[2]) * std::cos(c[3] * y + c[4]) + c[5] * x * y;
}

std::array<double, 6> random_coeffs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return {u(rng), 2.0 + u(rng), u(rng), 2.0 + u(rng), u(rng), u(rng)};
}

} // namespace

TEST_CASE("mesh generation counts and measure") {
  const Mesh m1 = make_interval_mesh(4);
  CHECK(m1.n_vertices() == 5);
  CHECK(m1.n_cells() == 4);
  CHECK(m1.total_volume() == doctest::Approx(1.0).epsilon(1e-14));

  const Mesh m2 = make_rectangle_mesh(2, 2);
  CHECK(m2.n_vertices() == 9);
  CHECK(m2.n_cells() == 8);
  CHECK(m2.total_volume() == doctest::Approx(1.0).epsilon(1e-14));
  for (int c = 0; c < m2.n_cells(); ++c) CHECK(m2.cell_volume(c) > 0.0);

  const Mesh m3 = make_rectangle_mesh(7, 5, 2.0, 3.0);
  CHECK(m3.total_volume() == doctest::Approx(6.0).epsilon(1e-14));
  CHECK_THROWS_AS(make_interval_mesh(0), std::invalid_argument);
}

TEST_CASE("mass matrix: partition of unity") {
  const Mesh m = make_interval_mesh(2);
  const FeSpace s = make_space(m, SpaceKind::ScalarH1);
  const auto mass = assemble_mass(s);
  mass.assert_symmetric();
  const Vec ones = Vec::Ones(s.n_total());
  CHECK((mass.mat * ones).sum() == doctest::Approx(1.0).epsilon(1e-14));
  // row sums are the hat-function integrals
  const Vec rows = mass.mat * ones;
  CHECK(rows[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(rows[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(lumped_mass_weights(m).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("stiffness annihilates constants on a pure-Neumann space") {
  const Mesh m = make_rectangle_mesh(5, 4);
  const FeSpace s = make_space(m, SpaceKind::ScalarH1);
  const auto K = assemble_stiffness(s);
  const Vec r = K.mat * Vec::Ones(s.n_total());
  CHECK(r.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("assembly consistency: v^T K v equals the exact Dirichlet energy") {
  const Mesh m = make_rectangle_mesh(6, 6);
  const FeSpace s = make_space(m, SpaceKind::ScalarH1);
  const auto K = assemble_stiffness(s);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    Vec v(s.n_total());
    for (int i = 0; i < v.size(); ++i) v[i] = g(rng);
    const double quad = v.dot(K.mat * v);
    double exact = 0.0;
    const auto grads = cell_gradients(s, v);
    for (int c = 0; c < m.n_cells(); ++c)
      exact += m.cell_volume(c) * grads[std::size_t(c)].squaredNorm();
    CHECK(quad == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("elasticity operator is SPD on a constrained vector space") {
  const Mesh m = make_rectangle_mesh(4, 4);
  const FeSpace vs = make_space(m, SpaceKind::VectorH1Dirichlet0,
                                std::vector<int>{side::left});
  const auto E = assemble_elasticity(vs, 1.0, 2.0);
  E.assert_symmetric();
  CHECK(E.spd_probe(vs, 100));
}

TEST_CASE("spd solve: identity, 1d Poisson, and the defining property") {
  const Mesh m = make_interval_mesh(64);
  const FeSpace s = make_space(m, SpaceKind::ScalarH1);

  // identity returns the rhs
  SparseOperator id;
  id.mat.resize(s.n_total(), s.n_total());
  id.mat.setIdentity();
  id.symmetric = true;
  Vec rhs(s.n_total());
  for (int i = 0; i < rhs.size(); ++i) rhs[i] = std::sin(0.1 * i);
  const Field out = solve_spd(id, s, rhs);
  CHECK((out.values - rhs).cwiseAbs().maxCoeff() < 1e-13);

  // u(0) = 0, Neumann at 1, -u'' = 1: nodal values of x - x^2/2
  const Mesh md = make_interval_mesh(64, 1.0, {side::left});
  const FeSpace sd = make_space(md, SpaceKind::ScalarH1Dirichlet0);
  const auto K = assemble_stiffness(sd);
  const Vec load = assemble_load(sd, Vec::Ones(sd.n_total()));
  const Field u = solve_spd(K, sd, load);
  for (int i = 0; i < md.n_vertices(); ++i) {
    const double x = md.vertices[std::size_t(i)].x();
    CHECK(u.values[i] == doctest::Approx(x - 0.5 * x * x).epsilon(1e-10));
  }

  // A solve(A, b) = b on the free dofs
  Vec b2(sd.n_total());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < b2.size(); ++i) b2[i] = g(rng);
  const Field x2 = solve_spd(K, sd, b2);
  const Vec res = K.mat * x2.values;
  double num = 0.0, den = 0.0;
  for (int d : sd.free_dofs) {
    num += (res[d] - b2[d]) * (res[d] - b2[d]);
    den += b2[d] * b2[d];
  }
  CHECK(std::sqrt(num / den) < 1e-12);
}

TEST_CASE("dual norm: examples, linearity and norm axioms") {
  const Mesh m = make_interval_mesh(200, 1.0, {side::left});
  const FeSpace s = make_space(m, SpaceKind::ScalarH1Dirichlet0);

  CHECK(dual_norm_vprime(s, Vec::Zero(s.n_total())) == doctest::Approx(0.0));

  // v -> int v has Riesz representer x - x^2/2 with energy 1/3
  const Vec ell = lumped_mass_weights(m);
  const double dn = dual_norm_vprime(s, ell);
  CHECK(dn == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-5));
  CHECK(dual_norm_vprime(s, Vec(3.5 * ell)) == doctest::Approx(3.5 * dn).epsilon(1e-12));
  CHECK(dual_norm_vprime(s, Vec(-2.0 * ell)) == doctest::Approx(2.0 * dn).epsilon(1e-12));

  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    Vec l1(s.n_total()), l2(s.n_total());
    for (int i = 0; i < l1.size(); ++i) {
      l1[i] = g(rng);
      l2[i] = g(rng);
    }
    const double d1 = dual_norm_vprime(s, l1), d2 = dual_norm_vprime(s, l2);
    CHECK(dual_norm_vprime(s, Vec(l1 + l2)) <= d1 + d2 + 1e-10);
  }

  // pure-Neumann space: mean-free functionals are fine, others rejected
  const Mesh mn = make_interval_mesh(50);
  const FeSpace sn = make_space(mn, SpaceKind::ScalarH1);
  Vec lm = lumped_mass_weights(mn);
  Vec mean_free(sn.n_total());
  for (int i = 0; i < mean_free.size(); ++i)
    mean_free[i] = lm[i] * std::cos(3.14159265358979 * mn.vertices[std::size_t(i)].x());
  mean_free.array() -= mean_free.sum() / mean_free.size() * 0.0;  // already ~mean free
  const double sub = mean_free.sum();
  mean_free[0] -= sub;  // make it exactly mean free
  CHECK(dual_norm_vprime(sn, mean_free) > 0.0);
  CHECK_THROWS_AS((void)dual_norm_vprime(sn, lm), SolveError);
}

TEST_CASE("Poincare and Korn probes are refinement-stable") {
  std::mt19937_64 rng(2024);
  std::vector<std::array<double, 6>> coeffs;
  for (int i = 0; i < 24; ++i) coeffs.push_back(random_coeffs(rng));

  auto poincare_min = [&](int n) {
    const Mesh m = make_rectangle_mesh(n, n, 1.0, 1.0, {side::left});
    const FeSpace s = make_space(m, SpaceKind::ScalarH1Dirichlet0);
    const auto K = assemble_stiffness(s);
    const auto M = assemble_mass(s);
    double qmin = std::numeric_limits<double>::infinity();
    for (const auto& c : coeffs) {
      Vec v = Vec::Zero(s.n_total());
      for (int i = 0; i < m.n_vertices(); ++i) {
        const auto& p = m.vertices[std::size_t(i)];
        if (!s.constrained(i)) v[i] = std::sin(1.5707963 * p.x()) * trig_field(p.x(), p.y(), c);
      }
      const double q = v.dot(K.mat * v) / v.dot(M.mat * v);
      qmin = std::min(qmin, q);
    }
    return qmin;
  };
  const double p8 = poincare_min(8), p16 = poincare_min(16);
  CHECK(p8 > 0.1);
  CHECK(p16 > 0.1);
  CHECK(std::fabs(p8 - p16) / p16 < 0.2);

  auto korn_min = [&](int n) {
    const Mesh m = make_rectangle_mesh(n, n, 1.0, 1.0, {side::left});
    const FeSpace vs = make_space(m, SpaceKind::VectorH1Dirichlet0,
                                  std::vector<int>{side::left});
    const auto E = assemble_elasticity(vs, 1.0, 0.0);  // pure 2 mu eps:eps part
    double qmin = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci + 1 < coeffs.size(); ci += 2) {
      Vec v = Vec::Zero(vs.n_total());
      for (int i = 0; i < m.n_vertices(); ++i) {
        const auto& p = m.vertices[std::size_t(i)];
        if (vs.constrained(i)) continue;
        v[vs.dof(i, 0)] = std::sin(1.5707963 * p.x()) * trig_field(p.x(), p.y(), coeffs[ci]);
        v[vs.dof(i, 1)] = std::sin(1.5707963 * p.x()) * trig_field(p.x(), p.y(), coeffs[ci + 1]);
      }
      double h1 = 0.0;
      for (int comp = 0; comp < 2; ++comp) {
        Vec vc(m.n_vertices());
        for (int i = 0; i < m.n_vertices(); ++i) vc[i] = v[vs.dof(i, comp)];
        const FeSpace sc = make_space(m, SpaceKind::ScalarH1);
        const auto gr = cell_gradients(sc, vc);
        for (int cc = 0; cc < m.n_cells(); ++cc)
          h1 += m.cell_volume(cc) * gr[std::size_t(cc)].squaredNorm();
      }
      qmin = std::min(qmin, v.dot(E.mat * v) / h1);
    }
    return qmin;
  };
  const double k8 = korn_min(8), k16 = korn_min(16);
  CHECK(k8 > 0.0);
  CHECK(std::fabs(k8 - k16) / k16 < 0.2);
}

TEST_CASE("mesh text format roundtrip") {
  const Mesh m = make_rectangle_mesh(3, 2, 1.0, 1.0, {side::top});
  std::stringstream ss;
  write_mesh(m, ss);
  const Mesh r = read_mesh(ss);
  CHECK(r.dim == m.dim);
  CHECK(r.n_vertices() == m.n_vertices());
  CHECK(r.n_cells() == m.n_cells());
  CHECK(r.boundary.size() == m.boundary.size());
  CHECK(r.total_volume() == doctest::Approx(m.total_volume()).epsilon(1e-15));
  int dirichlet_facets = 0;
  for (const auto& f : r.boundary)
    if (f.tag == BoundaryTag::Dirichlet) ++dirichlet_facets;
  CHECK(dirichlet_facets == 3);

  std::stringstream bad("2 1 0");
  CHECK_THROWS_AS((void)read_mesh(bad), std::runtime_error);
}
