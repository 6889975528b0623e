#ifndef POROMECH_COUPLED_HPP
#define POROMECH_COUPLED_HPP

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "poromech/constitutive.hpp"
#include "poromech/fem.hpp"

namespace poromech {

/// Constant material data plus the nodal reference fields. Nondimensional by
/// default (all scales one).
struct MaterialParams {
  double mu_n = 1.0, mu_w = 1.0;
  double rho_n = 1.0, rho_w = 1.0;
  Eigen::Vector2d gravity = Eigen::Vector2d::Zero();
  double lame_mu = 1.0, lame_lambda = 10.0;
  double biot_b = 1.0;
  double biot_M = 1.0;
  PorosityBounds bounds;
  double k0 = 1.0;
  bool kozeny_carman = true;
  Vec phi_ref;           // nodal, values strictly inside the bounds
  Vec rock_density_ref;  // nodal
  Vec f_ext;             // vector-dof layout, may be empty for zero
  Vec p_dirichlet_n, p_dirichlet_w;  // nodal, time-independent

  double mu_max() const { return std::max(mu_n, mu_w); }

  double permeability_scalar(double phi) const {
    if (!kozeny_carman) return k0;
    return k0 * phi * phi * phi / ((1.0 - phi) * (1.0 - phi));
  }
  double k_floor() const { return permeability_scalar(bounds.lo); }
  double k_ceil() const { return permeability_scalar(bounds.hi); }
};

/// Scalar/vector spaces of one scenario. Flow and mechanics may use
/// different Dirichlet partitions of the same boundary.
struct Spaces {
  const Mesh* mesh = nullptr;
  FeSpace flow;  // scalar, Dirichlet on the flow partition (possibly empty)
  FeSpace aux;   // scalar, unconstrained
  FeSpace mech;  // vector, Dirichlet on the mechanics partition
};

inline Spaces make_spaces(const Mesh& mesh, const std::vector<int>& flow_dirichlet,
                          const std::vector<int>& mech_dirichlet) {
  Spaces s;
  s.mesh = &mesh;
  s.flow = make_space(mesh, SpaceKind::ScalarH1Dirichlet0, flow_dirichlet);
  s.aux = make_space(mesh, SpaceKind::ScalarH1);
  s.mech = make_space(mesh, SpaceKind::VectorH1Dirichlet0, mech_dirichlet);
  return s;
}

/// Solver state after one accepted step: contents and multiplier nodal,
/// microscopic compression cellwise, Coussy pressure both cellwise (where the
/// solve enforces pi = M theta) and as its mass-lumped nodal lift.
struct State {
  Vec phi_n, phi_w;  // nodal contents
  Vec u;             // vector dofs
  Vec theta;         // cellwise
  Vec pi_cell;       // cellwise
  Vec pi;            // nodal lift of pi_cell
  Vec chi;           // nodal multiplier
  double eps = 0.0;  // regularization level the state was produced at
};

/// Isotropic Kozeny-Carman permeability per cell (or the constant classical
/// model when disabled).
inline Vec permeability(const MaterialParams& p, const Vec& phi_cell) {
  Vec out(phi_cell.size());
  for (Eigen::Index c = 0; c < phi_cell.size(); ++c) {
    const double phi = phi_cell[c];
    if (phi < p.bounds.lo - 1e-12 || phi > p.bounds.hi + 1e-12)
      throw std::domain_error("permeability: porosity outside the admissible bounds");
    out[c] = p.permeability_scalar(phi);
  }
  return out;
}

inline bool f_ext_nonzero(const MaterialParams& p) { return p.f_ext.size() > 0; }

/// Bulk body force f = (phi_n rho_n + phi_w rho_w + (1-phi_r) rho_sr) g + f_ext,
/// affine in the contents; vector-dof layout.
inline Vec body_force(const Spaces& sp, const MaterialParams& p, const Vec& phi_n,
                      const Vec& phi_w) {
  const Mesh& mesh = *sp.mesh;
  const int d = mesh.dim;
  Vec f = Vec::Zero(sp.mech.n_total());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double bulk = phi_n[i] * p.rho_n + phi_w[i] * p.rho_w +
                        (1.0 - p.phi_ref[i]) * p.rock_density_ref[i];
    for (int a = 0; a < d; ++a) f[sp.mech.dof(i, a)] = bulk * p.gravity[a];
  }
  if (f_ext_nonzero(p)) f += p.f_ext;
  return f;
}

/// Covector int f . v for a nodal vector density.
inline Vec vector_load(const Spaces& sp, const Vec& f_nodal) {
  const auto mass = assemble_mass(sp.aux);
  const Mesh& mesh = *sp.mesh;
  const int d = mesh.dim;
  Vec out = Vec::Zero(sp.mech.n_total());
  for (int a = 0; a < d; ++a) {
    Vec comp(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) comp[i] = f_nodal[sp.mech.dof(i, a)];
    const Vec y = mass.mat * comp;
    for (int i = 0; i < mesh.n_vertices(); ++i) out[sp.mech.dof(i, a)] += y[i];
  }
  return out;
}

/// Quasi-static mechanics solve: int 2 mu eps(u):eps(v) + lambda div u div v
/// = int b pi div v + int f . v for all v in V^d. The traction condition
/// sigma n = b pi n on the Neumann part is natural in this form.
inline Vec solve_mechanics(const Spaces& sp, const MaterialParams& p, const Vec& pi_cell,
                           const Vec& f_nodal) {
  if (sp.mech.n_free() == sp.mech.n_total())
    throw std::invalid_argument("mechanics needs a nonempty Dirichlet part");
  const auto E = assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda);
  const auto B = assemble_div_cell(sp.mech, p.biot_b);
  const Vec rhs = B.mat * pi_cell + vector_load(sp, f_nodal);
  return solve_spd(E, sp.mech, rhs).values;
}

/// Initial equilibrium: given contents phi0, solve the coupled linear system
/// for (u0, theta0) by substituting theta out, which augments the elasticity
/// form by b^2 M (div u, div v) and keeps it SPD.
inline State init_state(const Spaces& sp, const MaterialParams& p, double eps0,
                        const Vec& phi_n0, const Vec& phi_w0) {
  const Mesh& mesh = *sp.mesh;
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = phi_n0[i] + phi_w0[i];
    if (phi_n0[i] < -1e-14 || phi_w0[i] < -1e-14 || phi < p.bounds.lo - 1e-12 ||
        phi > p.bounds.hi + 1e-12)
      throw std::domain_error("initial contents leave K_phi");
  }
  SparseOperator Eaug =
      assemble_elasticity(sp.mech, p.lame_mu, p.lame_lambda);
  const SparseOperator Edd =
      assemble_elasticity(sp.mech, 0.0, p.biot_b * p.biot_b * p.biot_M);
  Eaug.mat += Edd.mat;
  const auto B = assemble_div_cell(sp.mech, p.biot_b);
  const Vec phi0_cell = cell_means(mesh, Vec(phi_n0 + phi_w0));
  const Vec phir_cell = cell_means(mesh, p.phi_ref);
  const Vec f = body_force(sp, p, phi_n0, phi_w0);
  const Vec rhs = B.mat * Vec(p.biot_M * (phi0_cell - phir_cell)) + vector_load(sp, f);

  State st;
  st.u = solve_spd(Eaug, sp.mech, rhs).values;
  st.theta = phi0_cell - phir_cell - p.biot_b * cell_divergence(sp.mech, st.u);
  st.pi_cell = p.biot_M * st.theta;
  st.pi = lift_cell_to_nodes(mesh, st.pi_cell);
  st.phi_n = phi_n0;
  st.phi_w = phi_w0;
  st.eps = eps0;
  st.chi = Vec(mesh.n_vertices());
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    const double phi = std::clamp(phi_n0[i] + phi_w0[i],
                                  std::nextafter(p.bounds.lo, 1.0),
                                  std::nextafter(p.bounds.hi, 0.0));
    st.chi[i] = soft_constraint_g(p.bounds, eps0, phi);
  }
  return st;
}

struct WeakCouplingReport {
  double c1_estimate = 0.0;   // lower bound of the true constant
  bool satisfied = false;     // advisory: lambda > M b^2 c1_estimate
  double margin = 0.0;        // lambda - M b^2 c1_estimate
  double lambda_tilde = 0.0;  // normalization used in the probe problems
  int samples = 0;
};

/// Randomized estimate of the elliptic-regularity constant: solve the
/// normalized problems with trig-polynomial right-hand sides and bound
/// lambda_tilde |grad div v| / |w| from below by sampling. div v of a P1
/// field is lifted to nodes before taking its gradient, so the estimate is a
/// discrete surrogate, stated as advisory in the report.
inline WeakCouplingReport weak_coupling_audit(const Spaces& sp, const MaterialParams& p,
                                              int samples, unsigned seed = 2030) {
  if (samples < 1) throw std::invalid_argument("weak coupling audit needs samples >= 1");
  const Mesh& mesh = *sp.mesh;
  const double lambda_tilde = p.lame_lambda / (2.0 * p.lame_mu);
  const SparseOperator A = assemble_elasticity(sp.mech, 0.5, lambda_tilde);
  const SparseOperator Dn = assemble_div_nodal(sp.mech, 1.0);
  const auto mass_aux = assemble_mass(sp.aux);
  const auto stiff_aux = assemble_stiffness(sp.aux);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_int_distribution<int> uk(1, 3);

  auto grad_div_norm = [&](const Vec& v) {
    const Vec div_cell = cell_divergence(sp.mech, v);
    const Vec div_nodal = lift_cell_to_nodes(mesh, div_cell);
    const auto g = cell_gradients(sp.aux, div_nodal);
    double n2 = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c)
      n2 += mesh.cell_volume(c) * g[std::size_t(c)].squaredNorm();
    return std::sqrt(n2);
  };

  WeakCouplingReport rep;
  rep.lambda_tilde = lambda_tilde;
  rep.samples = samples;
  for (int s = 0; s < samples; ++s) {
    const double a1 = uc(rng), a2 = uc(rng), ph1 = uc(rng), ph2 = uc(rng);
    const int k1 = uk(rng), k2 = uk(rng);
    if (s % 2 == 0) {
      // H1 right-hand side: int (eps(v):eps(vt) + lt div v div vt) = int w div vt
      Vec w(mesh.n_vertices());
      for (int i = 0; i < mesh.n_vertices(); ++i) {
        const auto& x = mesh.vertices[std::size_t(i)];
        w[i] = a1 * std::cos(k1 * 3.14159265358979 * x.x() + ph1) +
               a2 * std::cos(k2 * 3.14159265358979 * x.y() + ph2);
      }
      const Vec rhs = Dn.mat * w;
      const Vec v = solve_spd(A, sp.mech, rhs).values;
      const double wl2 = std::sqrt(w.dot(mass_aux.mat * w));
      const double wh1 = std::sqrt(wl2 * wl2 + w.dot(stiff_aux.mat * w));
      if (wh1 > 0.0)
        rep.c1_estimate = std::max(rep.c1_estimate, lambda_tilde * grad_div_norm(v) / wh1);
    } else {
      // L2 vector right-hand side
      Vec f = Vec::Zero(sp.mech.n_total());
      for (int i = 0; i < mesh.n_vertices(); ++i) {
        const auto& x = mesh.vertices[std::size_t(i)];
        for (int a = 0; a < mesh.dim; ++a)
          f[sp.mech.dof(i, a)] = (a == 0 ? a1 : a2) *
                                 std::sin(k1 * 3.14159265358979 * x.x() + ph1) *
                                 std::cos(k2 * 3.14159265358979 * x.y() + ph2);
      }
      const Vec rhs = vector_load(sp, f);
      const Vec v = solve_spd(A, sp.mech, rhs).values;
      double fl2 = 0.0;
      for (int a = 0; a < mesh.dim; ++a) {
        Vec comp(mesh.n_vertices());
        for (int i = 0; i < mesh.n_vertices(); ++i) comp[i] = f[sp.mech.dof(i, a)];
        fl2 += comp.dot(mass_aux.mat * comp);
      }
      fl2 = std::sqrt(fl2);
      if (fl2 > 0.0)
        rep.c1_estimate = std::max(rep.c1_estimate, lambda_tilde * grad_div_norm(v) / fl2);
    }
  }
  rep.margin = p.lame_lambda - p.biot_M * p.biot_b * p.biot_b * rep.c1_estimate;
  rep.satisfied = rep.margin > 0.0;
  return rep;
}

} // namespace poromech

#endif
