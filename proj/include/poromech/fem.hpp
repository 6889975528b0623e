#ifndef POROMECH_FEM_HPP
#define POROMECH_FEM_HPP

#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include "poromech/mesh.hpp"

namespace poromech {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

struct SolveError : std::runtime_error {
  double residual;
  explicit SolveError(const std::string& what, double res = -1.0)
      : std::runtime_error(what), residual(res) {}
};

enum class SpaceKind { ScalarH1, ScalarH1Dirichlet0, VectorH1Dirichlet0 };

/// P1 space on a mesh; Dirichlet variants constrain exactly the vertices on
/// the selected boundary sides. Dof layout: vertex * components + component.
struct FeSpace {
  const Mesh* mesh = nullptr;
  SpaceKind kind = SpaceKind::ScalarH1;
  int components = 1;
  std::vector<char> vertex_constrained;  // per vertex
  std::vector<int> free_index;           // total dof -> free dof or -1
  std::vector<int> free_dofs;            // free dof -> total dof

  int n_total() const { return components * mesh->n_vertices(); }
  int n_free() const { return int(free_dofs.size()); }
  int dof(int vertex, int comp = 0) const { return vertex * components + comp; }
  bool constrained(int vertex) const { return vertex_constrained[std::size_t(vertex)] != 0; }
};

/// Dirichlet vertices come from the listed sides, or from the mesh's own
/// facet tags when no side list is given.
inline FeSpace make_space(const Mesh& mesh, SpaceKind kind,
                          const std::vector<int>* dirichlet_sides = nullptr) {
  FeSpace s;
  s.mesh = &mesh;
  s.kind = kind;
  s.components = (kind == SpaceKind::VectorH1Dirichlet0) ? mesh.dim : 1;
  s.vertex_constrained.assign(std::size_t(mesh.n_vertices()), 0);
  if (kind != SpaceKind::ScalarH1) {
    for (const auto& f : mesh.boundary) {
      bool dir = false;
      if (dirichlet_sides && f.side >= 0) {
        for (int d : *dirichlet_sides)
          if (d == f.side) dir = true;
      } else {
        dir = (f.tag == BoundaryTag::Dirichlet);
      }
      if (!dir) continue;
      for (int k = 0; k < mesh.dim; ++k)
        if (f.v[std::size_t(k)] >= 0) s.vertex_constrained[std::size_t(f.v[std::size_t(k)])] = 1;
    }
  }
  s.free_index.assign(std::size_t(s.n_total()), -1);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (s.constrained(v)) continue;
    for (int c = 0; c < s.components; ++c) {
      s.free_index[std::size_t(s.dof(v, c))] = int(s.free_dofs.size());
      s.free_dofs.push_back(s.dof(v, c));
    }
  }
  return s;
}

inline FeSpace make_space(const Mesh& mesh, SpaceKind kind,
                          const std::vector<int>& dirichlet_sides) {
  return make_space(mesh, kind, &dirichlet_sides);
}

/// Nodal coefficient field over a space (Dirichlet values stored in place).
struct Field {
  const FeSpace* space = nullptr;
  Vec values;

  Field() = default;
  explicit Field(const FeSpace& s) : space(&s), values(Vec::Zero(s.n_total())) {}
  Field(const FeSpace& s, Vec v) : space(&s), values(std::move(v)) {
    if (values.size() != s.n_total())
      throw std::invalid_argument("field length does not match its space");
  }
};

/// Assembled sparse bilinear form. Symmetric operators can assert their
/// symmetry; SPD candidates can be probed with random Rayleigh quotients.
struct SparseOperator {
  SpMat mat;
  bool symmetric = false;

  int rows() const { return int(mat.rows()); }
  int cols() const { return int(mat.cols()); }

  double symmetry_defect() const {
    SpMat d = SpMat(mat.transpose()) - mat;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < d.outerSize(); ++k)
      for (SpMat::InnerIterator it(d, k); it; ++it) num = std::max(num, std::fabs(it.value()));
    for (int k = 0; k < mat.outerSize(); ++k)
      for (SpMat::InnerIterator it(mat, k); it; ++it) den = std::max(den, std::fabs(it.value()));
    return den > 0.0 ? num / den : num;
  }

  void assert_symmetric(double tol = 1e-12) const {
    if (symmetry_defect() > tol)
      throw std::logic_error("operator fails its symmetry assertion");
  }

  /// Randomized positive-definiteness probe over free-dof vectors.
  bool spd_probe(const FeSpace& space, int samples = 100, unsigned seed = 1234) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int s = 0; s < samples; ++s) {
      Vec x = Vec::Zero(mat.rows());
      for (int d : space.free_dofs) x[d] = g(rng);
      const double q = x.dot(mat * x);
      if (!(q > 0.0)) return false;
    }
    return true;
  }
};

namespace detail {

inline void local_mass(const Mesh& mesh, int c, double scale,
                       std::array<std::array<double, 3>, 3>& m) {
  const double vol = mesh.cell_volume(c) * scale;
  const int n = mesh.verts_per_cell();
  const double diag = (mesh.dim == 1) ? vol / 3.0 : vol / 6.0;
  const double off = (mesh.dim == 1) ? vol / 6.0 : vol / 12.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m[std::size_t(i)][std::size_t(j)] = (i == j) ? diag : off;
}

} // namespace detail

/// Consistent P1 mass matrix, optionally weighted by a cellwise coefficient.
inline SparseOperator assemble_mass(const FeSpace& s, const Vec* cell_coeff = nullptr) {
  const Mesh& mesh = *s.mesh;
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(mesh.n_cells()) * 9);
  std::array<std::array<double, 3>, 3> loc{};
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double w = cell_coeff ? (*cell_coeff)[c] : 1.0;
    detail::local_mass(mesh, c, w, loc);
    const auto& k = mesh.cells[std::size_t(c)];
    const int n = mesh.verts_per_cell();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        trip.emplace_back(k[std::size_t(i)], k[std::size_t(j)], loc[std::size_t(i)][std::size_t(j)]);
  }
  SparseOperator op;
  op.mat.resize(s.n_total(), s.n_total());
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.symmetric = true;
  return op;
}

/// Vertex quadrature weights w_i = integral of the i-th hat function. The
/// lumped sum over nodal values is the exact integral of a P1 interpolant.
inline Vec lumped_mass_weights(const Mesh& mesh) {
  Vec w = Vec::Zero(mesh.n_vertices());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double share = mesh.cell_volume(c) / mesh.verts_per_cell();
    for (int i = 0; i < mesh.verts_per_cell(); ++i)
      w[mesh.cells[std::size_t(c)][std::size_t(i)]] += share;
  }
  return w;
}

/// Stiffness with a cellwise scalar coefficient: int c grad(u).grad(v).
inline SparseOperator assemble_stiffness(const FeSpace& s, const Vec* cell_coeff = nullptr) {
  const Mesh& mesh = *s.mesh;
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(mesh.n_cells()) * 9);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double w = (cell_coeff ? (*cell_coeff)[c] : 1.0) * mesh.cell_volume(c);
    const auto g = mesh.hat_gradients(c);
    const auto& k = mesh.cells[std::size_t(c)];
    const int n = mesh.verts_per_cell();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        trip.emplace_back(k[std::size_t(i)], k[std::size_t(j)],
                          w * g[std::size_t(i)].dot(g[std::size_t(j)]));
  }
  SparseOperator op;
  op.mat.resize(s.n_total(), s.n_total());
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.symmetric = true;
  return op;
}

/// Linear elasticity form int 2 mu eps(u):eps(v) + lambda div(u) div(v) on a
/// vector space.
inline SparseOperator assemble_elasticity(const FeSpace& s, double mu, double lambda) {
  const Mesh& mesh = *s.mesh;
  const int d = mesh.dim;
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(mesh.n_cells()) * 36);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    const auto g = mesh.hat_gradients(c);
    const auto& kk = mesh.cells[std::size_t(c)];
    const int n = mesh.verts_per_cell();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            const double gi_a = g[std::size_t(i)][a], gj_b = g[std::size_t(j)][b];
            const double gi_b = g[std::size_t(i)][b], gj_a = g[std::size_t(j)][a];
            double val = mu * ((a == b ? g[std::size_t(i)].dot(g[std::size_t(j)]) : 0.0) +
                               gi_b * gj_a);
            val += lambda * gi_a * gj_b;
            trip.emplace_back(s.dof(kk[std::size_t(i)], a), s.dof(kk[std::size_t(j)], b), vol * val);
          }
  }
  SparseOperator op;
  op.mat.resize(s.n_total(), s.n_total());
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.symmetric = true;
  return op;
}

/// Coupling (w, v) -> int b w div(v) with w piecewise constant per cell.
/// Rows are vector dofs, columns cells.
inline SparseOperator assemble_div_cell(const FeSpace& vs, double b) {
  const Mesh& mesh = *vs.mesh;
  const int d = mesh.dim;
  std::vector<Triplet> trip;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    const auto g = mesh.hat_gradients(c);
    const auto& kk = mesh.cells[std::size_t(c)];
    for (int i = 0; i < mesh.verts_per_cell(); ++i)
      for (int a = 0; a < d; ++a)
        trip.emplace_back(vs.dof(kk[std::size_t(i)], a), c, b * vol * g[std::size_t(i)][a]);
  }
  SparseOperator op;
  op.mat.resize(vs.n_total(), mesh.n_cells());
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.symmetric = false;
  return op;
}

/// Coupling (w, v) -> int b w div(v) with w nodal P1 (exact quadrature).
inline SparseOperator assemble_div_nodal(const FeSpace& vs, double b) {
  const Mesh& mesh = *vs.mesh;
  const int d = mesh.dim;
  std::vector<Triplet> trip;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    const auto g = mesh.hat_gradients(c);
    const auto& kk = mesh.cells[std::size_t(c)];
    const int n = mesh.verts_per_cell();
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a)
        for (int j = 0; j < n; ++j)
          trip.emplace_back(vs.dof(kk[std::size_t(i)], a), kk[std::size_t(j)],
                            b * vol / n * g[std::size_t(i)][a]);
  }
  SparseOperator op;
  op.mat.resize(vs.n_total(), mesh.n_vertices());
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.symmetric = false;
  return op;
}

/// Load covector int f v from a nodal density (exact for P1 f).
inline Vec assemble_load(const FeSpace& s, const Vec& nodal_density) {
  return assemble_mass(s).mat * nodal_density;
}

/// Per-cell gradient of a nodal scalar field.
inline std::vector<Eigen::Vector2d> cell_gradients(const FeSpace& s, const Vec& nodal) {
  const Mesh& mesh = *s.mesh;
  std::vector<Eigen::Vector2d> out(std::size_t(mesh.n_cells()), Eigen::Vector2d::Zero());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.hat_gradients(c);
    const auto& kk = mesh.cells[std::size_t(c)];
    for (int i = 0; i < mesh.verts_per_cell(); ++i)
      out[std::size_t(c)] += nodal[kk[std::size_t(i)]] * g[std::size_t(i)];
  }
  return out;
}

/// Per-cell divergence of a vector field.
inline Vec cell_divergence(const FeSpace& vs, const Vec& nodal) {
  const Mesh& mesh = *vs.mesh;
  const int d = mesh.dim;
  Vec out = Vec::Zero(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.hat_gradients(c);
    const auto& kk = mesh.cells[std::size_t(c)];
    double div = 0.0;
    for (int i = 0; i < mesh.verts_per_cell(); ++i)
      for (int a = 0; a < d; ++a) div += nodal[vs.dof(kk[std::size_t(i)], a)] * g[std::size_t(i)][a];
    out[c] = div;
  }
  return out;
}

/// Per-cell mean of a nodal scalar field (the L2 projection onto piecewise
/// constants on simplices).
inline Vec cell_means(const Mesh& mesh, const Vec& nodal) {
  Vec out = Vec::Zero(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    double m = 0.0;
    for (int i = 0; i < mesh.verts_per_cell(); ++i)
      m += nodal[mesh.cells[std::size_t(c)][std::size_t(i)]];
    out[c] = m / mesh.verts_per_cell();
  }
  return out;
}

/// Mass-lumped lift of a cellwise field to vertices; the exact adjoint of
/// cell averaging under vertex quadrature.
inline Vec lift_cell_to_nodes(const Mesh& mesh, const Vec& cellwise) {
  Vec num = Vec::Zero(mesh.n_vertices());
  Vec den = Vec::Zero(mesh.n_vertices());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double share = mesh.cell_volume(c) / mesh.verts_per_cell();
    for (int i = 0; i < mesh.verts_per_cell(); ++i) {
      const int v = mesh.cells[std::size_t(c)][std::size_t(i)];
      num[v] += share * cellwise[c];
      den[v] += share;
    }
  }
  return num.cwiseQuotient(den);
}

namespace detail {

inline SpMat reduce(const SpMat& A, const std::vector<int>& rows,
                    const std::vector<int>& cols, const std::vector<int>& row_index,
                    const std::vector<int>& col_index) {
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(A.nonZeros()));
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      const int r = row_index[std::size_t(it.row())];
      const int c = col_index[std::size_t(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  SpMat out(int(rows.size()), int(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

} // namespace detail

/// SPD solve on the free dofs of a space: rhs is a covector over all dofs,
/// Dirichlet values of `out` are kept and moved to the right-hand side.
/// Direct Cholesky first, conjugate-gradient fallback, relative residual
/// target 1e-12.
inline Field solve_spd(const SparseOperator& op, const FeSpace& s, const Vec& rhs,
                       const Field* dirichlet = nullptr) {
  Field out = dirichlet ? *dirichlet : Field(s);
  const auto& free = s.free_dofs;
  SpMat aff = detail::reduce(op.mat, free, free, s.free_index, s.free_index);
  Vec b(free.size());
  Vec full_fixed = out.values;
  for (int d : free) full_fixed[d] = 0.0;
  Vec corr = op.mat * full_fixed;
  for (std::size_t i = 0; i < free.size(); ++i)
    b[Eigen::Index(i)] = rhs[free[i]] - corr[free[i]];

  Eigen::SimplicialLDLT<SpMat> chol(aff);
  Vec x;
  bool ok = false;
  const double bnorm = b.norm();
  double anorm = 0.0;
  for (int k = 0; k < aff.outerSize(); ++k)
    for (SpMat::InnerIterator it(aff, k); it; ++it) anorm = std::max(anorm, std::fabs(it.value()));
  anorm *= std::sqrt(double(aff.rows()));
  // normwise backward error; 1e-12 is the acceptance target
  auto rel_res = [&](const Vec& y) {
    const double den = anorm * y.norm() + bnorm;
    return den > 0.0 ? (aff * y - b).norm() / den : (aff * y - b).norm();
  };
  if (chol.info() == Eigen::Success) {
    x = chol.solve(b);
    ok = (chol.info() == Eigen::Success);
    for (int ref = 0; ok && ref < 3 && rel_res(x) > 1e-15; ++ref)
      x += chol.solve(Vec(b - aff * x));
  }
  if (!ok || rel_res(x) > 1e-12) {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg(aff);
    cg.setTolerance(1e-14);
    cg.setMaxIterations(20 * aff.rows());
    Vec x2 = ok ? Vec(cg.solveWithGuess(b, x)) : Vec(cg.solve(b));
    if (rel_res(x2) < (ok ? rel_res(x) : 1e300)) x = x2;
    if (rel_res(x) > 1e-12)
      throw SolveError("spd solve missed its residual target", rel_res(x));
  }
  for (std::size_t i = 0; i < free.size(); ++i) out.values[free[i]] = x[Eigen::Index(i)];
  return out;
}

/// V' dual norm of a covector over the Dirichlet-constrained scalar space:
/// Riesz solve of int grad(r).grad(v) = <l, v>, returning |grad r|_L2.
/// On a pure-Neumann space the functional must annihilate constants; one
/// vertex is pinned, which then does not change grad(r).
inline double dual_norm_vprime(const FeSpace& s, const Vec& functional) {
  if (s.components != 1)
    throw std::invalid_argument("dual_norm_vprime expects a scalar space");
  SparseOperator K = assemble_stiffness(s);
  if (s.n_free() < s.n_total()) {
    Field r = solve_spd(K, s, functional);
    double val = 0.0;
    for (int d : s.free_dofs) val += r.values[d] * functional[d];
    return std::sqrt(std::max(0.0, val));
  }
  const double total = functional.sum();
  const double scale = functional.cwiseAbs().sum();
  if (std::fabs(total) > 1e-10 * std::max(1.0, scale))
    throw SolveError("dual norm on a pure-Neumann space needs a mean-free functional",
                     std::fabs(total));
  FeSpace pinned = s;
  pinned.vertex_constrained[0] = 1;
  pinned.free_index.assign(std::size_t(s.n_total()), -1);
  pinned.free_dofs.clear();
  for (int v = 1; v < s.mesh->n_vertices(); ++v) {
    pinned.free_index[std::size_t(v)] = int(pinned.free_dofs.size());
    pinned.free_dofs.push_back(v);
  }
  Field r = solve_spd(K, pinned, functional);
  double val = 0.0;
  for (int d : pinned.free_dofs) val += r.values[d] * functional[d];
  return std::sqrt(std::max(0.0, val));
}

} // namespace poromech

#endif
