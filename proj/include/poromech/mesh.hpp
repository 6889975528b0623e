#ifndef POROMECH_MESH_HPP
#define POROMECH_MESH_HPP

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace poromech {

enum class BoundaryTag { Dirichlet, Neumann };

/// Sides of the generated domains; used to select Dirichlet parts per field.
namespace side {
inline constexpr int left = 0;    // x = 0
inline constexpr int right = 1;   // x = Lx
inline constexpr int bottom = 2;  // y = 0
inline constexpr int top = 3;     // y = Ly
}

struct BoundaryFacet {
  std::array<int, 2> v{-1, -1};  // one vertex in 1d, an edge in 2d
  BoundaryTag tag = BoundaryTag::Neumann;
  int side = -1;
};

/// Conforming simplicial mesh on an interval or rectangle, P1 throughout.
struct Mesh {
  int dim = 1;
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> cells;  // 1d cells use the first two entries
  std::vector<BoundaryFacet> boundary;

  int n_vertices() const { return int(vertices.size()); }
  int n_cells() const { return int(cells.size()); }
  int verts_per_cell() const { return dim + 1; }

  double cell_volume(int c) const {
    const auto& k = cells[std::size_t(c)];
    if (dim == 1) return std::fabs(vertices[k[1]].x() - vertices[k[0]].x());
    const Eigen::Vector2d e1 = vertices[k[1]] - vertices[k[0]];
    const Eigen::Vector2d e2 = vertices[k[2]] - vertices[k[0]];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  }

  /// Constant gradients of the P1 hat functions on cell c.
  std::array<Eigen::Vector2d, 3> hat_gradients(int c) const {
    const auto& k = cells[std::size_t(c)];
    std::array<Eigen::Vector2d, 3> g{};
    if (dim == 1) {
      const double h = vertices[k[1]].x() - vertices[k[0]].x();
      g[0] = {-1.0 / h, 0.0};
      g[1] = {1.0 / h, 0.0};
      return g;
    }
    const double a2 = 2.0 * cell_volume(c);
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector2d d =
          vertices[k[(i + 2) % 3]] - vertices[k[(i + 1) % 3]];
      g[std::size_t(i)] = Eigen::Vector2d(-d.y(), d.x()) / a2;
    }
    return g;
  }

  double total_volume() const {
    double v = 0.0;
    for (int c = 0; c < n_cells(); ++c) v += cell_volume(c);
    return v;
  }
};

/// Uniform mesh of [0, length] with n cells; boundary vertices tagged by side.
inline Mesh make_interval_mesh(int n, double length = 1.0,
                               const std::vector<int>& dirichlet_sides = {}) {
  if (n < 1) throw std::invalid_argument("interval mesh needs n >= 1");
  Mesh m;
  m.dim = 1;
  m.vertices.reserve(std::size_t(n) + 1);
  for (int i = 0; i <= n; ++i) m.vertices.push_back({length * i / n, 0.0});
  for (int i = 0; i < n; ++i) m.cells.push_back({i, i + 1, -1});
  auto tag_of = [&](int s) {
    for (int d : dirichlet_sides)
      if (d == s) return BoundaryTag::Dirichlet;
    return BoundaryTag::Neumann;
  };
  m.boundary.push_back({{0, -1}, tag_of(side::left), side::left});
  m.boundary.push_back({{n, -1}, tag_of(side::right), side::right});
  return m;
}

/// Union-jack triangulation of [0,Lx] x [0,Ly] with nx x ny quads, the
/// diagonal direction alternating with the quad parity. Deterministic
/// vertex ordering: vertex (i,j) -> j*(nx+1)+i.
inline Mesh make_rectangle_mesh(int nx, int ny, double lx = 1.0, double ly = 1.0,
                                const std::vector<int>& dirichlet_sides = {}) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("rectangle mesh needs nx, ny >= 1");
  Mesh m;
  m.dim = 2;
  m.vertices.reserve(std::size_t(nx + 1) * std::size_t(ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.push_back({lx * i / nx, ly * j / ny});
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        m.cells.push_back({v00, v10, v11});
        m.cells.push_back({v00, v11, v01});
      } else {
        m.cells.push_back({v00, v10, v01});
        m.cells.push_back({v10, v11, v01});
      }
    }
  auto tag_of = [&](int s) {
    for (int d : dirichlet_sides)
      if (d == s) return BoundaryTag::Dirichlet;
    return BoundaryTag::Neumann;
  };
  for (int j = 0; j < ny; ++j) {
    m.boundary.push_back({{vid(0, j), vid(0, j + 1)}, tag_of(side::left), side::left});
    m.boundary.push_back(
        {{vid(nx, j), vid(nx, j + 1)}, tag_of(side::right), side::right});
  }
  for (int i = 0; i < nx; ++i) {
    m.boundary.push_back({{vid(i, 0), vid(i + 1, 0)}, tag_of(side::bottom), side::bottom});
    m.boundary.push_back({{vid(i, ny), vid(i + 1, ny)}, tag_of(side::top), side::top});
  }
  return m;
}

// Plain-text mesh format: header `dim nv nc nbf`, vertex coordinate lines,
// cell connectivity lines, then boundary facet lines `v1 .. vd tag` with tag
// D or N. Whitespace separated ASCII, zero-based indices.

inline void write_mesh(const Mesh& m, std::ostream& os) {
  os << m.dim << ' ' << m.n_vertices() << ' ' << m.n_cells() << ' '
     << m.boundary.size() << '\n';
  os.precision(17);
  for (const auto& v : m.vertices) {
    os << v.x();
    if (m.dim == 2) os << ' ' << v.y();
    os << '\n';
  }
  for (const auto& c : m.cells) {
    os << c[0] << ' ' << c[1];
    if (m.dim == 2) os << ' ' << c[2];
    os << '\n';
  }
  for (const auto& f : m.boundary) {
    os << f.v[0];
    if (m.dim == 2) os << ' ' << f.v[1];
    os << ' ' << (f.tag == BoundaryTag::Dirichlet ? 'D' : 'N') << '\n';
  }
}

inline Mesh read_mesh(std::istream& is) {
  Mesh m;
  int nv = 0, nc = 0, nbf = 0;
  if (!(is >> m.dim >> nv >> nc >> nbf))
    throw std::runtime_error("mesh file: malformed header");
  if (m.dim != 1 && m.dim != 2) throw std::runtime_error("mesh file: dim must be 1 or 2");
  m.vertices.resize(std::size_t(nv));
  for (auto& v : m.vertices) {
    double x = 0, y = 0;
    if (!(is >> x)) throw std::runtime_error("mesh file: bad vertex line");
    if (m.dim == 2 && !(is >> y)) throw std::runtime_error("mesh file: bad vertex line");
    v = {x, y};
  }
  m.cells.resize(std::size_t(nc));
  for (auto& c : m.cells) {
    c = {-1, -1, -1};
    for (int k = 0; k < m.dim + 1; ++k)
      if (!(is >> c[std::size_t(k)])) throw std::runtime_error("mesh file: bad cell line");
  }
  m.boundary.resize(std::size_t(nbf));
  for (auto& f : m.boundary) {
    for (int k = 0; k < m.dim; ++k)
      if (!(is >> f.v[std::size_t(k)]))
        throw std::runtime_error("mesh file: bad boundary facet line");
    std::string tag;
    if (!(is >> tag) || (tag != "D" && tag != "N"))
      throw std::runtime_error("mesh file: boundary tag must be D or N");
    f.tag = (tag == "D") ? BoundaryTag::Dirichlet : BoundaryTag::Neumann;
  }
  return m;
}

} // namespace poromech

#endif
