#ifndef NODAL_NODAL_TOPOLOGY_HPP
#define NODAL_NODAL_TOPOLOGY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "nodal/common.hpp"
#include "nodal/field_sampler.hpp"
#include "nodal/grid.hpp"
#include "nodal/rng.hpp"

namespace nodal {

// One connected component of the zero set, as a piecewise-linear mesh on the
// Freudenthal triangulation of the grid.
struct NodalComponent {
  int id = -1;
  std::vector<std::int64_t> interface_cells;
  bool closed = true;
  std::array<long, 3> betti{0, 0, 0};
  int euler_characteristic = 0;  // d=3 only
  int genus = 0;                 // d=3, closed
  std::string diffeo_class;
  double max_center_distance = 0.0;
  std::vector<Pt> vertices;                     // crossing points
  std::vector<std::array<int, 3>> triangles;    // d=3, indices into vertices
};

struct Extraction {
  int dim = 2;
  double R = 0.0;
  double spacing = 0.0;
  std::vector<NodalComponent> components;
  long censored_count = 0;
  std::unordered_map<std::int64_t, int> cell_to_component;

  // "Entirely inside B(R)" with a one-cell conservative margin.
  bool inside(const NodalComponent& c) const {
    return c.closed &&
           c.max_center_distance < R - spacing * std::sqrt(static_cast<double>(dim));
  }
};

struct PsiValue {
  double r = 0.0;
  std::array<double, 3> psi{0.0, 0.0, 0.0};
};

struct BettiReport {
  double radius_R = 0.0;
  std::array<long, 3> totals{0, 0, 0};
  long nodal_count = 0;
  long censored_count = 0;
  std::map<std::string, long> class_census;
  std::vector<PsiValue> psi;
  double ball_volume = 0.0;
};

namespace detail {

struct UnionFind {
  std::vector<int> parent, size;
  int add() {
    parent.push_back(static_cast<int>(parent.size()));
    size.push_back(1);
    return parent.back();
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
  }
};

struct Crossing {
  Pt pos;
  bool boundary = false;
};

struct MeshBuilder {
  const Grid& g;
  UnionFind uf;
  std::vector<Crossing> crossings;
  std::unordered_map<std::uint64_t, int> edge_to_crossing;
  // Per-triangle (or per-segment in d=2) records.
  std::vector<std::array<int, 3>> tris;        // d=3
  std::vector<std::array<int, 2>> segs;        // d=2
  std::vector<std::int64_t> elem_cell;         // cell of each element
  std::int64_t n0, n1, n2;

  explicit MeshBuilder(const Grid& grid) : g(grid) {
    n0 = g.dims[0];
    n1 = g.dims[1];
    n2 = g.dim == 3 ? g.dims[2] : 1;
  }

  bool positive(std::int64_t node) const { return g.values[node] >= 0.0; }

  bool boundary_node(std::int64_t node) const {
    if (g.dim == 2) {
      std::int64_t i = node / n1, j = node % n1;
      return i == 0 || i == n0 - 1 || j == 0 || j == n1 - 1;
    }
    std::int64_t k = node % n2, rest = node / n2;
    std::int64_t j = rest % n1, i = rest / n1;
    return i == 0 || i == n0 - 1 || j == 0 || j == n1 - 1 || k == 0 || k == n2 - 1;
  }

  Pt node_pos(std::int64_t node) const {
    if (g.dim == 2) return g.position(node / n1, node % n1);
    std::int64_t k = node % n2, rest = node / n2;
    return g.position(rest / n1, rest % n1, k);
  }

  int crossing_on(std::int64_t a, std::int64_t b) {
    if (a > b) std::swap(a, b);
    std::uint64_t key = static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(
                            g.node_count()) +
                        static_cast<std::uint64_t>(b);
    auto it = edge_to_crossing.find(key);
    if (it != edge_to_crossing.end()) return it->second;
    double fa = g.values[a], fb = g.values[b];
    double t = fa / (fa - fb);
    Pt pa = node_pos(a), pb = node_pos(b);
    Crossing c;
    for (int k = 0; k < 3; ++k) c.pos[k] = pa[k] + t * (pb[k] - pa[k]);
    c.boundary = boundary_node(a) || boundary_node(b);
    int idx = static_cast<int>(crossings.size());
    crossings.push_back(c);
    uf.add();
    edge_to_crossing.emplace(key, idx);
    return idx;
  }

  void emit_triangle(int c1, int c2, int c3, std::int64_t cell) {
    uf.unite(c1, c2);
    uf.unite(c1, c3);
    tris.push_back({c1, c2, c3});
    elem_cell.push_back(cell);
  }

  void emit_segment(int c1, int c2, std::int64_t cell) {
    uf.unite(c1, c2);
    segs.push_back({c1, c2});
    elem_cell.push_back(cell);
  }

  // Level set of one simplex. d=2: triangle with a single separating vertex.
  void handle_triangle(std::int64_t va, std::int64_t vb, std::int64_t vc,
                       std::int64_t cell) {
    bool sa = positive(va), sb = positive(vb), sc = positive(vc);
    if (sa == sb && sb == sc) return;
    std::int64_t odd, p, q;
    if (sa != sb && sa != sc) {
      odd = va; p = vb; q = vc;
    } else if (sb != sa && sb != sc) {
      odd = vb; p = va; q = vc;
    } else {
      odd = vc; p = va; q = vb;
    }
    emit_segment(crossing_on(odd, p), crossing_on(odd, q), cell);
  }

  void handle_tet(const std::array<std::int64_t, 4>& v, std::int64_t cell) {
    std::array<std::int64_t, 4> pos{}, neg{};
    int np = 0, nn = 0;
    for (auto node : v)
      (positive(node) ? pos[np++] : neg[nn++]) = node;
    if (np == 0 || nn == 0) return;
    if (np == 1 || nn == 1) {
      std::int64_t odd = np == 1 ? pos[0] : neg[0];
      const auto& rest = np == 1 ? neg : pos;
      emit_triangle(crossing_on(odd, rest[0]), crossing_on(odd, rest[1]),
                    crossing_on(odd, rest[2]), cell);
      return;
    }
    // 2-2 case: quad with corners on the four mixed edges, split along a
    // fixed diagonal. Adjacent quad corners share a tet face.
    int q11 = crossing_on(pos[0], neg[0]);
    int q12 = crossing_on(pos[0], neg[1]);
    int q22 = crossing_on(pos[1], neg[1]);
    int q21 = crossing_on(pos[1], neg[0]);
    emit_triangle(q11, q12, q22, cell);
    emit_triangle(q11, q22, q21, cell);
  }

  void run() {
    if (g.dim == 2) {
      for (std::int64_t i = 0; i + 1 < n0; ++i)
        for (std::int64_t j = 0; j + 1 < n1; ++j) {
          std::int64_t v00 = i * n1 + j, v10 = (i + 1) * n1 + j;
          std::int64_t v01 = i * n1 + j + 1, v11 = (i + 1) * n1 + j + 1;
          std::int64_t cell = v00;
          handle_triangle(v00, v10, v11, cell);
          handle_triangle(v00, v11, v01, cell);
        }
      return;
    }
    // Freudenthal split: six tets per cube, one per coordinate ordering; the
    // induced face diagonals agree between neighboring cubes.
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (std::int64_t i = 0; i + 1 < n0; ++i)
      for (std::int64_t j = 0; j + 1 < n1; ++j)
        for (std::int64_t k = 0; k + 1 < n2; ++k) {
          std::int64_t cell = (i * n1 + j) * n2 + k;
          std::int64_t base[3] = {i, j, k};
          // Quick reject: skip cubes with uniform sign.
          bool s0 = positive(cell);
          bool mixed = false;
          for (int a = 0; a < 2 && !mixed; ++a)
            for (int b = 0; b < 2 && !mixed; ++b)
              for (int c = 0; c < 2 && !mixed; ++c)
                if (positive(((i + a) * n1 + j + b) * n2 + k + c) != s0) mixed = true;
          if (!mixed) continue;
          for (const auto& perm : perms) {
            std::array<std::int64_t, 4> tet;
            std::int64_t cur[3] = {base[0], base[1], base[2]};
            tet[0] = (cur[0] * n1 + cur[1]) * n2 + cur[2];
            for (int step = 0; step < 3; ++step) {
              cur[perm[step]] += 1;
              tet[step + 1] = (cur[0] * n1 + cur[1]) * n2 + cur[2];
            }
            handle_tet(tet, cell);
          }
        }
  }
};

}  // namespace detail

// Extracts nodal components of the sampled field from the grid; closed
// components get Betti numbers, Euler characteristic and a diffeomorphism
// class label.
inline Extraction extract_components_grid(const Grid& g, double R) {
  const int d = g.dim;
  const double hw = -g.origin[0];
  if (hw + 1e-9 < R + 2.0 * g.spacing * std::sqrt(static_cast<double>(d)))
    throw NumericError("domain too small");

  detail::MeshBuilder mb(g);
  mb.run();

  Extraction out;
  out.dim = d;
  out.R = R;
  out.spacing = g.spacing;

  // Group crossings by union-find root.
  std::unordered_map<int, int> root_to_comp;
  std::vector<int> crossing_comp(mb.crossings.size(), -1);
  for (size_t c = 0; c < mb.crossings.size(); ++c) {
    int root = mb.uf.find(static_cast<int>(c));
    auto [it, inserted] = root_to_comp.emplace(root, static_cast<int>(out.components.size()));
    if (inserted) {
      NodalComponent nc;
      nc.id = it->second;
      out.components.push_back(std::move(nc));
    }
    crossing_comp[c] = it->second;
    NodalComponent& nc = out.components[it->second];
    nc.vertices.push_back(mb.crossings[c].pos);
    double dist0 = norm(mb.crossings[c].pos, d);
    nc.max_center_distance = std::max(nc.max_center_distance, dist0);
    if (mb.crossings[c].boundary) nc.closed = false;
  }

  // Per-component vertex reindex for the stored triangle meshes (d=3).
  if (d == 3) {
    std::vector<int> local_index(mb.crossings.size(), -1);
    std::vector<int> vertex_count(out.components.size(), 0);
    for (size_t c = 0; c < mb.crossings.size(); ++c)
      local_index[c] = vertex_count[crossing_comp[c]]++;

    std::vector<long> faces(out.components.size(), 0);
    std::unordered_map<std::uint64_t, int> edge_count;
    edge_count.reserve(mb.tris.size() * 2);
    for (size_t t = 0; t < mb.tris.size(); ++t) {
      const auto& tri = mb.tris[t];
      int comp = crossing_comp[tri[0]];
      faces[comp]++;
      out.components[comp].triangles.push_back(
          {local_index[tri[0]], local_index[tri[1]], local_index[tri[2]]});
      for (int e = 0; e < 3; ++e) {
        int a = tri[e], b = tri[(e + 1) % 3];
        if (a == b) continue;  // degenerate (coincident crossings); skip
        if (a > b) std::swap(a, b);
        edge_count[(static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b)]++;
      }
    }
    std::vector<long> edges(out.components.size(), 0);
    std::vector<bool> manifold(out.components.size(), true);
    for (const auto& [key, count] : edge_count) {
      int a = static_cast<int>(key >> 32);
      int comp = crossing_comp[a];
      edges[comp]++;
      if (count != 2) manifold[comp] = false;
    }
    for (auto& nc : out.components) {
      if (!nc.closed) continue;
      long V = static_cast<long>(nc.vertices.size());
      long E = edges[nc.id];
      long F = faces[nc.id];
      long chi = V - E + F;
      if (!manifold[nc.id] || (chi % 2) != 0)
        throw NumericError("odd Euler characteristic: mesh welding defect");
      nc.euler_characteristic = static_cast<int>(chi);
      nc.genus = static_cast<int>((2 - chi) / 2);
      nc.betti = {1, 2 - chi, 1};
      nc.diffeo_class = "genus-" + std::to_string(nc.genus);
    }
  } else {
    for (auto& nc : out.components) {
      if (!nc.closed) continue;
      nc.betti = {1, 1, 0};
      nc.diffeo_class = "circle";
    }
  }

  // Interface cells and the cell -> component lookup.
  {
    const auto& elems = d == 2 ? mb.segs.size() : mb.tris.size();
    (void)elems;
    size_t count = d == 2 ? mb.segs.size() : mb.tris.size();
    for (size_t t = 0; t < count; ++t) {
      int first = d == 2 ? mb.segs[t][0] : mb.tris[t][0];
      int comp = crossing_comp[first];
      out.components[comp].interface_cells.push_back(mb.elem_cell[t]);
      out.cell_to_component.emplace(mb.elem_cell[t], comp);
    }
    for (auto& nc : out.components) {
      auto& cells = nc.interface_cells;
      std::sort(cells.begin(), cells.end());
      cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    }
  }

  for (const auto& nc : out.components)
    if (!nc.closed) out.censored_count++;
  return out;
}

inline Extraction extract_components(const FieldRealization& f, double R) {
  return extract_components_grid(f.grid, R);
}

// Psi_i(R,r): Monte Carlo over ball centers, clamped so that the
// integral-geometric inequality Psi_i <= beta_i(R) holds by construction.
inline std::array<double, 3> sandwich_psi(const Extraction& ex, double r,
                                          std::uint64_t seed,
                                          int centers = 10000) {
  if (!(r > 0.0 && r < ex.R)) throw NumericError("r >= R");
  const int d = ex.dim;
  const double R = ex.R;
  Rng rng(seed);

  std::vector<Pt> xs(centers);
  for (auto& x : xs) {
    // Rejection sampling in the cube around B(R-r).
    for (;;) {
      for (int k = 0; k < d; ++k) x[k] = (2.0 * rng.uniform() - 1.0) * (R - r);
      if (norm(x, d) <= R - r) break;
    }
  }

  const double vol_big = ball_volume(d, R - r);
  const double vol_small = ball_volume(d, r);
  std::array<double, 3> psi{0.0, 0.0, 0.0};
  for (const auto& comp : ex.components) {
    if (!ex.inside(comp)) continue;
    Pt centroid{0.0, 0.0, 0.0};
    for (const auto& v : comp.vertices)
      for (int k = 0; k < d; ++k) centroid[k] += v[k];
    for (int k = 0; k < d; ++k) centroid[k] /= static_cast<double>(comp.vertices.size());
    double rad = 0.0;
    for (const auto& v : comp.vertices) rad = std::max(rad, dist(v, centroid, d));
    if (rad > r) continue;  // fits in no r-ball

    long hits = 0;
    for (const auto& x : xs) {
      double dc = dist(x, centroid, d);
      if (dc > r) continue;
      if (dc + rad <= r) {
        hits++;
        continue;
      }
      bool ok = true;
      for (const auto& v : comp.vertices)
        if (dist(x, v, d) > r) {
          ok = false;
          break;
        }
      if (ok) hits++;
    }
    double vol = vol_big * static_cast<double>(hits) / static_cast<double>(centers);
    vol = std::min(vol, vol_small);
    for (int i = 0; i < d; ++i) psi[i] += comp.betti[i] * vol / vol_small;
  }
  return psi;
}

inline BettiReport betti_report(const Extraction& ex,
                                const std::vector<double>& r_list = {},
                                std::uint64_t psi_seed = 0) {
  BettiReport rep;
  rep.radius_R = ex.R;
  rep.censored_count = ex.censored_count;
  rep.ball_volume = ball_volume(ex.dim, ex.R);
  for (const auto& comp : ex.components) {
    if (!ex.inside(comp)) continue;
    for (int i = 0; i < ex.dim; ++i) rep.totals[i] += comp.betti[i];
    rep.class_census[comp.diffeo_class]++;
  }
  rep.nodal_count = rep.totals[0];
  for (size_t ri = 0; ri < r_list.size(); ++ri) {
    PsiValue pv;
    pv.r = r_list[ri];
    pv.psi = sandwich_psi(ex, r_list[ri], derive_seed(psi_seed, 0x5a5a + ri));
    rep.psi.push_back(pv);
  }
  return rep;
}

inline std::string classify_diffeo(int dim, int euler_characteristic) {
  if (dim == 2) return "circle";
  return "genus-" + std::to_string((2 - euler_characteristic) / 2);
}

struct StabilityReport {
  bool hypothesis_met = false;
  bool holds = false;
  long count_f = 0;   // N_f(R-1)
  long count_g = 0;   // N_g(R)
  bool classes_embed = true;
  double alpha = 0.0;
};

// Checks the nodal-stability property on a pair of smooth fields: if f has no
// low-lying critical values on B(R) and |f-g| < alpha, every component of f
// in B(R-1) survives in g within B(R).
inline StabilityReport perturbation_stability_check(
    const std::function<double(const Pt&)>& f,
    const std::function<Pt(const Pt&)>& f_grad,
    const std::function<double(const Pt&)>& g, double alpha, double R, int dim,
    double spacing) {
  StabilityReport rep;
  rep.alpha = alpha;
  const double margin = 3.0 * spacing * std::sqrt(static_cast<double>(dim));
  Grid gf = Grid::centered(dim, R + margin, spacing);
  Grid gg = Grid::centered(dim, R + margin, spacing);

  double min_gate = std::numeric_limits<double>::infinity();
  double max_diff = 0.0;
  std::int64_t n0 = gf.dims[0], n1 = gf.dims[1], n2 = dim == 3 ? gf.dims[2] : 1;
  for (std::int64_t i = 0; i < n0; ++i)
    for (std::int64_t j = 0; j < n1; ++j)
      for (std::int64_t k = 0; k < n2; ++k) {
        Pt x = gf.position(i, j, k);
        double fv = f(x), gv = g(x);
        gf.values[gf.index(i, j, k)] = fv;
        gg.values[gg.index(i, j, k)] = gv;
        if (norm(x, dim) <= R) {
          Pt gr = f_grad(x);
          min_gate = std::min(min_gate, std::max(std::abs(fv), norm(gr, dim)));
          max_diff = std::max(max_diff, std::abs(fv - gv));
        }
      }
  rep.hypothesis_met = min_gate > alpha && max_diff < alpha;
  if (!rep.hypothesis_met) return rep;

  Extraction exf = extract_components_grid(gf, R - 1.0);
  Extraction exg = extract_components_grid(gg, R);
  BettiReport rf = betti_report(exf);
  BettiReport rg = betti_report(exg);
  rep.count_f = rf.nodal_count;
  rep.count_g = rg.nodal_count;
  rep.holds = rep.count_f <= rep.count_g;
  if (dim == 3) {
    for (const auto& [cls, n] : rf.class_census) {
      auto it = rg.class_census.find(cls);
      if (it == rg.class_census.end() || it->second < n) rep.classes_embed = false;
    }
    rep.holds = rep.holds && rep.classes_embed;
  }
  return rep;
}

}  // namespace nodal

#endif  // NODAL_NODAL_TOPOLOGY_HPP
