#ifndef NODAL_GRID_HPP
#define NODAL_GRID_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "nodal/common.hpp"

namespace nodal {

// Regular grid over a cube, row-major with the last axis fastest.
struct Grid {
  int dim = 2;
  std::array<std::int64_t, 3> dims{1, 1, 1};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  double spacing = 1.0;
  std::vector<double> values;

  std::int64_t node_count() const {
    std::int64_t n = 1;
    for (int k = 0; k < dim; ++k) n *= dims[k];
    return n;
  }

  std::int64_t index(std::int64_t i0, std::int64_t i1, std::int64_t i2 = 0) const {
    if (dim == 2) return i0 * dims[1] + i1;
    return (i0 * dims[1] + i1) * dims[2] + i2;
  }

  Pt position(std::int64_t i0, std::int64_t i1, std::int64_t i2 = 0) const {
    Pt p{origin[0] + i0 * spacing, origin[1] + i1 * spacing, 0.0};
    if (dim == 3) p[2] = origin[2] + i2 * spacing;
    return p;
  }

  double& at(std::int64_t i0, std::int64_t i1, std::int64_t i2 = 0) {
    return values[index(i0, i1, i2)];
  }
  double at(std::int64_t i0, std::int64_t i1, std::int64_t i2 = 0) const {
    return values[index(i0, i1, i2)];
  }

  // Symmetric grid of half-width hw and spacing h, node at the origin.
  static Grid centered(int dim, double half_width, double h) {
    Grid g;
    g.dim = dim;
    g.spacing = h;
    std::int64_t half = static_cast<std::int64_t>(std::ceil(half_width / h));
    for (int k = 0; k < dim; ++k) {
      g.dims[k] = 2 * half + 1;
      g.origin[k] = -static_cast<double>(half) * h;
    }
    g.values.assign(g.node_count(), 0.0);
    return g;
  }
};

}  // namespace nodal

#endif  // NODAL_GRID_HPP
