#ifndef NODAL_MORSE_KACRICE_HPP
#define NODAL_MORSE_KACRICE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "nodal/common.hpp"
#include "nodal/field_sampler.hpp"
#include "nodal/nodal_topology.hpp"
#include "nodal/rng.hpp"
#include "nodal/spectral_model.hpp"

namespace nodal {

struct CriticalPoint {
  Pt x{};
  int morse_index = 0;
  double g_value = 0.0;
  int component = -1;  // nodal component carrying the point, if resolved
};

struct CriticalPointSet {
  Pt p{};
  std::vector<CriticalPoint> points;
  std::array<long, 3> counts{0, 0, 0};  // C_i by Morse index, i <= d-2
  long total = 0;
  long newton_failures = 0;
  long degenerate_flagged = 0;
  // Counted components for which even a leashed search of the analytic zero
  // set finds no attributable min or max of g_p. Every genuine small closed
  // component carries both, so such a component is a rendering artifact of
  // the grid (a near-tangency of the smooth zero set pinched off into a
  // spurious loop by the corner sign pattern) and cannot be compared against
  // critical points of the smooth field.
  std::vector<int> unresolved_components;
};

struct KacRiceEstimate {
  Pt direction{};
  Eigen::MatrixXd covariance_cg;
  double k1 = 0.0;
  double stderr_ = 0.0;
  long mc_samples = 0;
  double bound_integral = 0.0;  // K1 * Vol B(R) for isotropic models
};

namespace detail {

// Orthonormal frame v_2..v_d completing v1, chosen per coordinate patch
// (largest |component| of v1) so it varies smoothly within a patch.
inline std::vector<Pt> completing_frame(const Pt& v1, int d) {
  int patch = 0;
  for (int k = 1; k < d; ++k)
    if (std::abs(v1[k]) > std::abs(v1[patch])) patch = k;
  std::vector<Pt> frame;
  for (int k = 0; k < d && static_cast<int>(frame.size()) < d - 1; ++k) {
    if (k == patch) continue;
    Pt e{0.0, 0.0, 0.0};
    e[k] = 1.0;
    double proj = dot(e, v1, d);
    for (int j = 0; j < d; ++j) e[j] -= proj * v1[j];
    for (const auto& f : frame) {
      double pr = dot(e, f, d);
      for (int j = 0; j < d; ++j) e[j] -= pr * f[j];
    }
    double nn = norm(e, d);
    if (nn < 1e-12) continue;
    for (int j = 0; j < d; ++j) e[j] /= nn;
    frame.push_back(e);
  }
  return frame;
}

// Newton iteration on (F(x)=0, cross(x-p, grad F(x))=0).
inline bool newton_critical_point(const FieldRealization& f, const Pt& p, Pt& x,
                                  int max_iters, double tol) {
  const int d = f.grid.dim;
  for (int it = 0; it < max_iters; ++it) {
    EvalDerivs ev = evaluate_with_derivatives(f, x);
    Pt u{};
    for (int k = 0; k < d; ++k) u[k] = x[k] - p[k];
    Eigen::VectorXd res(d);
    Eigen::MatrixXd jac(d, d);
    res(0) = ev.value;
    for (int j = 0; j < d; ++j) jac(0, j) = ev.grad[j];
    if (d == 2) {
      // phi = u0 F_y - u1 F_x
      res(1) = u[0] * ev.grad[1] - u[1] * ev.grad[0];
      for (int j = 0; j < 2; ++j)
        jac(1, j) = (j == 0 ? ev.grad[1] : 0.0) - (j == 1 ? ev.grad[0] : 0.0) +
                    u[0] * ev.hess[1][j] - u[1] * ev.hess[0][j];
    } else {
      // Two rows of cross(u, grad F), dropping the row of the largest |u_k|.
      int drop = 0;
      for (int k = 1; k < 3; ++k)
        if (std::abs(u[k]) > std::abs(u[drop])) drop = k;
      int row = 1;
      for (int i = 0; i < 3; ++i) {
        if (i == drop) continue;
        int a = (i + 1) % 3, b = (i + 2) % 3;
        res(row) = u[a] * ev.grad[b] - u[b] * ev.grad[a];
        for (int j = 0; j < 3; ++j)
          jac(row, j) = (j == a ? ev.grad[b] : 0.0) - (j == b ? ev.grad[a] : 0.0) +
                        u[a] * ev.hess[b][j] - u[b] * ev.hess[a][j];
        ++row;
      }
    }
    double rn = res.norm();
    if (rn < tol) return true;
    Eigen::VectorXd step = jac.fullPivLu().solve(-res);
    if (!step.allFinite()) return false;
    // Damped update: shrink on non-decrease of the residual.
    double scale = 1.0;
    for (int tries = 0; tries < 8; ++tries) {
      Pt xn = x;
      for (int k = 0; k < d; ++k) xn[k] += scale * step(k);
      bool in_box = true;
      for (int k = 0; k < d; ++k) {
        double lo = f.grid.origin[k];
        double hi = lo + (f.grid.dims[k] - 1) * f.grid.spacing;
        if (xn[k] < lo || xn[k] > hi) in_box = false;
      }
      if (in_box) {
        EvalDerivs evn = evaluate_with_derivatives(f, xn);
        Pt un{};
        for (int k = 0; k < d; ++k) un[k] = xn[k] - p[k];
        double rn2 = evn.value * evn.value;
        if (d == 2) {
          double phi = un[0] * evn.grad[1] - un[1] * evn.grad[0];
          rn2 += phi * phi;
        } else {
          for (int i = 0; i < 3; ++i) {
            int a = (i + 1) % 3, b = (i + 2) % 3;
            double ci = un[a] * evn.grad[b] - un[b] * evn.grad[a];
            rn2 += ci * ci;
          }
        }
        if (std::sqrt(rn2) < rn || scale < 0.2) {
          x = xn;
          break;
        }
      }
      scale *= 0.7;
      if (tries == 7) {
        for (int k = 0; k < d; ++k) x[k] += scale * step(k);
      }
    }
  }
  return false;
}

// Pull x back onto the level set {F = 0} along the gradient.
inline bool project_to_level(const FieldRealization& f, Pt& x) {
  const int d = f.grid.dim;
  for (int it = 0; it < 12; ++it) {
    EvalDerivs ev = evaluate_with_derivatives(f, x);
    if (std::abs(ev.value) < 1e-12) return true;
    double gn2 = dot(ev.grad, ev.grad, d);
    if (gn2 < 1e-16) return false;
    for (int k = 0; k < d; ++k) x[k] -= ev.value * ev.grad[k] / gn2;
  }
  EvalDerivs ev = evaluate_with_derivatives(f, x);
  return std::abs(ev.value) < 1e-10;
}

// Extremum of g_p on the level set by projected-gradient descent (sign=+1)
// or ascent (sign=-1), used as a fallback when Newton misses a component's
// min or max. The walk is leashed to max_dist of the start so a projection
// that lands on a nearby unrelated curve cannot wander across the box.
// Returns the best point reached, close enough for a Newton polish; fails
// only when the start cannot be projected onto the level set at all.
inline bool constrained_extremum(const FieldRealization& f, const Pt& p, Pt start,
                                 int sign, double max_dist, Pt& out_x) {
  const int d = f.grid.dim;
  Pt x = start;
  if (!project_to_level(f, x)) return false;
  if (dist(x, start, d) > max_dist) return false;
  out_x = x;
  try {
    double step = 0.5 * f.grid.spacing;
    double g = 0.0;
    for (int k = 0; k < d; ++k) g += (x[k] - p[k]) * (x[k] - p[k]);
    for (int it = 0; it < 600; ++it) {
      EvalDerivs ev = evaluate_with_derivatives(f, x);
      double gn = norm(ev.grad, d);
      if (gn < 1e-10) return true;  // singular point: hand back best so far
      Pt tg{};
      double along = 0.0;
      for (int k = 0; k < d; ++k) along += 2.0 * (x[k] - p[k]) * ev.grad[k] / gn;
      for (int k = 0; k < d; ++k)
        tg[k] = 2.0 * (x[k] - p[k]) - along * ev.grad[k] / gn;
      double tn = norm(tg, d);
      if (tn < 1e-6 || step < 1e-13) return true;
      Pt xn = x;
      for (int k = 0; k < d; ++k) xn[k] -= sign * step * tg[k] / tn;
      if (dist(xn, start, d) > max_dist || !project_to_level(f, xn) ||
          dist(xn, start, d) > max_dist) {
        step *= 0.5;
        continue;
      }
      double gnew = 0.0;
      for (int k = 0; k < d; ++k) gnew += (xn[k] - p[k]) * (xn[k] - p[k]);
      if (sign * (gnew - g) < 0.0) {
        x = xn;
        g = gnew;
        out_x = x;
        step = std::min(step * 1.4, f.grid.spacing);
      } else {
        step *= 0.5;
      }
    }
    return true;
  } catch (const NumericError&) {
    return true;  // left the sampled box: hand back the best point reached
  }
}

}  // namespace detail

// Critical points of g_p(x) = |x - p|^2 restricted to the nodal set, by dense
// Newton seeding from interface-cell centers.
inline CriticalPointSet find_critical_points(const FieldRealization& f, const Pt& p,
                                             double R, const Extraction* ex = nullptr) {
  if (!f.has_analytic_evaluator()) throw NumericError("no analytic evaluator");
  const int d = f.grid.dim;
  const double h = f.grid.spacing;

  Extraction local;
  if (!ex) {
    local = extract_components(f, R);
    ex = &local;
  }

  CriticalPointSet out;
  out.p = p;

  // Seed at the center of every interface cell.
  std::vector<Pt> seeds;
  for (const auto& comp : ex->components) {
    if (!ex->inside(comp)) continue;
    for (auto cell : comp.interface_cells) {
      std::int64_t n1 = f.grid.dims[1], n2 = d == 3 ? f.grid.dims[2] : 1;
      Pt c;
      if (d == 2)
        c = f.grid.position(cell / n1, cell % n1);
      else
        c = f.grid.position(cell / (n1 * n2), (cell / n2) % n1, cell % n2);
      for (int k = 0; k < d; ++k) c[k] += 0.5 * h;
      seeds.push_back(c);
    }
    // Mesh vertices sit on the piecewise-linear zero set, one cell apart at
    // most, so they cover every Newton basin along the curve.
    for (const auto& v : comp.vertices) seeds.push_back(v);
  }

  std::vector<CriticalPoint> found;
  // Post-convergence pipeline: residual contract, index, attribution.
  auto accept = [&](const Pt& xc, int force_comp = -1) -> bool {
    Pt x = xc;
    if (norm(x, d) > R) return false;
    EvalDerivs ev = evaluate_with_derivatives(f, x);
    Pt u{};
    for (int k = 0; k < d; ++k) u[k] = x[k] - p[k];
    double un = norm(u, d);
    if (un < 1e-9) return false;  // p itself on the nodal set: excluded
    Pt v1{};
    for (int k = 0; k < d; ++k) v1[k] = u[k] / un;

    // Residual contract of the collinearity system.
    double gn = norm(ev.grad, d);
    double along = dot(ev.grad, v1, d);
    double tangential2 = std::max(0.0, gn * gn - along * along);
    if (std::abs(ev.value) > 1e-9 || std::sqrt(tangential2) > 1e-8) {
      out.newton_failures++;
      return false;
    }
    if (gn < 1e-10) return false;  // singular nodal point

    // Restricted Hessian of g_p on the level set: Lagrange multiplier form.
    double mu = dot(ev.grad, u, d) * 2.0 / (gn * gn);
    Pt grad_dir{};
    for (int k = 0; k < d; ++k) grad_dir[k] = ev.grad[k] / gn;
    auto tangent = detail::completing_frame(grad_dir, d);
    int tdim = d - 1;
    Eigen::MatrixXd m(tdim, tdim);
    for (int a = 0; a < tdim; ++a)
      for (int b = 0; b < tdim; ++b) {
        double hfab = 0.0;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) hfab += tangent[a][i] * ev.hess[i][j] * tangent[b][j];
        m(a, b) = 2.0 * (a == b ? 1.0 : 0.0) - mu * hfab;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    bool degenerate = false;
    int index = 0;
    for (int a = 0; a < tdim; ++a) {
      if (std::abs(es.eigenvalues()(a)) < 1e-8) degenerate = true;
      if (es.eigenvalues()(a) < 0.0) index++;
    }
    if (degenerate) {
      out.degenerate_flagged++;
      return false;
    }

    CriticalPoint cp;
    cp.x = x;
    cp.morse_index = index;
    cp.g_value = un * un;
    // Attribute to a component. Distinct curves can pass within one cell of
    // each other (and even share interface cells), so gather every candidate
    // component around the point and pick the one whose mesh runs closest.
    std::int64_t ci[3];
    for (int k = 0; k < d; ++k)
      ci[k] = static_cast<std::int64_t>(
          std::floor((x[k] - f.grid.origin[k]) / h));
    std::vector<int> candidates;
    for (std::int64_t di = -1; di <= 1; ++di)
      for (std::int64_t dj = -1; dj <= 1; ++dj)
        for (std::int64_t dk = (d == 3 ? -1 : 0); dk <= (d == 3 ? 1 : 0); ++dk) {
          std::int64_t a = ci[0] + di, b = ci[1] + dj, c = d == 3 ? ci[2] + dk : 0;
          if (a < 0 || b < 0 || c < 0 || a >= f.grid.dims[0] - 1 ||
              b >= f.grid.dims[1] - 1 || (d == 3 && c >= f.grid.dims[2] - 1))
            continue;
          std::int64_t cell = d == 2 ? a * f.grid.dims[1] + b
                                     : (a * f.grid.dims[1] + b) * f.grid.dims[2] + c;
          auto it = ex->cell_to_component.find(cell);
          if (it == ex->cell_to_component.end()) continue;
          int id = it->second;
          if (std::find(candidates.begin(), candidates.end(), id) == candidates.end())
            candidates.push_back(id);
        }
    // Censored and outside components stay in the candidate pool: dropping
    // them up front would hand their critical points to a nearby inside
    // curve. The point is discarded below if the nearest curve is not one of
    // the counted components.
    int comp = -1;
    double best = 1e100;
    for (int id : candidates) {
      for (const auto& v : ex->components[id].vertices) {
        double dd = dist(v, x, d);
        if (dd < best) {
          best = dd;
          comp = id;
        }
      }
    }
    if (comp < 0 || !ex->inside(ex->components[comp])) {
      // At the resolution limit a tiny component's rendering can sit a few
      // cells away from the smooth curve it samples, so the neighborhood scan
      // misses it. The recovery pass knows which component it is completing
      // and passes it explicitly; it is used only when the scan fails.
      if (force_comp < 0) return false;
      comp = force_comp;
    }
    cp.component = comp;
    found.push_back(cp);
    return true;
  };

  for (const auto& seed : seeds) {
    Pt x = seed;
    bool converged = false;
    try {
      converged = detail::newton_critical_point(f, p, x, 40, 1e-11);
    } catch (const NumericError&) {
      converged = false;  // iterate left the sampled box
    }
    if (!converged) {
      out.newton_failures++;
      continue;
    }
    accept(x);
  }

  // Every closed component carries at least one min and one max of g_p, but
  // a Newton basin can be vanishingly small on near-degenerate wiggles. For
  // any counted component left without one, recover it by projected-gradient
  // search along the curve from the best mesh vertex, then Newton-polish.
  for (const auto& comp : ex->components) {
    if (!ex->inside(comp)) continue;
    auto have = [&](int idx) {
      for (const auto& cp : found)
        if (cp.component == comp.id && cp.morse_index == idx) return true;
      return false;
    };
    for (int want : {0, d - 1}) {
      if (have(want)) continue;
      int sign = want == 0 ? 1 : -1;
      Pt start{};
      double best_g = sign > 0 ? 1e100 : -1e100;
      for (const auto& v : comp.vertices) {
        double g = 0.0;
        for (int k = 0; k < d; ++k) g += (v[k] - p[k]) * (v[k] - p[k]);
        if (sign > 0 ? g < best_g : g > best_g) {
          best_g = g;
          start = v;
        }
      }
      // Leash: the smooth curve rendered by this component lies within a few
      // cells of its mesh, so the extremum does too.
      double extent = 0.0;
      for (const auto& v : comp.vertices) extent = std::max(extent, dist(v, start, d));
      const double leash = extent + 8.0 * h;
      Pt xr{};
      if (!detail::constrained_extremum(f, p, start, sign, leash, xr)) continue;
      try {
        if (detail::newton_critical_point(f, p, xr, 40, 1e-11)) {
          int force = dist(xr, start, d) <= leash ? comp.id : -1;
          accept(xr, force);
        }
      } catch (const NumericError&) {
      }
    }
    if (!have(0) || !have(d - 1)) out.unresolved_components.push_back(comp.id);
  }

  // Deduplicate converged points. Newton lands within ~1e-9 of the true
  // point from every basin seed, so the merge radius can sit far below the
  // grid scale; a wide radius would fuse genuinely distinct min/max pairs on
  // tight wiggles of the curve and break the Morse parity.
  const double merge_radius = 1e-5;
  std::sort(found.begin(), found.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    return a.g_value < b.g_value;
  });
  for (const auto& cp : found) {
    bool dup = false;
    for (const auto& kept : out.points)
      if (dist(cp.x, kept.x, d) < merge_radius) {
        dup = true;
        break;
      }
    if (dup) continue;
    out.points.push_back(cp);
    out.counts[cp.morse_index]++;
    out.total++;
  }
  return out;
}

struct MorseBoundReport {
  std::array<bool, 3> holds{true, true, true};
  std::array<long, 3> margins{0, 0, 0};  // C_i - beta_i >= 0
  long components_checked = 0;
  long morse_equality_ok = 0;  // components with sum (-1)^i C_i == chi
  long newton_failures = 0;
  long unresolved = 0;  // grid-artifact components excluded from the check
};

// Per-sample Morse inequality beta_i(R) <= C_i over the components inside
// B(R), plus the per-component Morse equality against chi.
inline MorseBoundReport morse_bound_check(const Extraction& ex,
                                          const CriticalPointSet& cps) {
  MorseBoundReport rep;
  rep.newton_failures = cps.newton_failures;
  rep.unresolved = static_cast<long>(cps.unresolved_components.size());
  const int d = ex.dim;
  // Components flagged as grid artifacts carry no smooth counterpart, so they
  // are excluded from both sides of the comparison (and reported).
  auto is_unresolved = [&](int id) {
    return std::find(cps.unresolved_components.begin(), cps.unresolved_components.end(),
                     id) != cps.unresolved_components.end();
  };
  std::array<long, 3> beta{0, 0, 0};
  for (const auto& comp : ex.components)
    if (ex.inside(comp) && !is_unresolved(comp.id))
      for (int i = 0; i < d; ++i) beta[i] += comp.betti[i];
  for (int i = 0; i < d - 1; ++i) {
    // b_i and b_{d-1} pair by duality with C_i via index i and d-1-i; the
    // Morse inequality pairs beta_i with C_i directly for i <= d-2, and
    // beta_{d-1} with C_{d-1}. On a (d-1)-manifold the index range is 0..d-1.
    rep.margins[i] = cps.counts[i] - beta[i];
    rep.holds[i] = rep.margins[i] >= 0;
  }
  rep.margins[d - 1] = cps.counts[d - 1] - beta[d - 1];
  rep.holds[d - 1] = rep.margins[d - 1] >= 0;

  // Morse equality per component.
  std::map<int, std::array<long, 3>> per_comp;
  for (const auto& cp : cps.points)
    if (cp.component >= 0) per_comp[cp.component][cp.morse_index]++;
  for (const auto& [comp_id, counts] : per_comp) {
    if (is_unresolved(comp_id)) continue;
    const auto& comp = ex.components[comp_id];
    long alt = 0;
    for (int i = 0; i < d; ++i) alt += (i % 2 == 0 ? 1 : -1) * counts[i];
    long chi = d == 2 ? 0 : comp.euler_characteristic;
    rep.components_checked++;
    if (alt == chi) rep.morse_equality_ok++;
  }
  return rep;
}

// Kac-Rice density K1 for the critical points of g_0 restricted to the nodal
// set, by Monte Carlo over the conditional law of the derivative matrix.
inline KacRiceEstimate kacrice_density(const SpectralModel& model, const Pt& v1_in,
                                       long mc_samples, std::uint64_t seed) {
  if (!model.check_axioms().rho3) throw NumericError("nondegenerate axiom violated");
  const int d = model.dimension();
  Pt v1 = v1_in;
  double n1 = norm(v1, d);
  if (n1 == 0.0) throw NumericError("zero direction");
  for (int k = 0; k < d; ++k) v1[k] /= n1;

  Eigen::MatrixXd lam = model.second_moment_matrix();
  auto frame = detail::completing_frame(v1, d);

  // C_G = diag(1, V^T Lambda V): F is independent of grad F at a point.
  Eigen::MatrixXd cg = Eigen::MatrixXd::Zero(d, d);
  cg(0, 0) = 1.0;
  for (int a = 0; a < d - 1; ++a)
    for (int b = 0; b < d - 1; ++b) {
      double s = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s += frame[a][i] * lam(i, j) * frame[b][j];
      cg(1 + a, 1 + b) = s;
    }
  double det_cg = cg.determinant();
  if (det_cg < 1e-12) throw NumericError("degenerate C_G");

  // Conditional law of grad F given <v_j, grad F> = 0 (j >= 2): project an
  // unconditional draw; Gaussian conditioning on a zero observation is
  // exactly the covariance-metric projection.
  Eigen::MatrixXd a_rows(d - 1, d);
  for (int a = 0; a < d - 1; ++a)
    for (int j = 0; j < d; ++j) a_rows(a, j) = frame[a][j];
  Eigen::MatrixXd ala = a_rows * lam * a_rows.transpose();
  Eigen::MatrixXd proj = lam * a_rows.transpose() * ala.inverse() * a_rows;
  Eigen::LLT<Eigen::MatrixXd> lam_chol(lam);
  if (lam_chol.info() != Eigen::Success) throw NumericError("degenerate C_G");
  Eigen::MatrixXd lam_l = lam_chol.matrixL();

  // Conditional law of vech(hess F) given F = 0.
  const int hd = d * (d + 1) / 2;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) pairs.emplace_back(i, j);
  Eigen::MatrixXd hcov(hd, hd);
  Eigen::VectorXd hf(hd);  // Cov(hess_ij, F) = -Lambda_ij
  for (int a = 0; a < hd; ++a) {
    hf(a) = -lam(pairs[a].first, pairs[a].second);
    for (int b = 0; b < hd; ++b)
      hcov(a, b) = model.fourth_moment(pairs[a].first, pairs[a].second,
                                       pairs[b].first, pairs[b].second);
  }
  Eigen::MatrixXd hcond = hcov - hf * hf.transpose();
  Eigen::LLT<Eigen::MatrixXd> hchol(hcond);
  Eigen::MatrixXd hcond_l;
  if (hchol.info() == Eigen::Success) {
    hcond_l = hchol.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hcond);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    hcond_l = es.eigenvectors() * ev.asDiagonal();
  }

  Rng rng(seed);
  double sum = 0.0, sum2 = 0.0;
  Eigen::VectorXd z(d), zh(hd);
  Eigen::MatrixXd hmat(d, d), dmat(d, d);
  for (long s = 0; s < mc_samples; ++s) {
    // grad F | G = 0
    for (int k = 0; k < d; ++k) z(k) = rng.normal();
    Eigen::VectorXd grad = lam_l * z;
    grad -= proj * grad;
    // hess F | F = 0
    for (int k = 0; k < hd; ++k) zh(k) = rng.normal();
    Eigen::VectorXd hv = hcond_l * zh;
    for (int a = 0; a < hd; ++a) {
      hmat(pairs[a].first, pairs[a].second) = hv(a);
      hmat(pairs[a].second, pairs[a].first) = hv(a);
    }
    // Rows of the derivative matrix of G, frame held locally constant.
    for (int j = 0; j < d; ++j) dmat(0, j) = grad(j);
    for (int a = 0; a < d - 1; ++a)
      for (int j = 0; j < d; ++j) {
        double v = 0.0;
        for (int i = 0; i < d; ++i) v += frame[a][i] * hmat(i, j);
        dmat(1 + a, j) = v;
      }
    double det = std::abs(dmat.determinant());
    sum += det;
    sum2 += det * det;
  }
  double mean = sum / mc_samples;
  double var = std::max(0.0, sum2 / mc_samples - mean * mean);
  double pref = 1.0 / (std::pow(2.0 * M_PI, d / 2.0) * std::sqrt(det_cg));

  KacRiceEstimate est;
  est.direction = v1;
  est.covariance_cg = cg;
  est.k1 = pref * mean;
  est.stderr_ = pref * std::sqrt(var / mc_samples);
  est.mc_samples = mc_samples;
  return est;
}

// E[C(g|nodal set in B(R))] upper bound: K1 * Vol B(R) for isotropic models,
// direction-averaged K1 otherwise.
inline KacRiceEstimate kacrice_upper_bound(const SpectralModel& model, double R,
                                           long mc_samples, std::uint64_t seed,
                                           int directions = 16) {
  const int d = model.dimension();
  if (model.isotropic()) {
    Pt e1{0.0, 0.0, 0.0};
    e1[0] = 1.0;
    KacRiceEstimate est = kacrice_density(model, e1, mc_samples, seed);
    est.bound_integral = est.k1 * ball_volume(d, R);
    return est;
  }
  // Sphere-uniform direction average (equal angles in d=2, Fibonacci in d=3).
  double k1 = 0.0, se2 = 0.0;
  KacRiceEstimate last;
  for (int q = 0; q < directions; ++q) {
    Pt v{0.0, 0.0, 0.0};
    if (d == 2) {
      double th = 2.0 * M_PI * (q + 0.5) / directions;
      v = {std::cos(th), std::sin(th), 0.0};
    } else {
      double z = 1.0 - 2.0 * (q + 0.5) / directions;
      double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
      double th = q * 2.399963229728653;
      v = {rr * std::cos(th), rr * std::sin(th), z};
    }
    last = kacrice_density(model, v, mc_samples, derive_seed(seed, 0xd1 + q));
    k1 += last.k1 / directions;
    se2 += last.stderr_ * last.stderr_ / (directions * directions);
  }
  last.k1 = k1;
  last.stderr_ = std::sqrt(se2);
  last.bound_integral = k1 * ball_volume(d, R);
  return last;
}

}  // namespace nodal

#endif  // NODAL_MORSE_KACRICE_HPP
