#ifndef NODAL_FIELD_SAMPLER_HPP
#define NODAL_FIELD_SAMPLER_HPP

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nodal/common.hpp"
#include "nodal/grid.hpp"
#include "nodal/rng.hpp"
#include "nodal/spectral_model.hpp"

namespace nodal {

enum class SampleMethod { CirculantEmbedding, RandomizedSpectral, KostlanDirect };

inline std::string method_name(SampleMethod m) {
  switch (m) {
    case SampleMethod::CirculantEmbedding: return "circulant";
    case SampleMethod::RandomizedSpectral: return "spectral";
    case SampleMethod::KostlanDirect: return "kostlan-direct";
  }
  return "?";
}

struct EvalDerivs {
  double value = 0.0;
  Pt grad{0.0, 0.0, 0.0};
  std::array<std::array<double, 3>, 3> hess{};
};

// F(x) = (1/sqrt(M)) sum_k a_k cos<l_k,x> + b_k sin<l_k,x>; exactly Gaussian
// conditional on the frequency draw, with analytic derivatives.
struct SpectralEvaluator {
  int dim = 2;
  std::vector<Pt> freq;
  std::vector<double> amp_cos, amp_sin;

  double value(const Pt& x) const {
    double scale = 1.0 / std::sqrt(static_cast<double>(freq.size()));
    double s = 0.0;
    for (size_t k = 0; k < freq.size(); ++k) {
      double ph = dot(freq[k], x, dim);
      s += amp_cos[k] * std::cos(ph) + amp_sin[k] * std::sin(ph);
    }
    return scale * s;
  }

  EvalDerivs derivs(const Pt& x) const {
    double scale = 1.0 / std::sqrt(static_cast<double>(freq.size()));
    EvalDerivs out;
    for (size_t k = 0; k < freq.size(); ++k) {
      double ph = dot(freq[k], x, dim);
      double c = std::cos(ph), s = std::sin(ph);
      double f = amp_cos[k] * c + amp_sin[k] * s;
      double df = -amp_cos[k] * s + amp_sin[k] * c;
      out.value += f;
      for (int i = 0; i < dim; ++i) {
        out.grad[i] += df * freq[k][i];
        // Accumulate one triangle so the Hessian is symmetric to the bit.
        for (int j = i; j < dim; ++j) out.hess[i][j] -= f * freq[k][i] * freq[k][j];
      }
    }
    out.value *= scale;
    for (int i = 0; i < dim; ++i) {
      out.grad[i] *= scale;
      for (int j = i; j < dim; ++j) {
        out.hess[i][j] *= scale;
        out.hess[j][i] = out.hess[i][j];
      }
    }
    return out;
  }
};

// Degree-n Kostlan polynomial evaluated on the sqrt(n)-scaled chart at the
// north pole of S^2. Coefficients carry the Gaussian draw folded into the
// multinomial weight.
struct KostlanEvaluator {
  struct Term {
    std::uint16_t j0, j1;  // j2 = n - j0 - j1
    double coef;           // a_j * sqrt(n choose j)
  };
  int degree = 0;
  std::vector<Term> terms;

  // u in the chart plane -> point on S^2 and chart-map derivatives.
  double value(const Pt& u) const { return eval<false>(u).value; }
  EvalDerivs derivs(const Pt& u) const { return eval<true>(u); }

 private:
  template <bool WithDerivs>
  EvalDerivs eval(const Pt& u) const {
    const int n = degree;
    const double sn = std::sqrt(static_cast<double>(n));
    const double w0 = u[0] / sn, w1 = u[1] / sn;
    const double t = std::sqrt(w0 * w0 + w1 * w1);

    // a(t) = sin t / t and the combinations entering the chart Hessian,
    // with series fallbacks near t = 0.
    double a, ap_t, g3, ct, st_t;
    if (t < 1e-2) {
      double t2 = t * t;
      a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
      ap_t = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;        // a'(t)/t
      g3 = 1.0 / 15.0 - t2 / 210.0;                           // a''/t^2 - a'/t^3
      ct = std::cos(t);
      st_t = a;
    } else {
      double st = std::sin(t);
      ct = std::cos(t);
      a = st / t;
      double ap = ct / t - st / (t * t);
      double app = -st / t - 2.0 * ct / (t * t) + 2.0 * st / (t * t * t);
      ap_t = ap / t;
      g3 = (t * app - ap) / (t * t * t);
      st_t = a;
    }

    const double x = w0 * a, y = w1 * a, z = ct;

    // Power tables.
    thread_local std::vector<double> X, Y, Z;
    X.resize(n + 1);
    Y.resize(n + 1);
    Z.resize(n + 1);
    X[0] = Y[0] = Z[0] = 1.0;
    for (int k = 1; k <= n; ++k) {
      X[k] = X[k - 1] * x;
      Y[k] = Y[k - 1] * y;
      Z[k] = Z[k - 1] * z;
    }

    double P = 0.0;
    double Px = 0.0, Py = 0.0, Pz = 0.0;
    double Pxx = 0.0, Pxy = 0.0, Pxz = 0.0, Pyy = 0.0, Pyz = 0.0, Pzz = 0.0;
    for (const auto& tm : terms) {
      const int j0 = tm.j0, j1 = tm.j1, j2 = n - j0 - j1;
      const double c = tm.coef;
      P += c * X[j0] * Y[j1] * Z[j2];
      if constexpr (WithDerivs) {
        if (j0 > 0) Px += c * j0 * X[j0 - 1] * Y[j1] * Z[j2];
        if (j1 > 0) Py += c * j1 * X[j0] * Y[j1 - 1] * Z[j2];
        if (j2 > 0) Pz += c * j2 * X[j0] * Y[j1] * Z[j2 - 1];
        if (j0 > 1) Pxx += c * j0 * (j0 - 1) * X[j0 - 2] * Y[j1] * Z[j2];
        if (j1 > 1) Pyy += c * j1 * (j1 - 1) * X[j0] * Y[j1 - 2] * Z[j2];
        if (j2 > 1) Pzz += c * j2 * (j2 - 1) * X[j0] * Y[j1] * Z[j2 - 2];
        if (j0 > 0 && j1 > 0) Pxy += c * j0 * j1 * X[j0 - 1] * Y[j1 - 1] * Z[j2];
        if (j0 > 0 && j2 > 0) Pxz += c * j0 * j2 * X[j0 - 1] * Y[j1] * Z[j2 - 1];
        if (j1 > 0 && j2 > 0) Pyz += c * j1 * j2 * X[j0] * Y[j1 - 1] * Z[j2 - 1];
      }
    }

    EvalDerivs out;
    out.value = P;
    if constexpr (!WithDerivs) return out;

    const double w[2] = {w0, w1};
    // J[i][j] = d p_i / d w_j for p = (w0 a, w1 a, cos t).
    double J[3][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        J[i][j] = (i == j ? a : 0.0) + w[i] * w[j] * ap_t;
    J[2][0] = -w[0] * st_t;
    J[2][1] = -w[1] * st_t;

    // H[i][j][k] = d^2 p_i / d w_j d w_k.
    double H[3][2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          double v = w[i] * w[j] * w[k] * g3;
          if (i == j) v += w[k] * ap_t;
          if (j == k) v += w[i] * ap_t;
          if (i == k) v += w[j] * ap_t;
          H[i][j][k] = v;
        }
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        H[2][j][k] = (j == k ? -st_t : 0.0) - w[j] * w[k] * ap_t;

    const double gradP[3] = {Px, Py, Pz};
    const double hessP[3][3] = {{Pxx, Pxy, Pxz}, {Pxy, Pyy, Pyz}, {Pxz, Pyz, Pzz}};

    const double inv_sn = 1.0 / sn;
    for (int j = 0; j < 2; ++j) {
      double g = 0.0;
      for (int i = 0; i < 3; ++i) g += gradP[i] * J[i][j];
      out.grad[j] = g * inv_sn;
    }
    for (int j = 0; j < 2; ++j)
      for (int k = j; k < 2; ++k) {
        double h = 0.0;
        for (int i = 0; i < 3; ++i) {
          for (int l = 0; l < 3; ++l) h += hessP[i][l] * J[i][j] * J[l][k];
          h += gradP[i] * H[i][j][k];
        }
        out.hess[j][k] = h * inv_sn * inv_sn;
        out.hess[k][j] = out.hess[j][k];
      }
    return out;
  }
};

// One sampled realization; immutable after creation.
struct FieldRealization {
  Grid grid;
  std::uint64_t seed = 0;
  SampleMethod method = SampleMethod::CirculantEmbedding;
  std::string model_id;
  std::optional<SpectralModel> model;
  std::optional<SpectralEvaluator> spectral;
  std::optional<KostlanEvaluator> kostlan;

  bool has_analytic_evaluator() const {
    return spectral.has_value() || kostlan.has_value();
  }
};

namespace detail {

// Smallest 5-smooth even integer >= target; keeps the FFT cheap.
inline std::int64_t fft_friendly(std::int64_t target) {
  std::int64_t best = -1;
  for (std::int64_t p2 = 2; p2 < 4 * target; p2 *= 2)
    for (std::int64_t p3 = 1; p2 * p3 < 4 * target; p3 *= 3)
      for (std::int64_t p5 = 1; p2 * p3 * p5 < 4 * target; p5 *= 5) {
        std::int64_t v = p2 * p3 * p5;
        if (v >= target && (best < 0 || v < best)) best = v;
      }
  return best;
}

inline std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuf {
  fftw_complex* data = nullptr;
  explicit FftwBuf(std::int64_t n) {
    data = fftw_alloc_complex(static_cast<size_t>(n));
    if (!data) throw NumericError("fftw allocation failed");
  }
  ~FftwBuf() { fftw_free(data); }
  FftwBuf(const FftwBuf&) = delete;
  FftwBuf& operator=(const FftwBuf&) = delete;
};

// Executes an unnormalized backward DFT in place.
inline void fft_backward(int dim, std::int64_t m, fftw_complex* buf) {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  fftw_plan plan =
      dim == 2 ? fftw_plan_dft_2d(static_cast<int>(m), static_cast<int>(m), buf, buf,
                                  FFTW_BACKWARD, FFTW_ESTIMATE)
               : fftw_plan_dft_3d(static_cast<int>(m), static_cast<int>(m),
                                  static_cast<int>(m), buf, buf, FFTW_BACKWARD,
                                  FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

// Circulant eigenvalues of the torus-wrapped covariance; throws when the
// clipped negative mass exceeds tolerance at the maximal padding.
inline std::vector<double> circulant_eigenvalues(const SpectralModel& model, int dim,
                                                 double h, std::int64_t m) {
  std::int64_t total = 1;
  for (int k = 0; k < dim; ++k) total *= m;
  FftwBuf buf(total);
  auto wrap = [&](std::int64_t k) {
    return (k <= m / 2 ? static_cast<double>(k) : static_cast<double>(k - m)) * h;
  };
  if (dim == 2) {
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < m; ++j) {
        Pt tau{wrap(i), wrap(j), 0.0};
        buf.data[i * m + j][0] = model.covariance(tau);
        buf.data[i * m + j][1] = 0.0;
      }
  } else {
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < m; ++j)
        for (std::int64_t k = 0; k < m; ++k) {
          Pt tau{wrap(i), wrap(j), wrap(k)};
          buf.data[(i * m + j) * m + k][0] = model.covariance(tau);
          buf.data[(i * m + j) * m + k][1] = 0.0;
        }
  }
  fft_backward(dim, m, buf.data);
  std::vector<double> eig(total);
  double neg = 0.0, tot = 0.0;
  for (std::int64_t q = 0; q < total; ++q) {
    double v = buf.data[q][0];
    eig[q] = v;
    tot += std::abs(v);
    if (v < 0.0) neg += -v;
  }
  if (neg > 1e-6 * tot) return {};  // caller pads further
  for (auto& v : eig)
    if (v < 0.0) v = 0.0;
  return eig;
}

}  // namespace detail

inline FieldRealization sample_field(const SpectralModel& model, double half_width,
                                     double spacing, std::uint64_t seed,
                                     SampleMethod method, int spectral_terms = 4096) {
  if (!model.check_axioms().rho3) throw NumericError("nondegenerate axiom violated");
  if (spacing > model.h_limit() * (1.0 + 1e-12)) throw NumericError("grid too coarse");
  if (model.kind() == ModelKind::Kostlan)
    throw ConfigError("use sample_kostlan for the kostlan ensemble");
  if (method == SampleMethod::KostlanDirect)
    throw ConfigError("kostlan-direct method requires the kostlan ensemble");

  const int d = model.dimension();
  FieldRealization out;
  out.grid = Grid::centered(d, half_width, spacing);
  out.seed = seed;
  out.method = method;
  out.model_id = model.name();
  out.model = model;

  Rng rng(seed);
  if (method == SampleMethod::RandomizedSpectral) {
    SpectralEvaluator ev;
    ev.dim = d;
    ev.freq.resize(spectral_terms);
    ev.amp_cos.resize(spectral_terms);
    ev.amp_sin.resize(spectral_terms);
    for (int k = 0; k < spectral_terms; ++k) {
      ev.freq[k] = model.sample_frequency(rng);
      ev.amp_cos[k] = rng.normal();
      ev.amp_sin[k] = rng.normal();
    }
    const auto& g = out.grid;
    std::int64_t n0 = g.dims[0], n1 = g.dims[1], n2 = d == 3 ? g.dims[2] : 1;
    for (std::int64_t i = 0; i < n0; ++i)
      for (std::int64_t j = 0; j < n1; ++j)
        for (std::int64_t k = 0; k < n2; ++k)
          out.grid.values[g.index(i, j, k)] = ev.value(g.position(i, j, k));
    out.spectral = std::move(ev);
    return out;
  }

  // Circulant embedding.
  const std::int64_t n = out.grid.dims[0];
  std::vector<double> eig;
  std::int64_t m = 0;
  for (int pad = 2; pad <= 8; pad *= 2) {
    m = detail::fft_friendly(pad * (n - 1));
    eig = detail::circulant_eigenvalues(model, d, spacing, m);
    if (!eig.empty()) break;
  }
  if (eig.empty()) throw NumericError("embedding not PSD");

  std::int64_t total = 1;
  for (int k = 0; k < d; ++k) total *= m;
  detail::FftwBuf buf(total);
  const double inv_sqrt_total = 1.0 / std::sqrt(static_cast<double>(total));
  for (std::int64_t q = 0; q < total; ++q) {
    double s = std::sqrt(eig[q]) * inv_sqrt_total;
    buf.data[q][0] = s * rng.normal();
    buf.data[q][1] = s * rng.normal();
  }
  detail::fft_backward(d, m, buf.data);

  const auto& g = out.grid;
  if (d == 2) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        out.grid.values[g.index(i, j)] = buf.data[i * m + j][0];
  } else {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        for (std::int64_t k = 0; k < n; ++k)
          out.grid.values[g.index(i, j, k)] = buf.data[(i * m + j) * m + k][0];
  }
  return out;
}

inline SampleMethod default_method(const SpectralModel& model) {
  switch (model.kind()) {
    case ModelKind::BargmannFock: return SampleMethod::CirculantEmbedding;
    case ModelKind::Kostlan: return SampleMethod::KostlanDirect;
    default: return SampleMethod::RandomizedSpectral;
  }
}

inline FieldRealization sample_kostlan(int n, double half_width, double spacing,
                                       std::uint64_t seed) {
  SpectralModel model = SpectralModel::kostlan(n, 2);
  if (spacing > model.h_limit() * (1.0 + 1e-12)) throw NumericError("grid too coarse");
  if (half_width / std::sqrt(static_cast<double>(n)) > M_PI / 2.0 - 0.1)
    throw NumericError("chart out of range");

  FieldRealization out;
  out.grid = Grid::centered(2, half_width, spacing);
  out.seed = seed;
  out.method = SampleMethod::KostlanDirect;
  out.model_id = model.name();
  out.model = model;

  Rng rng(seed);
  KostlanEvaluator ev;
  ev.degree = n;
  ev.terms.reserve(static_cast<size_t>(n + 2) * (n + 1) / 2);
  const double lg_n = std::lgamma(n + 1.0);
  for (int j0 = 0; j0 <= n; ++j0)
    for (int j1 = 0; j1 + j0 <= n; ++j1) {
      int j2 = n - j0 - j1;
      double lg = 0.5 * (lg_n - std::lgamma(j0 + 1.0) - std::lgamma(j1 + 1.0) -
                         std::lgamma(j2 + 1.0));
      KostlanEvaluator::Term t;
      t.j0 = static_cast<std::uint16_t>(j0);
      t.j1 = static_cast<std::uint16_t>(j1);
      t.coef = rng.normal() * std::exp(lg);
      ev.terms.push_back(t);
    }

  const auto& g = out.grid;
  for (std::int64_t i = 0; i < g.dims[0]; ++i)
    for (std::int64_t j = 0; j < g.dims[1]; ++j)
      out.grid.values[g.index(i, j)] = ev.value(g.position(i, j));
  out.kostlan = std::move(ev);
  return out;
}

inline EvalDerivs evaluate_with_derivatives(const FieldRealization& f, const Pt& x) {
  for (int k = 0; k < f.grid.dim; ++k) {
    double lo = f.grid.origin[k];
    double hi = lo + (f.grid.dims[k] - 1) * f.grid.spacing;
    if (x[k] < lo - 1e-12 || x[k] > hi + 1e-12)
      throw NumericError("evaluation point outside sampled box");
  }
  if (f.spectral) return f.spectral->derivs(x);
  if (f.kostlan) return f.kostlan->derivs(x);
  throw NumericError("no analytic evaluator");
}

}  // namespace nodal

#endif  // NODAL_FIELD_SAMPLER_HPP
