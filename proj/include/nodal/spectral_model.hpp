#ifndef NODAL_SPECTRAL_MODEL_HPP
#define NODAL_SPECTRAL_MODEL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nodal/common.hpp"
#include "nodal/rng.hpp"

namespace nodal {

enum class ModelKind { BargmannFock, Berry, BandLimited, Kostlan, CustomDiscrete };

struct SpectralAtom {
  Pt freq{};
  double weight = 0.0;
};

struct AxiomFlags {
  bool rho1 = false;  // spectral measure has no atoms
  bool rho2 = false;  // finite moment of order p > 6
  bool rho3 = false;  // support spans R^d
  bool rho4 = false;  // support has non-empty interior
};

// A stationary Gaussian ensemble, described by its covariance kernel and a
// few spectral-measure summaries. Immutable after construction.
class SpectralModel {
 public:
  static SpectralModel bargmann_fock(int d) {
    SpectralModel m(ModelKind::BargmannFock, d);
    m.axioms_ = {true, true, true, true};
    return m;
  }

  static SpectralModel berry(int d) {
    SpectralModel m(ModelKind::Berry, d);
    if (d != 2 && d != 3)
      throw ConfigError("unsupported dimension for berry: " + std::to_string(d));
    // Surface measure on the unit sphere: empty interior, (rho4) fails.
    m.axioms_ = {true, true, true, false};
    return m;
  }

  static SpectralModel band_limited(int d, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0))
      throw ConfigError("band-limited alpha must lie in [0,1)");
    SpectralModel m(ModelKind::BandLimited, d);
    m.alpha_ = alpha;
    m.axioms_ = {true, true, true, true};
    return m;
  }

  static SpectralModel kostlan(int n, int d) {
    if (d != 2) throw ConfigError("kostlan ensemble is implemented for d=2 only");
    if (n < 1 || n > 400) throw ConfigError("kostlan degree out of range [1,400]");
    SpectralModel m(ModelKind::Kostlan, d);
    m.degree_ = n;
    // Flags of the scaling limit (Bargmann-Fock), which governs the chart field.
    m.axioms_ = {true, true, true, true};
    return m;
  }

  static SpectralModel custom_discrete(int d, std::vector<SpectralAtom> atoms) {
    SpectralModel m(ModelKind::CustomDiscrete, d);
    // Symmetrize (lambda -> -lambda) so the covariance is real, then
    // normalize total mass to 1 so that r(0) = 1.
    double total = 0.0;
    for (const auto& a : atoms) {
      if (a.weight < 0.0) throw ConfigError("negative spectral atom weight");
      total += a.weight;
    }
    if (total <= 0.0) throw ConfigError("custom spectral measure has zero mass");
    for (const auto& a : atoms) {
      SpectralAtom pos = a, neg = a;
      pos.weight = 0.5 * a.weight / total;
      neg.weight = 0.5 * a.weight / total;
      for (int k = 0; k < d; ++k) neg.freq[k] = -a.freq[k];
      m.atoms_.push_back(pos);
      m.atoms_.push_back(neg);
    }
    m.axioms_.rho1 = false;
    m.axioms_.rho2 = true;  // finitely many atoms: all moments finite
    m.axioms_.rho3 = m.frequency_span_rank() == d;
    m.axioms_.rho4 = false;  // discrete support has empty interior
    return m;
  }

  ModelKind kind() const { return kind_; }
  int dimension() const { return dim_; }
  double alpha() const { return alpha_; }
  int degree() const { return degree_; }
  const std::vector<SpectralAtom>& atoms() const { return atoms_; }
  AxiomFlags check_axioms() const { return axioms_; }

  // Largest p with a finite spectral moment. All built-in measures are
  // compactly supported or Gaussian, and discrete measures are finite, so
  // this is +inf throughout; kept explicit for the (rho2) report.
  double moment_order_p() const { return std::numeric_limits<double>::infinity(); }

  std::string name() const {
    switch (kind_) {
      case ModelKind::BargmannFock: return "bargmann-fock";
      case ModelKind::Berry: return "berry";
      case ModelKind::BandLimited: return "band-limited";
      case ModelKind::Kostlan: return "kostlan";
      case ModelKind::CustomDiscrete: return "custom";
    }
    return "?";
  }

  bool isotropic() const { return kind_ != ModelKind::CustomDiscrete; }

  // r_F(tau), normalized to r(0) = 1. For Kostlan, tau is a chart
  // displacement and the covariance is cos(|tau|/sqrt(n))^n.
  double covariance(const Pt& tau) const {
    if (kind_ == ModelKind::CustomDiscrete) {
      double s = 0.0;
      for (const auto& a : atoms_) s += a.weight * std::cos(dot(a.freq, tau, dim_));
      return s;
    }
    return covariance_radial(norm(tau, dim_));
  }

  double covariance_radial(double t) const {
    switch (kind_) {
      case ModelKind::BargmannFock:
        return std::exp(-0.5 * t * t);
      case ModelKind::Berry:
        if (dim_ == 2) return std::cyl_bessel_j(0.0, t);
        return t == 0.0 ? 1.0 : std::sin(t) / t;  // d=3
      case ModelKind::BandLimited:
        return band_limited_radial(t);
      case ModelKind::Kostlan: {
        double th = t / std::sqrt(static_cast<double>(degree_));
        return std::pow(std::cos(th), degree_);
      }
      case ModelKind::CustomDiscrete: {
        Pt tau{t, 0.0, 0.0};
        return covariance(tau);
      }
    }
    return 0.0;
  }

  // Lambda = -hess r(0) = Cov(grad F(0)); PD iff (rho3).
  Eigen::MatrixXd second_moment_matrix() const {
    Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(dim_, dim_);
    switch (kind_) {
      case ModelKind::BargmannFock:
      case ModelKind::Kostlan:
        lam.setIdentity();
        break;
      case ModelKind::Berry:
        lam = Eigen::MatrixXd::Identity(dim_, dim_) / dim_;
        break;
      case ModelKind::BandLimited:
        lam = Eigen::MatrixXd::Identity(dim_, dim_) * (second_radial_moment() / dim_);
        break;
      case ModelKind::CustomDiscrete:
        for (const auto& a : atoms_) {
          if (!std::isfinite(a.freq[0]) || norm(a.freq, dim_) > 1e12)
            throw NumericError("moment overflow");
          for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j)
              lam(i, j) += a.weight * a.freq[i] * a.freq[j];
        }
        break;
    }
    return lam;
  }

  // E[lambda_i lambda_j lambda_k lambda_l]; needed to build the joint law of
  // the Hessian for the Kac-Rice density.
  double fourth_moment(int i, int j, int k, int l) const {
    if (kind_ == ModelKind::CustomDiscrete) {
      double s = 0.0;
      for (const auto& a : atoms_)
        s += a.weight * a.freq[i] * a.freq[j] * a.freq[k] * a.freq[l];
      return s;
    }
    double m4 = fourth_radial_moment();
    double c = m4 / (dim_ * (dim_ + 2.0));
    auto del = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    return c * (del(i, j) * del(k, l) + del(i, k) * del(j, l) + del(i, l) * del(j, k));
  }

  double second_radial_moment() const {
    switch (kind_) {
      case ModelKind::BargmannFock:
      case ModelKind::Kostlan:
        return static_cast<double>(dim_);
      case ModelKind::Berry:
        return 1.0;
      case ModelKind::BandLimited: {
        double d = dim_;
        return (d / (d + 2.0)) * (1.0 - std::pow(alpha_, dim_ + 2)) /
               (1.0 - std::pow(alpha_, dim_));
      }
      case ModelKind::CustomDiscrete:
        return second_moment_matrix().trace();
    }
    return 0.0;
  }

  double fourth_radial_moment() const {
    switch (kind_) {
      case ModelKind::BargmannFock:
        return dim_ * (dim_ + 2.0);
      case ModelKind::Kostlan: {
        // From cos(t/sqrt n)^n = 1 - t^2/2 + (1/8 - 1/(12n)) t^4 + ...
        double e14 = 3.0 - 2.0 / degree_;
        return e14 * dim_ * (dim_ + 2.0) / 3.0;
      }
      case ModelKind::Berry:
        return 1.0;
      case ModelKind::BandLimited: {
        double d = dim_;
        return (d / (d + 4.0)) * (1.0 - std::pow(alpha_, dim_ + 4)) /
               (1.0 - std::pow(alpha_, dim_));
      }
      case ModelKind::CustomDiscrete: {
        double s = 0.0;
        for (const auto& a : atoms_) {
          double n2 = dot(a.freq, a.freq, dim_);
          s += a.weight * n2 * n2;
        }
        return s;
      }
    }
    return 0.0;
  }

  // Draw one frequency from the normalized spectral measure (used by the
  // randomized spectral sampler).
  Pt sample_frequency(Rng& rng) const {
    Pt f{0.0, 0.0, 0.0};
    switch (kind_) {
      case ModelKind::BargmannFock:
        for (int k = 0; k < dim_; ++k) f[k] = rng.normal();
        return f;
      case ModelKind::Berry: {
        double n2 = 0.0;
        do {
          n2 = 0.0;
          for (int k = 0; k < dim_; ++k) {
            f[k] = rng.normal();
            n2 += f[k] * f[k];
          }
        } while (n2 == 0.0);
        double inv = 1.0 / std::sqrt(n2);
        for (int k = 0; k < dim_; ++k) f[k] *= inv;
        return f;
      }
      case ModelKind::BandLimited: {
        double u = rng.uniform();
        double ad = std::pow(alpha_, dim_);
        double s = std::pow(ad + u * (1.0 - ad), 1.0 / dim_);
        double n2 = 0.0;
        do {
          n2 = 0.0;
          for (int k = 0; k < dim_; ++k) {
            f[k] = rng.normal();
            n2 += f[k] * f[k];
          }
        } while (n2 == 0.0);
        double inv = s / std::sqrt(n2);
        for (int k = 0; k < dim_; ++k) f[k] *= inv;
        return f;
      }
      case ModelKind::CustomDiscrete: {
        double u = rng.uniform();
        double acc = 0.0;
        for (const auto& a : atoms_) {
          acc += a.weight;
          if (u < acc) return a.freq;
        }
        return atoms_.back().freq;
      }
      case ModelKind::Kostlan:
        throw NumericError("kostlan ensemble has no spectral sampler; use kostlan-direct");
    }
    return f;
  }

  // Smallest tau with r(tau e1) = 1/2: the correlation scale used for the
  // grid-resolution rule.
  double correlation_scale() const {
    double lo = 0.0, hi = 0.0;
    double step = 1e-3;
    double prev = 1.0;
    for (double t = step; t < 200.0; t += step) {
      double v = kind_ == ModelKind::CustomDiscrete
                     ? covariance(Pt{t, 0.0, 0.0})
                     : covariance_radial(t);
      if (v <= 0.5) {
        lo = t - step;
        hi = t;
        break;
      }
      prev = v;
    }
    (void)prev;
    if (hi == 0.0) throw NumericError("covariance never drops to 1/2; cannot set grid scale");
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      double v = kind_ == ModelKind::CustomDiscrete
                     ? covariance(Pt{mid, 0.0, 0.0})
                     : covariance_radial(mid);
      (v > 0.5 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // Default grid spacing: 1/6 of the correlation scale.
  double h_max() const { return correlation_scale() / 6.0; }

  // Hard refusal threshold for user-supplied spacings. Looser than the
  // default so documented coarse configurations (e.g. h=0.25 on the Gaussian
  // kernel) stay usable, while clearly unresolvable grids are rejected.
  double h_limit() const { return correlation_scale() / 4.5; }

 private:
  SpectralModel(ModelKind k, int d) : kind_(k), dim_(d) {
    if (d < 2 || d > 3) throw ConfigError("unsupported dimension: " + std::to_string(d));
  }

  int frequency_span_rank() const {
    Eigen::MatrixXd a(atoms_.size(), dim_);
    for (size_t r = 0; r < atoms_.size(); ++r)
      for (int c = 0; c < dim_; ++c) a(r, c) = atoms_[r].freq[c];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-12);
    return static_cast<int>(lu.rank());
  }

  // Radial covariance of the uniform measure on the annulus alpha <= |s| <= 1,
  // by 64-point Gauss-Legendre over the radial density s^{d-1}.
  double band_limited_radial(double t) const {
    static const int N = 64;
    static thread_local std::vector<double> gl_x, gl_w;
    if (gl_x.empty()) gauss_legendre(N, gl_x, gl_w);
    double num = 0.0, den = 0.0;
    for (int q = 0; q < N; ++q) {
      double s = alpha_ + (1.0 - alpha_) * 0.5 * (gl_x[q] + 1.0);
      double w = gl_w[q] * (1.0 - alpha_) * 0.5;
      double dens = std::pow(s, dim_ - 1);
      double kern;
      if (dim_ == 2)
        kern = std::cyl_bessel_j(0.0, s * t);
      else
        kern = (s * t == 0.0) ? 1.0 : std::sin(s * t) / (s * t);
      num += w * dens * kern;
      den += w * dens;
    }
    return num / den;
  }

  static void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
          double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
        }
        double dp = n * (z * p0 - p1) / (z * z - 1.0);
        double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-15) break;
      }
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      double dp = n * (z * p0 - p1) / (z * z - 1.0);
      x[i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }

  ModelKind kind_;
  int dim_;
  double alpha_ = 0.0;
  int degree_ = 0;
  std::vector<SpectralAtom> atoms_;
  AxiomFlags axioms_;
};

}  // namespace nodal

#endif  // NODAL_SPECTRAL_MODEL_HPP
