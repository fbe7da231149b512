#ifndef NODAL_EXPERIMENT_HARNESS_HPP
#define NODAL_EXPERIMENT_HARNESS_HPP

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nodal/common.hpp"
#include "nodal/field_sampler.hpp"
#include "nodal/nodal_topology.hpp"
#include "nodal/rng.hpp"
#include "nodal/spectral_model.hpp"

namespace nodal {

struct ModelSpec {
  std::string model = "bargmann-fock";
  int dim = 2;
  double alpha = 0.0;
  int degree_n = 100;
  std::string custom_csv;
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<double> R_list;
  std::vector<double> r_list;
  int replicates = 0;  // 0 -> dimension default (200 in d=2, 50 in d=3)
  std::uint64_t master_seed = 1;
  double spacing = 0.0;  // 0 -> h_max of the model
  std::string method = "default";
  int spectral_terms = 4096;
  int threads = 1;
  std::string out_dir = ".";

  int effective_replicates() const {
    if (replicates > 0) return replicates;
    return model.dim == 3 ? 50 : 200;
  }

  void validate() const {
    if (model.dim != 2 && model.dim != 3)
      throw ConfigError("unsupported dimension: " + std::to_string(model.dim));
    if (R_list.empty()) throw ConfigError("R_list must be non-empty");
    for (size_t k = 1; k < R_list.size(); ++k)
      if (R_list[k] <= R_list[k - 1])
        throw ConfigError("invalid radius ordering: R_list must be strictly increasing");
    for (double r : R_list)
      if (r <= 0.0) throw ConfigError("radii must be positive");
    for (double r : r_list)
      if (!(r > 0.0 && r < R_list.front()))
        throw ConfigError("invalid radius ordering");
    if (effective_replicates() < 2) throw ConfigError("N must be >= 2");
  }
};

inline std::vector<SpectralAtom> load_custom_atoms(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open custom spectral CSV: " + path);
  std::vector<SpectralAtom> atoms;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    SpectralAtom a;
    std::string tok;
    for (int k = 0; k < dim; ++k) {
      if (!std::getline(ss, tok, ',')) throw ConfigError("malformed custom CSV row");
      a.freq[k] = std::stod(tok);
    }
    if (!std::getline(ss, tok, ',')) throw ConfigError("malformed custom CSV row");
    a.weight = std::stod(tok);
    atoms.push_back(a);
  }
  return atoms;
}

inline SpectralModel build_model(const ModelSpec& spec) {
  if (spec.model == "bargmann-fock") return SpectralModel::bargmann_fock(spec.dim);
  if (spec.model == "berry") return SpectralModel::berry(spec.dim);
  if (spec.model == "band-limited")
    return SpectralModel::band_limited(spec.dim, spec.alpha);
  if (spec.model == "kostlan") return SpectralModel::kostlan(spec.degree_n, spec.dim);
  if (spec.model == "custom")
    return SpectralModel::custom_discrete(spec.dim,
                                          load_custom_atoms(spec.custom_csv, spec.dim));
  throw ConfigError("unknown model: " + spec.model);
}

inline SampleMethod parse_method(const std::string& name, const SpectralModel& model) {
  if (name == "default" || name.empty()) return default_method(model);
  if (name == "circulant") return SampleMethod::CirculantEmbedding;
  if (name == "spectral") return SampleMethod::RandomizedSpectral;
  if (name == "kostlan-direct") return SampleMethod::KostlanDirect;
  throw ConfigError("unknown method: " + name);
}

// Grid margin beyond B(R): at least 2h sqrt(d) plus one extra cell.
inline double sampling_half_width(double R, double h, int dim) {
  return R + (2.0 * std::sqrt(static_cast<double>(dim)) + 1.0) * h;
}

inline FieldRealization sample_for(const SpectralModel& model, const ExperimentConfig& cfg,
                                   double R, std::uint64_t seed) {
  double h = cfg.spacing > 0.0 ? cfg.spacing : model.h_max();
  double hw = sampling_half_width(R, h, model.dimension());
  if (model.kind() == ModelKind::Kostlan)
    return sample_kostlan(model.degree(), hw, h, seed);
  return sample_field(model, hw, h, seed, parse_method(cfg.method, model),
                      cfg.spectral_terms);
}

struct EstimateRow {
  int i = 0;
  double R = 0.0;
  double mean = 0.0, stddev = 0.0, ci_lo = 0.0, ci_hi = 0.0;
  int n = 0;
};

struct EstimateResult {
  std::string model_name;
  int dim = 2;
  std::vector<EstimateRow> rows;
  std::vector<double> cauchy_gaps;  // i=0 means between consecutive R
  std::array<double, 3> c_i_hat{0.0, 0.0, 0.0};
  double nu_hat = 0.0;  // sphere ensembles only
  double sandwich_pass_rate = 1.0;
  long sandwich_checks = 0;
  std::map<std::string, long> class_census;  // at the largest R
  long aborted_replicates = 0;
  long total_replicates = 0;
  std::vector<std::uint64_t> replicate_seeds;
  // Raw per-replicate beta_0 density at each R (used for bootstrap checks).
  std::vector<std::vector<double>> raw_density0;
};

namespace detail {

inline void mean_ci(const std::vector<double>& xs, double& mean, double& sd,
                    double& lo, double& hi) {
  int n = static_cast<int>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  double t = n > 1 ? boost::math::quantile(boost::math::students_t(n - 1), 0.975) : 0.0;
  lo = mean - t * sd / std::sqrt(static_cast<double>(n));
  hi = mean + t * sd / std::sqrt(static_cast<double>(n));
}

// Deterministic parallel map: slot-indexed writes, strided scheduling.
template <typename Fn>
void parallel_for(long total, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (long q = 0; q < total; ++q) fn(q);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (long q = t; q < total; q += threads) fn(q);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Monte Carlo estimation of the Betti-density constants c_i: N replicates
// per radius, Student-t confidence intervals, structural sandwich audit and
// diffeomorphism-class census.
inline EstimateResult estimate_betti_density(const ExperimentConfig& cfg) {
  cfg.validate();
  SpectralModel model = build_model(cfg.model);
  AxiomFlags ax = model.check_axioms();
  if (!ax.rho2 || !ax.rho3)
    throw NumericError("model violates the (rho2)/(rho3) hypotheses");

  const int d = model.dimension();
  const int N = cfg.effective_replicates();
  const size_t nR = cfg.R_list.size();

  EstimateResult res;
  res.model_name = model.name();
  res.dim = d;
  res.total_replicates = static_cast<long>(nR) * N;
  res.raw_density0.assign(nR, {});

  struct RepOut {
    bool ok = false;
    std::array<double, 3> density{0.0, 0.0, 0.0};
    bool sandwich_ok = true;
    long sandwich_checks = 0;
    std::map<std::string, long> census;
  };

  std::vector<std::vector<RepOut>> outs(nR, std::vector<RepOut>(N));
  std::vector<std::array<double, 3>> density_rows;
  for (size_t ri = 0; ri < nR; ++ri) {
    const double R = cfg.R_list[ri];
    const double volR = ball_volume(d, R);
    detail::parallel_for(N, cfg.threads, [&, ri, R, volR](long rep) {
      std::uint64_t seed =
          derive_seed(cfg.master_seed, (static_cast<std::uint64_t>(ri) << 32) |
                                           static_cast<std::uint64_t>(rep));
      RepOut& o = outs[ri][rep];
      try {
        FieldRealization f = sample_for(model, cfg, R, seed);
        Extraction ex = extract_components(f, R);
        BettiReport rep_b = betti_report(ex, cfg.r_list, derive_seed(seed, 0x97));
        for (int i = 0; i < d; ++i)
          o.density[i] = static_cast<double>(rep_b.totals[i]) / volR;
        for (const auto& pv : rep_b.psi) {
          for (int i = 0; i < d; ++i) {
            o.sandwich_checks++;
            if (pv.psi[i] > static_cast<double>(rep_b.totals[i]) + 1e-9)
              o.sandwich_ok = false;
          }
        }
        o.census = rep_b.class_census;
        o.ok = true;
      } catch (const std::exception&) {
        o.ok = false;
      }
    });
  }

  long sandwich_fail = 0;
  for (size_t ri = 0; ri < nR; ++ri) {
    std::array<std::vector<double>, 3> cols;
    for (int rep = 0; rep < N; ++rep) {
      const RepOut& o = outs[ri][rep];
      if (ri == 0)
        res.replicate_seeds.push_back(
            derive_seed(cfg.master_seed, static_cast<std::uint64_t>(rep)));
      if (!o.ok) {
        res.aborted_replicates++;
        continue;
      }
      for (int i = 0; i < d; ++i) cols[i].push_back(o.density[i]);
      res.sandwich_checks += o.sandwich_checks;
      if (!o.sandwich_ok) sandwich_fail++;
      if (ri == nR - 1)
        for (const auto& [cls, cnt] : o.census) res.class_census[cls] += cnt;
    }
    res.raw_density0[ri] = cols[0];
    for (int i = 0; i < d; ++i) {
      if (cols[i].empty()) throw NumericError("all replicates aborted");
      EstimateRow row;
      row.i = i;
      row.R = cfg.R_list[ri];
      row.n = static_cast<int>(cols[i].size());
      detail::mean_ci(cols[i], row.mean, row.stddev, row.ci_lo, row.ci_hi);
      res.rows.push_back(row);
      if (ri == nR - 1) res.c_i_hat[i] = row.mean;
    }
  }
  res.sandwich_pass_rate =
      res.sandwich_checks == 0
          ? 1.0
          : 1.0 - static_cast<double>(sandwich_fail) /
                      static_cast<double>(res.total_replicates - res.aborted_replicates);

  // Cauchy gaps of the beta_0 density along R_list.
  std::vector<double> means0;
  for (const auto& row : res.rows)
    if (row.i == 0) means0.push_back(row.mean);
  for (size_t k = 1; k < means0.size(); ++k)
    res.cauchy_gaps.push_back(std::abs(means0[k] - means0[k - 1]));

  if (model.kind() == ModelKind::Kostlan) res.nu_hat = res.c_i_hat[0];

  if (res.aborted_replicates * 20 > res.total_replicates)
    throw NumericError("more than 5% of replicates aborted");
  return res;
}

struct ScalingProbe {
  std::vector<int> degrees;
  double R = 0.0;
  double epsilon = 0.0;
  std::vector<double> sup_distance;                  // covariance probe
  std::vector<double> radial_sup;                    // closed-form radial sup
  std::vector<std::array<double, 3>> exceedance;     // Betti probe, per i
};

// sup_t |cos(t/sqrt n)^n - e^{-t^2/2}| over t in [0, tmax].
inline double kostlan_radial_sup(int n, double tmax) {
  double sup = 0.0;
  const double sn = std::sqrt(static_cast<double>(n));
  for (double t = 0.0; t <= tmax; t += 1e-3) {
    double kost = std::pow(std::cos(t / sn), n);
    double bf = std::exp(-0.5 * t * t);
    sup = std::max(sup, std::abs(kost - bf));
  }
  return sup;
}

// Covariance part of the scaling-limit probe: sup over chart pairs
// |u|,|v| <= R of |K_{x,L}(u,v) - kappa(u-v)| with L = sqrt(n).
inline ScalingProbe kostlan_local_limit_check(const std::vector<int>& n_list, double R) {
  ScalingProbe probe;
  probe.degrees = n_list;
  probe.R = R;
  auto chart_point = [](const Pt& u, double sn) {
    double w0 = u[0] / sn, w1 = u[1] / sn;
    double t = std::sqrt(w0 * w0 + w1 * w1);
    double a = t < 1e-8 ? 1.0 : std::sin(t) / t;
    return std::array<double, 3>{w0 * a, w1 * a, std::cos(t)};
  };
  // Polar probe grid in the chart plane.
  std::vector<Pt> pts;
  for (int ir = 0; ir <= 24; ++ir)
    for (int ia = 0; ia < (ir == 0 ? 1 : 24); ++ia) {
      double rr = R * ir / 24.0;
      double th = 2.0 * M_PI * ia / 24.0;
      pts.push_back(Pt{rr * std::cos(th), rr * std::sin(th), 0.0});
    }
  for (int n : n_list) {
    double sn = std::sqrt(static_cast<double>(n));
    if (R / sn > M_PI / 2.0 - 0.1) throw NumericError("chart out of range");
    std::vector<std::array<double, 3>> sphere(pts.size());
    for (size_t q = 0; q < pts.size(); ++q) sphere[q] = chart_point(pts[q], sn);
    double sup = 0.0;
    for (size_t a = 0; a < pts.size(); ++a)
      for (size_t b = a; b < pts.size(); ++b) {
        double ip = sphere[a][0] * sphere[b][0] + sphere[a][1] * sphere[b][1] +
                    sphere[a][2] * sphere[b][2];
        ip = std::clamp(ip, -1.0, 1.0);
        double kost = std::pow(ip, n);
        double du = dist(pts[a], pts[b], 2);
        double bf = std::exp(-0.5 * du * du);
        sup = std::max(sup, std::abs(kost - bf));
      }
    probe.sup_distance.push_back(sup);
    probe.radial_sup.push_back(kostlan_radial_sup(n, std::min(2.0 * R, 2.0 * sn)));
  }
  return probe;
}

// Betti part: empirical exceedance of |beta_i / Vol B(R) - c_ref_i| > eps
// on Kostlan charts of increasing degree.
inline ScalingProbe kostlan_betti_convergence(const std::vector<int>& n_list, double R,
                                              double eps,
                                              const std::array<double, 3>& c_ref, int N,
                                              std::uint64_t seed, double spacing = 0.0,
                                              int threads = 1) {
  ScalingProbe probe;
  probe.degrees = n_list;
  probe.R = R;
  probe.epsilon = eps;
  SpectralModel bf = SpectralModel::bargmann_fock(2);
  double h = spacing > 0.0 ? spacing : bf.h_max();
  double hw = sampling_half_width(R, h, 2);
  double volR = ball_volume(2, R);
  for (size_t ni = 0; ni < n_list.size(); ++ni) {
    int n = n_list[ni];
    std::vector<std::array<double, 3>> density(N);
    detail::parallel_for(N, threads, [&, n](long rep) {
      std::uint64_t s = derive_seed(seed, (static_cast<std::uint64_t>(ni) << 32) |
                                              static_cast<std::uint64_t>(rep));
      FieldRealization f = sample_kostlan(n, hw, h, s);
      Extraction ex = extract_components(f, R);
      BettiReport b = betti_report(ex);
      for (int i = 0; i < 2; ++i)
        density[rep][i] = static_cast<double>(b.totals[i]) / volR;
    });
    std::array<double, 3> exceed{0.0, 0.0, 0.0};
    for (int rep = 0; rep < N; ++rep)
      for (int i = 0; i < 2; ++i)
        if (std::abs(density[rep][i] - c_ref[i]) > eps) exceed[i] += 1.0 / N;
    probe.exceedance.push_back(exceed);
  }
  return probe;
}

struct CensusRow {
  std::string cls;
  double rate = 0.0, ci_lo = 0.0, ci_hi = 0.0;
  long total_count = 0;
};

struct CensusResult {
  double R = 0.0;
  int n = 0;
  std::vector<CensusRow> rows;
  double nodal_rate = 0.0;  // sum of rates = N_F(R)/Vol B(R) estimate
};

// Per-diffeomorphism-class component rates, normalized per unit volume.
inline CensusResult genus_census(const ExperimentConfig& cfg) {
  cfg.validate();
  SpectralModel model = build_model(cfg.model);
  const int d = model.dimension();
  const double R = cfg.R_list.back();
  const double volR = ball_volume(d, R);
  const int N = cfg.effective_replicates();

  std::vector<std::map<std::string, long>> per_rep(N);
  std::vector<bool> ok(N, false);
  detail::parallel_for(N, cfg.threads, [&](long rep) {
    std::uint64_t seed = derive_seed(cfg.master_seed, 0xce00000ull + rep);
    try {
      FieldRealization f = sample_for(model, cfg, R, seed);
      Extraction ex = extract_components(f, R);
      for (const auto& comp : ex.components)
        if (ex.inside(comp)) per_rep[rep][comp.diffeo_class]++;
      ok[rep] = true;
    } catch (const std::exception&) {
    }
  });

  std::map<std::string, std::vector<double>> cols;
  int good = 0;
  for (int rep = 0; rep < N; ++rep) {
    if (!ok[rep]) continue;
    good++;
    for (auto& [cls, _] : per_rep[rep]) cols[cls];  // ensure key exists
  }
  if (good < 2) throw NumericError("too few successful replicates");
  if ((N - good) * 20 > N) throw NumericError("more than 5% of replicates aborted");
  for (auto& [cls, col] : cols) {
    for (int rep = 0; rep < N; ++rep) {
      if (!ok[rep]) continue;
      auto it = per_rep[rep].find(cls);
      col.push_back((it == per_rep[rep].end() ? 0.0 : it->second) / volR);
    }
  }

  CensusResult res;
  res.R = R;
  res.n = good;
  for (auto& [cls, col] : cols) {
    CensusRow row;
    row.cls = cls;
    for (double v : col) row.total_count += static_cast<long>(std::lround(v * volR));
    // Counts per class are small, so a normal-approximation interval is the
    // wrong tool; use the exact Poisson (Garwood) interval on the total count
    // over the total surveyed volume.
    const double exposure = static_cast<double>(good) * volR;
    const long k = row.total_count;
    row.rate = static_cast<double>(k) / exposure;
    row.ci_lo =
        k == 0 ? 0.0
               : boost::math::quantile(
                     boost::math::gamma_distribution<double>(static_cast<double>(k)),
                     0.025) /
                     exposure;
    row.ci_hi = boost::math::quantile(
                    boost::math::gamma_distribution<double>(static_cast<double>(k + 1)),
                    0.975) /
                exposure;
    res.rows.push_back(row);
    res.nodal_rate += row.rate;
  }
  return res;
}

}  // namespace nodal

#endif  // NODAL_EXPERIMENT_HARNESS_HPP
