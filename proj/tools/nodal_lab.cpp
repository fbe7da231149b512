// nodal-lab: sample Gaussian ensembles, extract nodal topology, and run the
// Betti-density experiment pipelines from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "nodal/experiment_harness.hpp"
#include "nodal/io.hpp"
#include "nodal/morse_kacrice.hpp"
#include "nodal/nodal_topology.hpp"

using namespace nodal;

namespace {

struct ModelFlags {
  std::string model = "bargmann-fock";
  int dim = 2;
  double alpha = 0.0;
  int degree_n = 100;
  std::string custom_csv;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model, "bargmann-fock | berry | band-limited | kostlan | custom");
    cmd->add_option("--dim", dim, "ambient dimension (2 or 3)");
    cmd->add_option("--alpha", alpha, "inner band radius for band-limited");
    cmd->add_option("--degree-n", degree_n, "kostlan polynomial degree");
    cmd->add_option("--custom-csv", custom_csv, "CSV of freq_1,..,freq_d,weight atoms");
  }

  ModelSpec spec() const {
    ModelSpec ms;
    ms.model = model;
    ms.dim = dim;
    ms.alpha = alpha;
    ms.degree_n = degree_n;
    ms.custom_csv = custom_csv;
    return ms;
  }
};

Pt parse_point(const std::string& s, int dim) {
  auto xs = parse_double_list(s);
  if (static_cast<int>(xs.size()) != dim) throw ConfigError("point has wrong dimension");
  Pt p{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) p[k] = xs[k];
  return p;
}

int run(int argc, char** argv) {
  CLI::App app{"nodal set topology laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // let subcommands see the global --seed/--threads/--out

  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  app.add_option("--seed", seed, "master RNG seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--out", out, "output path or directory");

  // sample
  auto* c_sample = app.add_subcommand("sample", "sample one field realization to NGRD");
  ModelFlags mf_sample;
  mf_sample.attach(c_sample);
  double half_width = 12.0, spacing = 0.0;
  std::string method = "default";
  int spectral_terms = 4096;
  c_sample->add_option("--half-width", half_width, "sampled cube half-width");
  c_sample->add_option("--spacing", spacing, "grid spacing (default: h_max)");
  c_sample->add_option("--method", method, "circulant | spectral | kostlan-direct");
  c_sample->add_option("--mc-terms", spectral_terms, "terms for the spectral method");

  // betti
  auto* c_betti = app.add_subcommand("betti", "Betti totals of a stored grid");
  std::string in_path, r_list_s, mesh_dir;
  double radius = 0.0;
  c_betti->add_option("--in", in_path, "NGRD input")->required();
  c_betti->add_option("--radius", radius, "ball radius R")->required();
  c_betti->add_option("--r-list", r_list_s, "comma list of lower-bound radii r");
  c_betti->add_option("--export-mesh", mesh_dir, "directory for OFF meshes (d=3)");

  // sandwich
  auto* c_sandwich = app.add_subcommand("sandwich", "Psi_i(R,r) against beta_i(R)");
  std::string sw_in;
  double sw_R = 0.0, sw_r = 0.0;
  c_sandwich->add_option("--in", sw_in, "NGRD input")->required();
  c_sandwich->add_option("--radius", sw_R, "ball radius R")->required();
  c_sandwich->add_option("--r", sw_r, "small radius r")->required();

  // morse
  auto* c_morse = app.add_subcommand("morse", "critical points of the distance squared");
  std::string mo_in, mo_p = "0,0";
  double mo_R = 0.0;
  c_morse->add_option("--in", mo_in, "NGRD input (sidecar required)")->required();
  c_morse->add_option("--radius", mo_R, "ball radius R")->required();
  c_morse->add_option("--p", mo_p, "base point, comma separated");

  // kacrice
  auto* c_kacrice = app.add_subcommand("kacrice", "Kac-Rice density and bound");
  ModelFlags mf_kr;
  mf_kr.attach(c_kacrice);
  int kr_directions = 16;
  long kr_mc = 100000;
  double kr_R = 8.0;
  c_kacrice->add_option("--directions", kr_directions, "direction count");
  c_kacrice->add_option("--mc", kr_mc, "Monte Carlo samples");
  c_kacrice->add_option("--radius", kr_R, "ball radius for the bound integral");

  // estimate
  auto* c_estimate = app.add_subcommand("estimate", "Monte Carlo Betti-density estimate");
  std::string est_config;
  c_estimate->add_option("--config", est_config, "key=value run config")->required();

  // kostlan-limit
  auto* c_limit = app.add_subcommand("kostlan-limit", "scaling-limit covariance probe");
  std::string nl_s = "50,200,800";
  double kl_R = 3.0;
  c_limit->add_option("--n-list", nl_s, "comma list of degrees");
  c_limit->add_option("--radius", kl_R, "chart probe radius");

  // census
  auto* c_census = app.add_subcommand("census", "diffeomorphism-class census");
  std::string cen_config;
  c_census->add_option("--config", cen_config, "key=value run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*c_sample) {
    if (out.empty()) throw ConfigError("sample requires --out grid.ngrd");
    FieldRealization f;
    if (mf_sample.model == "kostlan") {
      SpectralModel m = SpectralModel::kostlan(mf_sample.degree_n, mf_sample.dim);
      double h = spacing > 0.0 ? spacing : m.h_max();
      f = sample_kostlan(mf_sample.degree_n, half_width, h, seed);
    } else {
      SpectralModel m = build_model(mf_sample.spec());
      double h = spacing > 0.0 ? spacing : m.h_max();
      f = sample_field(m, half_width, h, seed, parse_method(method, m), spectral_terms);
    }
    write_grid(out, f);
    std::cout << "wrote " << out << " (" << f.grid.node_count() << " nodes)\n";
    return 0;
  }

  if (*c_betti) {
    FieldRealization f = read_grid(in_path);
    Extraction ex = extract_components(f, radius);
    BettiReport rep = betti_report(ex, parse_double_list(r_list_s), derive_seed(seed, 0x97));
    nlohmann::json j = betti_report_json(rep, ex.dim);
    if (!mesh_dir.empty()) export_meshes_off(ex, mesh_dir);
    if (!out.empty())
      atomic_write(out, j.dump(2) + "\n");
    else
      std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*c_sandwich) {
    FieldRealization f = read_grid(sw_in);
    Extraction ex = extract_components(f, sw_R);
    BettiReport rep = betti_report(ex);
    auto psi = sandwich_psi(ex, sw_r, derive_seed(seed, 0x5a5a));
    nlohmann::json j;
    j["R"] = sw_R;
    j["r"] = sw_r;
    j["psi"] = std::vector<double>(psi.begin(), psi.begin() + ex.dim);
    j["beta"] = std::vector<long>(rep.totals.begin(), rep.totals.begin() + ex.dim);
    bool ok = true;
    for (int i = 0; i < ex.dim; ++i)
      if (psi[i] > rep.totals[i] + 1e-9) ok = false;
    j["sandwich_holds"] = ok;
    if (!out.empty())
      atomic_write(out, j.dump(2) + "\n");
    else
      std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*c_morse) {
    FieldRealization f = rehydrate_field(mo_in);
    Pt p = parse_point(mo_p, f.grid.dim);
    Extraction ex = extract_components(f, mo_R);
    CriticalPointSet cps = find_critical_points(f, p, mo_R, &ex);
    MorseBoundReport rep = morse_bound_check(ex, cps);
    nlohmann::json j;
    j["R"] = mo_R;
    j["p"] = std::vector<double>(p.begin(), p.begin() + f.grid.dim);
    j["counts"] = std::vector<long>(cps.counts.begin(), cps.counts.begin() + f.grid.dim);
    j["total"] = cps.total;
    j["newton_failures"] = cps.newton_failures;
    j["degenerate_flagged"] = cps.degenerate_flagged;
    j["morse_bound_holds"] =
        std::vector<bool>(rep.holds.begin(), rep.holds.begin() + f.grid.dim);
    j["morse_equality_ok"] = rep.morse_equality_ok;
    j["components_checked"] = rep.components_checked;
    j["unresolved_components"] = cps.unresolved_components;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& cp : cps.points) {
      nlohmann::json e;
      e["x"] = std::vector<double>(cp.x.begin(), cp.x.begin() + f.grid.dim);
      e["index"] = cp.morse_index;
      e["g"] = cp.g_value;
      e["component"] = cp.component;
      pts.push_back(e);
    }
    j["points"] = pts;
    if (!out.empty())
      atomic_write(out, j.dump(2) + "\n");
    else
      std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*c_kacrice) {
    SpectralModel m = build_model(mf_kr.spec());
    KacRiceEstimate est = kacrice_upper_bound(m, kr_R, kr_mc, seed, kr_directions);
    nlohmann::json j;
    j["model"] = m.name();
    j["k1"] = est.k1;
    j["stderr"] = est.stderr_;
    j["mc_samples"] = est.mc_samples;
    j["R"] = kr_R;
    j["bound_integral"] = est.bound_integral;
    if (!out.empty())
      atomic_write(out, j.dump(2) + "\n");
    else
      std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*c_estimate) {
    std::string started = iso_timestamp();
    ExperimentConfig cfg = parse_config(est_config);
    if (seed != 1) cfg.master_seed = seed;
    if (threads != 1) cfg.threads = threads;
    if (!out.empty()) cfg.out_dir = out;
    EstimateResult res = estimate_betti_density(cfg);
    RunManifest man = emit_results(res, cfg, started);
    std::cout << "results: " << cfg.out_dir << "/results.csv (config "
              << man.config_hash << ")\n";
    for (const auto& row : res.rows)
      std::cout << "  i=" << row.i << " R=" << row.R << " mean=" << fmt_double(row.mean)
                << " ci=[" << fmt_double(row.ci_lo) << "," << fmt_double(row.ci_hi)
                << "] N=" << row.n << "\n";
    return 0;
  }

  if (*c_limit) {
    ScalingProbe probe = kostlan_local_limit_check(parse_int_list(nl_s), kl_R);
    nlohmann::json j;
    j["degrees"] = probe.degrees;
    j["R"] = probe.R;
    j["sup_distance"] = probe.sup_distance;
    j["radial_sup"] = probe.radial_sup;
    if (!out.empty())
      atomic_write(out, j.dump(2) + "\n");
    else
      std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*c_census) {
    ExperimentConfig cfg = parse_config(cen_config);
    if (seed != 1) cfg.master_seed = seed;
    if (threads != 1) cfg.threads = threads;
    if (!out.empty()) cfg.out_dir = out;
    CensusResult res = genus_census(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::string path = (std::filesystem::path(cfg.out_dir) / "census.csv").string();
    atomic_write(path, census_csv(res));
    std::cout << "census: " << path << " (nodal rate " << fmt_double(res.nodal_rate)
              << ")\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
