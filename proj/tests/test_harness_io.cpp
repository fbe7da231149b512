#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nodal/experiment_harness.hpp"
#include "nodal/io.hpp"

using namespace nodal;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "nodal-tests";
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(NODAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("NGRD round-trips bit-exactly") {
  auto model = SpectralModel::bargmann_fock(2);
  auto f = sample_field(model, 12.0, 0.25, 7, SampleMethod::CirculantEmbedding);
  REQUIRE(f.grid.dims[0] == 97);
  fs::path path = temp_dir() / "roundtrip.ngrd";
  write_grid(path.string(), f);
  FieldRealization g = read_grid(path.string());
  CHECK(g.grid.dim == f.grid.dim);
  CHECK(g.grid.dims == f.grid.dims);
  CHECK(g.grid.origin == f.grid.origin);
  CHECK(g.grid.spacing == f.grid.spacing);
  REQUIRE(g.grid.values.size() == f.grid.values.size());
  for (size_t q = 0; q < g.grid.values.size(); ++q)
    CHECK(g.grid.values[q] == f.grid.values[q]);
  CHECK(g.seed == 7);
  CHECK(g.model_id == "bargmann-fock");
}

TEST_CASE("NGRD format errors") {
  fs::path dir = temp_dir();
  write_file(dir / "bad.ngrd", "XXXX garbage");
  CHECK_THROWS_WITH(read_grid((dir / "bad.ngrd").string()),
                    Catch::Matchers::ContainsSubstring("bad magic"));

  std::string v2;
  v2.append("NGRD", 4);
  std::uint32_t ver = 9;
  v2.append(reinterpret_cast<const char*>(&ver), 4);
  write_file(dir / "v9.ngrd", v2);
  CHECK_THROWS_WITH(read_grid((dir / "v9.ngrd").string()),
                    Catch::Matchers::ContainsSubstring("version unsupported"));

  // Valid header claiming more values than the payload holds.
  auto f = sample_field(SpectralModel::bargmann_fock(2), 3.0, 0.25, 1,
                        SampleMethod::CirculantEmbedding);
  fs::path ok = dir / "trunc.ngrd";
  write_grid(ok.string(), f);
  std::string bytes = slurp(ok.string());
  write_file(ok, bytes.substr(0, bytes.size() - 16));
  fs::remove(ok.string() + ".json");
  CHECK_THROWS_WITH(read_grid(ok.string()),
                    Catch::Matchers::ContainsSubstring("truncated payload"));
}

TEST_CASE("rehydration restores the analytic evaluator") {
  auto model = SpectralModel::berry(2);
  auto f = sample_field(model, 4.0, 0.2, 99, SampleMethod::RandomizedSpectral, 128);
  fs::path path = temp_dir() / "rehydrate.ngrd";
  write_grid(path.string(), f);
  FieldRealization g = rehydrate_field(path.string());
  REQUIRE(g.has_analytic_evaluator());
  CHECK(evaluate_with_derivatives(g, Pt{0.3, -0.2, 0.0}).value ==
        evaluate_with_derivatives(f, Pt{0.3, -0.2, 0.0}).value);
}

TEST_CASE("config parsing, defaults, and errors") {
  fs::path dir = temp_dir();
  write_file(dir / "min.cfg", "model = bargmann-fock\ndim = 2\nR = 12\n");
  ExperimentConfig cfg = parse_config((dir / "min.cfg").string());
  CHECK(cfg.effective_replicates() == 200);
  CHECK(cfg.spacing == 0.0);  // resolved to h_max at sampling time
  CHECK(cfg.R_list == std::vector<double>{12.0});

  std::string h1 = config_hash(cfg);
  std::string h2 = config_hash(parse_config((dir / "min.cfg").string()));
  CHECK(h1 == h2);

  write_file(dir / "unk.cfg", "model = bargmann-fock\nbogus = 1\nR = 12\n");
  CHECK_THROWS_WITH(parse_config((dir / "unk.cfg").string()),
                    Catch::Matchers::ContainsSubstring("unknown key"));

  write_file(dir / "rad.cfg", "model = bargmann-fock\ndim = 2\nR = 12\nr_list = 15\n");
  CHECK_THROWS_WITH(parse_config((dir / "rad.cfg").string()),
                    Catch::Matchers::ContainsSubstring("invalid radius ordering"));

  write_file(dir / "dim.cfg", "model = bargmann-fock\ndim = 4\nR = 12\n");
  CHECK_THROWS_WITH(parse_config((dir / "dim.cfg").string()),
                    Catch::Matchers::ContainsSubstring("unsupported dimension"));
}

TEST_CASE("estimate pipeline: determinism, duality, sandwich") {
  ExperimentConfig cfg;
  cfg.model.model = "bargmann-fock";
  cfg.model.dim = 2;
  cfg.R_list = {5.0, 7.0};
  cfg.r_list = {2.0};
  cfg.replicates = 8;
  cfg.master_seed = 314;
  EstimateResult a = estimate_betti_density(cfg);
  EstimateResult b = estimate_betti_density(cfg);
  CHECK(results_csv(a) == results_csv(b));
  CHECK(a.sandwich_pass_rate == 1.0);
  CHECK(a.aborted_replicates == 0);
  for (size_t q = 0; q < a.rows.size(); q += 2) {
    CHECK(a.rows[q].i == 0);
    CHECK(a.rows[q + 1].i == 1);
    CHECK(a.rows[q].mean == a.rows[q + 1].mean);  // duality rows identical
  }
  CHECK(a.c_i_hat[0] > 0.0);
  CHECK(a.cauchy_gaps.size() == 1);
}

TEST_CASE("results CSV schema and manifest round-trip") {
  ExperimentConfig cfg;
  cfg.model.model = "bargmann-fock";
  cfg.R_list = {5.0};
  cfg.replicates = 4;
  cfg.master_seed = 11;
  cfg.out_dir = (temp_dir() / "run1").string();
  EstimateResult res = estimate_betti_density(cfg);

  std::string csv = results_csv(res);
  CHECK(csv.rfind("model,R,i,mean,std,ci_lo,ci_hi,N\n", 0) == 0);

  RunManifest man = emit_results(res, cfg, iso_timestamp());
  CHECK(man.verify());
  fs::path man_path = fs::path(cfg.out_dir) / "manifest.json";
  RunManifest loaded = RunManifest::load(man_path.string());
  CHECK(loaded.config_hash == man.config_hash);
  CHECK(loaded.verify());

  // Emitting the same result twice gives byte-identical CSV files.
  std::string first = slurp((fs::path(cfg.out_dir) / "results.csv").string());
  emit_results(res, cfg, iso_timestamp());
  CHECK(slurp((fs::path(cfg.out_dir) / "results.csv").string()) == first);
}

TEST_CASE("scaling limit probe") {
  ScalingProbe probe = kostlan_local_limit_check({50, 200, 800}, 3.0);
  REQUIRE(probe.radial_sup.size() == 3);
  CHECK(probe.radial_sup[1] <= 0.01);
  CHECK(probe.radial_sup[0] > probe.radial_sup[1]);
  CHECK(probe.radial_sup[1] > probe.radial_sup[2]);
  CHECK(probe.sup_distance[0] > probe.sup_distance[2]);
  // Zero lag contributes zero for every degree.
  CHECK(probe.sup_distance[2] < probe.sup_distance[0] + 1e-12);
}

TEST_CASE("kostlan betti convergence smoke") {
  ScalingProbe probe =
      kostlan_betti_convergence({30}, 4.0, 1.0, {0.02, 0.02, 0.0}, 2, 5);
  REQUIRE(probe.exceedance.size() == 1);
  CHECK(probe.exceedance[0][0] >= 0.0);
  CHECK(probe.exceedance[0][0] <= 1.0);
}

TEST_CASE("genus census smoke in three dimensions") {
  ExperimentConfig cfg;
  cfg.model.model = "bargmann-fock";
  cfg.model.dim = 3;
  cfg.R_list = {6.0};
  cfg.replicates = 10;
  cfg.master_seed = 21;
  CensusResult res = genus_census(cfg);
  CHECK(res.n == 10);
  double sum = 0.0;
  for (const auto& row : res.rows) sum += row.rate;
  CHECK(sum == Catch::Approx(res.nodal_rate));
  // The census partitions the components counted by beta_0.
  bool has_sphere = false;
  for (const auto& row : res.rows)
    if (row.cls == "genus-0" && row.rate > 0.0) has_sphere = true;
  CHECK(has_sphere);
}

TEST_CASE("cli subcommands and exit codes") {
  fs::path dir = temp_dir() / "cli";
  fs::create_directories(dir);
  fs::path grid = dir / "g.ngrd";

  CHECK(run_cli("--seed 7 sample --model bargmann-fock --dim 2 --half-width 7 --out " +
                grid.string()) == 0);
  std::string bytes1 = slurp(grid.string());
  CHECK(run_cli("--seed 7 sample --model bargmann-fock --dim 2 --half-width 7 --out " +
                grid.string()) == 0);
  CHECK(slurp(grid.string()) == bytes1);  // rerun is byte-identical

  fs::path rep = dir / "report.json";
  CHECK(run_cli("betti --in " + grid.string() + " --radius 6 --r-list 2 --out " +
                rep.string()) == 0);
  std::string rep1 = slurp(rep.string());
  CHECK(rep1.find("\"totals\"") != std::string::npos);
  CHECK(run_cli("betti --in " + grid.string() + " --radius 6 --r-list 2 --out " +
                rep.string()) == 0);
  CHECK(slurp(rep.string()) == rep1);

  CHECK(run_cli("sandwich --in " + grid.string() + " --radius 6 --r 2") == 0);
  CHECK(run_cli("kostlan-limit --n-list 50,100 --radius 2") == 0);

  // Exit codes: 2 config, 3 numeric, 4 i/o.
  CHECK(run_cli("sample --model nosuch --out " + (dir / "x.ngrd").string()) == 2);
  CHECK(run_cli("sample --model bargmann-fock --spacing 5 --out " +
                (dir / "x.ngrd").string()) == 3);
  CHECK(run_cli("betti --in " + (dir / "missing.ngrd").string() + " --radius 6") == 4);
}
