#ifndef NODAL_IO_HPP
#define NODAL_IO_HPP

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nodal/common.hpp"
#include "nodal/experiment_harness.hpp"
#include "nodal/field_sampler.hpp"
#include "nodal/nodal_topology.hpp"

namespace nodal {

inline constexpr const char* kToolVersion = "nodal-lab 1.0.0";

// 17 significant digits: enough to round-trip any double.
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return hex64(h);
}

// Write to a temp file in the same directory, then rename into place.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("rename failed: " + path);
}

// ---------------------------------------------------------------------------
// NGRD binary grid format.
// magic "NGRD", u32 version=1, u8 d, u64 dims[d], f64 origin[d], f64 spacing,
// f64 values row-major, all little-endian.

namespace detail {

template <typename T>
void put(std::string& s, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  s.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& s, size_t& off) {
  if (off + sizeof(T) > s.size()) throw IoError("truncated payload");
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

inline void write_grid(const std::string& path, const FieldRealization& f) {
  const Grid& g = f.grid;
  std::string s;
  s.reserve(64 + g.values.size() * 8);
  s.append("NGRD", 4);
  detail::put<std::uint32_t>(s, 1);
  detail::put<std::uint8_t>(s, static_cast<std::uint8_t>(g.dim));
  for (int k = 0; k < g.dim; ++k)
    detail::put<std::uint64_t>(s, static_cast<std::uint64_t>(g.dims[k]));
  for (int k = 0; k < g.dim; ++k) detail::put<double>(s, g.origin[k]);
  detail::put<double>(s, g.spacing);
  for (double v : g.values) detail::put<double>(s, v);
  atomic_write(path, s);

  nlohmann::json side;
  side["model"] = f.model_id;
  side["seed"] = f.seed;
  side["method"] = method_name(f.method);
  if (f.model) {
    side["dim"] = f.model->dimension();
    if (f.model->kind() == ModelKind::BandLimited) side["alpha"] = f.model->alpha();
    if (f.model->kind() == ModelKind::Kostlan) side["degree_n"] = f.model->degree();
  }
  if (f.spectral) side["spectral_terms"] = f.spectral->freq.size();
  side["half_width"] = -g.origin[0];
  side["spacing"] = g.spacing;
  atomic_write(path + ".json", side.dump(2) + "\n");
}

// Reads the grid payload; the sidecar, when present, restores enough metadata
// to regenerate the analytic evaluator from the stored seed.
inline FieldRealization read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.size() < 4 || s.compare(0, 4, "NGRD") != 0) throw IoError("bad magic");
  size_t off = 4;
  std::uint32_t version = detail::take<std::uint32_t>(s, off);
  if (version != 1) throw IoError("version unsupported");
  int d = detail::take<std::uint8_t>(s, off);
  if (d != 2 && d != 3) throw IoError("bad magic");

  FieldRealization f;
  f.grid.dim = d;
  std::int64_t count = 1;
  for (int k = 0; k < d; ++k) {
    f.grid.dims[k] = static_cast<std::int64_t>(detail::take<std::uint64_t>(s, off));
    count *= f.grid.dims[k];
  }
  for (int k = 0; k < d; ++k) f.grid.origin[k] = detail::take<double>(s, off);
  f.grid.spacing = detail::take<double>(s, off);
  if (off + static_cast<size_t>(count) * 8 > s.size()) throw IoError("truncated payload");
  f.grid.values.resize(count);
  std::memcpy(f.grid.values.data(), s.data() + off, static_cast<size_t>(count) * 8);

  std::ifstream sidecar(path + ".json");
  if (sidecar) {
    nlohmann::json side = nlohmann::json::parse(sidecar);
    f.model_id = side.value("model", "");
    f.seed = side.value("seed", std::uint64_t{0});
    std::string m = side.value("method", "");
    if (m == "spectral") f.method = SampleMethod::RandomizedSpectral;
    if (m == "kostlan-direct") f.method = SampleMethod::KostlanDirect;
  }
  return f;
}

// Re-runs the sampler from the sidecar metadata and attaches the analytic
// evaluator; the regenerated node values must agree with the stored grid.
inline FieldRealization rehydrate_field(const std::string& path) {
  FieldRealization stored = read_grid(path);
  std::ifstream sidecar(path + ".json");
  if (!sidecar) throw IoError("sidecar missing: " + path + ".json");
  nlohmann::json side = nlohmann::json::parse(sidecar);

  double hw = side.at("half_width").get<double>();
  double h = side.at("spacing").get<double>();
  std::uint64_t seed = side.at("seed").get<std::uint64_t>();
  std::string model_name = side.at("model").get<std::string>();
  std::string method = side.at("method").get<std::string>();

  FieldRealization fresh;
  if (model_name == "kostlan") {
    fresh = sample_kostlan(side.at("degree_n").get<int>(), hw, h, seed);
  } else {
    ModelSpec ms;
    ms.model = model_name;
    ms.dim = side.at("dim").get<int>();
    ms.alpha = side.value("alpha", 0.0);
    SpectralModel model = build_model(ms);
    fresh = sample_field(model, hw, h, seed, parse_method(method, model),
                         side.value("spectral_terms", 4096));
  }
  if (fresh.grid.values.size() != stored.grid.values.size())
    throw IoError("sidecar inconsistent with grid payload");
  for (size_t q = 0; q < fresh.grid.values.size(); ++q)
    if (fresh.grid.values[q] != stored.grid.values[q])
      throw IoError("sidecar inconsistent with grid payload");
  return fresh;
}

// ---------------------------------------------------------------------------
// Flat key=value config files.

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& val) {
  if (key == "model") cfg.model.model = val;
  else if (key == "dim") cfg.model.dim = std::stoi(val);
  else if (key == "alpha") cfg.model.alpha = std::stod(val);
  else if (key == "degree_n") cfg.model.degree_n = std::stoi(val);
  else if (key == "custom_csv") cfg.model.custom_csv = val;
  else if (key == "R" || key == "R_list") cfg.R_list = parse_double_list(val);
  else if (key == "r_list") cfg.r_list = parse_double_list(val);
  else if (key == "N") cfg.replicates = std::stoi(val);
  else if (key == "seed") cfg.master_seed = std::stoull(val);
  else if (key == "spacing") cfg.spacing = std::stod(val);
  else if (key == "method") cfg.method = val;
  else if (key == "spectral_terms") cfg.spectral_terms = std::stoi(val);
  else if (key == "threads") cfg.threads = std::stoi(val);
  else if (key == "out") cfg.out_dir = val;
  else throw ConfigError("unknown key: " + key);
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed line " + std::to_string(lineno) + " in " + path);
    apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

// Content-addressed hash over the canonical field serialization.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  ss << "model=" << cfg.model.model << "\ndim=" << cfg.model.dim
     << "\nalpha=" << fmt_double(cfg.model.alpha) << "\ndegree_n=" << cfg.model.degree_n
     << "\ncustom_csv=" << cfg.model.custom_csv << "\nR_list=";
  for (double r : cfg.R_list) ss << fmt_double(r) << ",";
  ss << "\nr_list=";
  for (double r : cfg.r_list) ss << fmt_double(r) << ",";
  ss << "\nN=" << cfg.effective_replicates() << "\nseed=" << cfg.master_seed
     << "\nspacing=" << fmt_double(cfg.spacing) << "\nmethod=" << cfg.method
     << "\nspectral_terms=" << cfg.spectral_terms << "\n";
  std::string s = ss.str();
  return hex64(fnv1a64(s.data(), s.size()));
}

// ---------------------------------------------------------------------------
// Result emission and run manifests.

struct RunManifest {
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string version = kToolVersion;
  std::string started_at, finished_at;
  std::vector<std::uint64_t> replicate_seeds;
  std::map<std::string, std::string> output_digests;  // path -> fnv1a64 hex

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["master_seed"] = master_seed;
    j["version"] = version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["replicate_seeds"] = replicate_seeds;
    j["output_digests"] = output_digests;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.replicate_seeds = j.at("replicate_seeds").get<std::vector<std::uint64_t>>();
    m.output_digests =
        j.at("output_digests").get<std::map<std::string, std::string>>();
    return m;
  }

  void save(const std::string& path) const { atomic_write(path, to_json().dump(2) + "\n"); }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    return from_json(nlohmann::json::parse(in));
  }

  // Round-trip validation: every recorded digest must match a re-hash.
  bool verify() const {
    for (const auto& [path, digest] : output_digests)
      if (file_digest(path) != digest) return false;
    return true;
  }
};

inline std::string results_csv(const EstimateResult& res) {
  std::ostringstream ss;
  ss << "model,R,i,mean,std,ci_lo,ci_hi,N\n";
  for (const auto& row : res.rows)
    ss << res.model_name << "," << fmt_double(row.R) << "," << row.i << ","
       << fmt_double(row.mean) << "," << fmt_double(row.stddev) << ","
       << fmt_double(row.ci_lo) << "," << fmt_double(row.ci_hi) << "," << row.n << "\n";
  return ss.str();
}

inline std::string census_csv(const CensusResult& res) {
  std::ostringstream ss;
  ss << "class,R,rate,ci_lo,ci_hi,count,N\n";
  for (const auto& row : res.rows)
    ss << row.cls << "," << fmt_double(res.R) << "," << fmt_double(row.rate) << ","
       << fmt_double(row.ci_lo) << "," << fmt_double(row.ci_hi) << ","
       << row.total_count << "," << res.n << "\n";
  return ss.str();
}

inline std::string iso_timestamp() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Writes results CSV + manifest JSON into out_dir; digests recorded after write.
inline RunManifest emit_results(const EstimateResult& res, const ExperimentConfig& cfg,
                                const std::string& started_at) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::string csv_path = (fs::path(cfg.out_dir) / "results.csv").string();
  atomic_write(csv_path, results_csv(res));

  RunManifest man;
  man.config_hash = config_hash(cfg);
  man.master_seed = cfg.master_seed;
  man.started_at = started_at;
  man.finished_at = iso_timestamp();
  man.replicate_seeds = res.replicate_seeds;
  man.output_digests[csv_path] = file_digest(csv_path);
  man.save((fs::path(cfg.out_dir) / "manifest.json").string());
  return man;
}

// ASCII OFF mesh export, one file per closed component (d=3 only).
inline void export_meshes_off(const Extraction& ex, const std::string& dir) {
  if (ex.dim != 3) throw ConfigError("mesh export is available for d=3 only");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& comp : ex.components) {
    if (!comp.closed) continue;
    std::ostringstream ss;
    ss << "OFF\n" << comp.vertices.size() << " " << comp.triangles.size() << " 0\n";
    for (const auto& v : comp.vertices)
      ss << fmt_double(v[0]) << " " << fmt_double(v[1]) << " " << fmt_double(v[2]) << "\n";
    for (const auto& t : comp.triangles)
      ss << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    atomic_write((fs::path(dir) / ("component-" + std::to_string(comp.id) + ".off")).string(),
                 ss.str());
  }
}

inline nlohmann::json betti_report_json(const BettiReport& rep, int dim) {
  nlohmann::json j;
  j["R"] = rep.radius_R;
  j["totals"] = std::vector<long>(rep.totals.begin(), rep.totals.begin() + dim);
  j["nodal_count"] = rep.nodal_count;
  j["censored"] = rep.censored_count;
  j["census"] = rep.class_census;
  nlohmann::json psi = nlohmann::json::object();
  for (const auto& pv : rep.psi)
    psi[fmt_double(pv.r)] = std::vector<double>(pv.psi.begin(), pv.psi.begin() + dim);
  j["psi"] = psi;
  j["ball_volume"] = rep.ball_volume;
  return j;
}

}  // namespace nodal

#endif  // NODAL_IO_HPP
