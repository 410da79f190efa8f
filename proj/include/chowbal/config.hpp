///
/// \file config.hpp
///
/// Experiment configuration: strict JSON parsing of the variety, torus,
/// grid and solver sections. Unknown fields are errors; a silent typo in a
/// verification config would invalidate the claim being checked.
///
#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "chowbal/embedding.hpp"
#include "chowbal/solvers.hpp"

namespace chowbal {

using json = nlohmann::json;

enum class Task { volume_check, moment, optimal_weight, balance, verify };
enum class BalanceMode { absolute, relative, sigma };
enum class VerifyTarget { equivalence, character, t_sigma, orbit_constancy };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::volume_check: return "volume-check";
    case Task::moment: return "moment";
    case Task::optimal_weight: return "optimal-weight";
    case Task::balance: return "balance";
    case Task::verify: return "verify";
  }
  return "unknown";
}

inline const char* to_string(BalanceMode m) {
  switch (m) {
    case BalanceMode::absolute: return "absolute";
    case BalanceMode::relative: return "relative";
    case BalanceMode::sigma: return "sigma";
  }
  return "unknown";
}

inline const char* to_string(VerifyTarget t) {
  switch (t) {
    case VerifyTarget::equivalence: return "equivalence";
    case VerifyTarget::character: return "character";
    case VerifyTarget::t_sigma: return "t-sigma";
    case VerifyTarget::orbit_constancy: return "orbit-constancy";
  }
  return "unknown";
}

struct GridSpec {
  int radial_nodes = 48;
  int angular_nodes = 16;
  double remap = 1.0;

  json to_json() const {
    return {{"radial_nodes", radial_nodes}, {"angular_nodes", angular_nodes}, {"remap", remap}};
  }
};

struct ExperimentConfig {
  Task task = Task::volume_check;
  BalanceMode mode = BalanceMode::sigma;
  VerifyTarget target = VerifyTarget::equivalence;

  json variety_json;                       // inline variety description
  std::optional<json> torus_json;          // torus section (possibly from the variety file)
  GridSpec grid;
  SolverOptions solver;
  std::optional<json> start_g_json;        // optional start matrix
  double volume_tolerance = 1e-3;

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 12345;
  bool deterministic = true;
  int threads = 1;
  bool use_cache = true;

  json echo;  // resolved configuration as recorded in reports
};

namespace config_detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw std::invalid_argument(where + ": unknown field \"" + key + "\"");
}

inline CVec parse_complex_vector(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw std::invalid_argument(where + ": expected an array");
  CVec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& c = arr[i];
    if (c.is_number()) {
      v[i] = Complex(c.get<double>(), 0.0);
    } else if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
      v[i] = Complex(c[0].get<double>(), c[1].get<double>());
    } else {
      throw std::invalid_argument(where + ": entries must be numbers or [re, im] pairs");
    }
  }
  return v;
}

inline CMat parse_complex_matrix(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty()) throw std::invalid_argument(where + ": expected rows");
  const std::size_t n = rows.size();
  CMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    CVec row = parse_complex_vector(rows[i], where);
    if (static_cast<std::size_t>(row.size()) != n)
      throw std::invalid_argument(where + ": matrix must be square");
    m.row(i) = row.transpose();
  }
  return m;
}

}  // namespace config_detail

/// Build the variety from its description object. Exact field names:
/// kind, polytope_vertices, coefficients, degree, points (+ optional torus).
inline Variety build_variety(const json& spec) {
  config_detail::check_keys(spec, {"kind", "polytope_vertices", "coefficients", "degree", "points",
                                   "torus"},
                            "variety");
  if (!spec.contains("kind")) throw std::invalid_argument("variety: missing \"kind\"");
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "toric") {
    if (!spec.contains("polytope_vertices"))
      throw std::invalid_argument("variety: toric requires \"polytope_vertices\"");
    if (spec.contains("points"))
      throw std::invalid_argument("variety: \"points\" is not a toric field");
    std::vector<std::vector<double>> verts;
    for (const json& v : spec.at("polytope_vertices")) verts.push_back(v.get<std::vector<double>>());
    const int n = static_cast<int>(verts.front().size());
    LatticePolytope poly = LatticePolytope::from_vertices(n, verts);
    RVec coeffs;
    if (spec.contains("coefficients")) {
      std::vector<double> c = spec.at("coefficients").get<std::vector<double>>();
      coeffs = Eigen::Map<RVec>(c.data(), c.size());
    }
    if (!spec.contains("degree")) throw std::invalid_argument("variety: toric requires \"degree\"");
    return Variety{MonomialEmbedding::from_polytope(poly, coeffs, spec.at("degree").get<long long>())};
  }
  if (kind == "points") {
    if (!spec.contains("points")) throw std::invalid_argument("variety: points requires \"points\"");
    for (const char* k : {"polytope_vertices", "coefficients", "degree"})
      if (spec.contains(k))
        throw std::invalid_argument(std::string("variety: \"") + k + "\" is not a points field");
    std::vector<CVec> pts;
    for (const json& p : spec.at("points"))
      pts.push_back(config_detail::parse_complex_vector(p, "variety.points"));
    return Variety{PointConfiguration::from_points(std::move(pts))};
  }
  throw std::invalid_argument("variety: kind must be \"toric\" or \"points\"");
}

/// Torus from its description: either an explicit weight per basis vector or
/// an r x n integer matrix applied to the lattice exponents of a toric model.
inline TorusData build_torus_from_config(const json& spec, const Variety& variety) {
  config_detail::check_keys(spec, {"torus_rank", "weight_matrix", "weights"}, "torus");
  if (spec.contains("weights")) {
    if (spec.contains("weight_matrix"))
      throw std::invalid_argument("torus: give \"weights\" or \"weight_matrix\", not both");
    std::vector<std::vector<long long>> rows;
    for (const json& w : spec.at("weights")) rows.push_back(w.get<std::vector<long long>>());
    if (static_cast<int>(rows.size()) != variety.dim_v())
      throw std::invalid_argument("torus: weights list must have one entry per basis vector");
    TorusData td = build_torus(rows);
    if (spec.contains("torus_rank") && spec.at("torus_rank").get<int>() != td.rank)
      throw std::invalid_argument("torus: torus_rank does not match the weight vectors");
    return td;
  }
  if (!spec.contains("weight_matrix"))
    throw std::invalid_argument("torus: need \"weights\" or \"weight_matrix\"");
  if (variety.is_points())
    throw std::invalid_argument("torus: weight_matrix applies to toric varieties only");
  std::vector<std::vector<long long>> a;
  for (const json& row : spec.at("weight_matrix")) a.push_back(row.get<std::vector<long long>>());
  const int r = static_cast<int>(a.size());
  const MonomialEmbedding& emb = variety.toric();
  for (const auto& row : a)
    if (static_cast<int>(row.size()) != emb.n())
      throw std::invalid_argument("torus: weight_matrix rows must have length n");
  if (spec.contains("torus_rank") && spec.at("torus_rank").get<int>() != r)
    throw std::invalid_argument("torus: torus_rank does not match the weight_matrix");
  std::vector<std::vector<long long>> rows(emb.dim_v(), std::vector<long long>(r, 0));
  for (int i = 0; i < emb.dim_v(); ++i)
    for (int k = 0; k < r; ++k)
      for (int j = 0; j < emb.n(); ++j) rows[i][k] += a[k][j] * emb.exponents(i, j);
  return build_torus(rows);
}

/// Parse the experiment configuration. `task_from_cli` is the subcommand; a
/// "task" field in the file must agree with it when present.
inline ExperimentConfig parse_config(const json& body, const std::string& task_from_cli,
                                     const std::string& mode_or_target,
                                     const std::filesystem::path& config_dir) {
  config_detail::check_keys(
      body,
      {"task", "mode", "target", "variety", "variety_file", "torus", "grid", "solver", "start_g",
       "volume_tolerance", "output_dir", "seed", "deterministic", "threads", "cache"},
      "config");

  ExperimentConfig cfg;

  if (body.contains("task") && body.at("task").get<std::string>() != task_from_cli)
    throw std::invalid_argument("config: task \"" + body.at("task").get<std::string>() +
                                "\" does not match the subcommand \"" + task_from_cli + "\"");
  const std::map<std::string, Task> tasks = {{"volume-check", Task::volume_check},
                                             {"check-volume", Task::volume_check},
                                             {"moment", Task::moment},
                                             {"optimal-weight", Task::optimal_weight},
                                             {"balance", Task::balance},
                                             {"verify", Task::verify}};
  if (!tasks.count(task_from_cli)) throw std::invalid_argument("unknown task " + task_from_cli);
  cfg.task = tasks.at(task_from_cli);

  if (cfg.task == Task::balance) {
    const std::string m =
        !mode_or_target.empty()
            ? mode_or_target
            : (body.contains("mode") ? body.at("mode").get<std::string>() : std::string());
    if (m == "absolute") cfg.mode = BalanceMode::absolute;
    else if (m == "relative") cfg.mode = BalanceMode::relative;
    else if (m == "sigma") cfg.mode = BalanceMode::sigma;
    else throw std::invalid_argument("balance: mode must be absolute, relative or sigma");
    if (body.contains("mode") && body.at("mode").get<std::string>() != m &&
        !mode_or_target.empty())
      throw std::invalid_argument("config: mode does not match the --mode flag");
  }
  if (cfg.task == Task::verify) {
    const std::string t =
        !mode_or_target.empty()
            ? mode_or_target
            : (body.contains("target") ? body.at("target").get<std::string>() : std::string());
    if (t == "equivalence") cfg.target = VerifyTarget::equivalence;
    else if (t == "character") cfg.target = VerifyTarget::character;
    else if (t == "t-sigma") cfg.target = VerifyTarget::t_sigma;
    else if (t == "orbit-constancy") cfg.target = VerifyTarget::orbit_constancy;
    else
      throw std::invalid_argument(
          "verify: target must be equivalence, character, t-sigma or orbit-constancy");
  }

  if (body.contains("variety") == body.contains("variety_file"))
    throw std::invalid_argument("config: exactly one of \"variety\", \"variety_file\" is required");
  if (body.contains("variety")) {
    cfg.variety_json = body.at("variety");
  } else {
    const std::filesystem::path p = config_dir / body.at("variety_file").get<std::string>();
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("config: cannot open variety file " + p.string());
    cfg.variety_json = json::parse(in);
  }
  if (body.contains("torus")) cfg.torus_json = body.at("torus");
  else if (cfg.variety_json.contains("torus")) cfg.torus_json = cfg.variety_json.at("torus");

  if (body.contains("grid")) {
    const json& g = body.at("grid");
    config_detail::check_keys(g, {"radial_nodes", "angular_nodes", "remap"}, "grid");
    if (g.contains("radial_nodes")) cfg.grid.radial_nodes = g.at("radial_nodes").get<int>();
    if (g.contains("angular_nodes")) cfg.grid.angular_nodes = g.at("angular_nodes").get<int>();
    if (g.contains("remap")) cfg.grid.remap = g.at("remap").get<double>();
  }
  if (body.contains("solver")) {
    const json& s = body.at("solver");
    config_detail::check_keys(
        s, {"max_iterations", "tolerance", "damping", "line_search", "grid_schedule"}, "solver");
    if (s.contains("max_iterations")) cfg.solver.max_iterations = s.at("max_iterations").get<int>();
    if (s.contains("tolerance")) cfg.solver.tolerance = s.at("tolerance").get<double>();
    if (s.contains("damping")) cfg.solver.damping = s.at("damping").get<double>();
    if (s.contains("line_search")) cfg.solver.line_search = s.at("line_search").get<bool>();
    if (s.contains("grid_schedule"))
      for (const json& st : s.at("grid_schedule"))
        cfg.solver.grid_schedule.emplace_back(st.at(0).get<int>(), st.at(1).get<int>());
  }
  if (body.contains("start_g")) cfg.start_g_json = body.at("start_g");
  if (body.contains("volume_tolerance"))
    cfg.volume_tolerance = body.at("volume_tolerance").get<double>();
  if (body.contains("output_dir")) cfg.output_dir = body.at("output_dir").get<std::string>();
  if (body.contains("seed")) cfg.seed = body.at("seed").get<std::uint64_t>();
  if (body.contains("deterministic")) cfg.deterministic = body.at("deterministic").get<bool>();
  if (body.contains("threads")) cfg.threads = body.at("threads").get<int>();
  if (body.contains("cache")) cfg.use_cache = body.at("cache").get<bool>();
  cfg.solver.threads = cfg.threads;  // reduction order is fixed at any thread count

  cfg.echo = body;
  cfg.echo["task"] = task_from_cli;
  if (cfg.task == Task::balance) cfg.echo["mode"] = to_string(cfg.mode);
  if (cfg.task == Task::verify) cfg.echo["target"] = to_string(cfg.target);
  return cfg;
}

inline OrbitPoint start_point(const ExperimentConfig& cfg, int dim) {
  if (!cfg.start_g_json) return OrbitPoint::identity(dim);
  CMat g = config_detail::parse_complex_matrix(*cfg.start_g_json, "start_g");
  if (g.rows() != dim) throw std::invalid_argument("start_g: dimension does not match the variety");
  if (std::abs(g.determinant()) < 1e-12) throw std::invalid_argument("start_g: matrix is singular");
  return OrbitPoint{g};
}

}  // namespace chowbal
