///
/// \file report.hpp
///
/// Report emission: the versioned JSON report, iteration CSV for solver
/// traces, and a dependency-free SVG convergence plot (residual vs iteration
/// on a log scale). report.json is bit-reproducible for a fixed
/// (config, seed) pair; wall-clock timing goes to run_info.json instead.
///
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "chowbal/solvers.hpp"
#include "chowbal/version.hpp"

namespace chowbal {

inline nlohmann::json matrix_to_json(const CMat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json vector_to_json(const RVec& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

/// A floating result together with the tolerance it was checked against.
inline nlohmann::json checked_value(double value, double tolerance, bool pass) {
  return {{"value", value}, {"tolerance", tolerance}, {"pass", pass}};
}

inline nlohmann::json trace_to_json(const SolveTrace& trace) {
  return {{"status", to_string(trace.status)},
          {"message", trace.message},
          {"iterations", trace.records.size()},
          {"final_residual", trace.final_residual()}};
}

inline void write_trace_csv(const std::filesystem::path& path, const SolveTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,residual,value,step\n";
  out << std::setprecision(17);
  for (const IterationRecord& r : trace.records)
    out << r.iteration << "," << r.residual << "," << r.value << "," << r.step << "\n";
}

/// Residual vs iteration, log-scale y; one polyline per trace.
inline void write_convergence_svg(const std::filesystem::path& path,
                                  const std::vector<std::pair<std::string, const SolveTrace*>>& traces) {
  const int w = 640, h = 400, ml = 70, mr = 20, mt = 30, mb = 45;
  double lo = 1e300, hi = -1e300;
  std::size_t maxit = 1;
  for (const auto& [name, tr] : traces)
    for (const IterationRecord& r : tr->records) {
      const double v = std::max(r.residual, 1e-300);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      maxit = std::max(maxit, static_cast<std::size_t>(r.iteration) + 1);
    }
  if (lo > hi) {
    lo = 1e-10;
    hi = 1.0;
  }
  const double llo = std::floor(std::log10(lo)) - 0.2, lhi = std::ceil(std::log10(hi)) + 0.2;
  auto xmap = [&](double it) { return ml + (w - ml - mr) * it / std::max<double>(1.0, maxit - 1); };
  auto ymap = [&](double v) {
    const double t = (std::log10(std::max(v, 1e-300)) - llo) / (lhi - llo);
    return h - mb - (h - mt - mb) * t;
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  for (int e = static_cast<int>(std::ceil(llo)); e <= static_cast<int>(std::floor(lhi)); ++e) {
    const double y = ymap(std::pow(10.0, e));
    out << "<line x1='" << ml - 4 << "' y1='" << y << "' x2='" << w - mr << "' y2='" << y
        << "' stroke='#dddddd'/>\n";
    out << "<text x='" << ml - 8 << "' y='" << y + 4
        << "' text-anchor='end' font-size='11'>1e" << e << "</text>\n";
  }
  out << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 10
      << "' text-anchor='middle' font-size='12'>iteration</text>\n";
  out << "<text x='14' y='" << (mt + h - mb) / 2
      << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 "
      << (mt + h - mb) / 2 << ")'>residual</text>\n";

  const char* colors[] = {"#1f6fb2", "#b23a1f", "#2e8b57", "#8b2e84"};
  int ci = 0;
  for (const auto& [name, tr] : traces) {
    if (tr->records.empty()) continue;
    out << "<polyline fill='none' stroke='" << colors[ci % 4] << "' stroke-width='1.5' points='";
    for (const IterationRecord& r : tr->records)
      out << xmap(r.iteration) << "," << ymap(r.residual) << " ";
    out << "'/>\n";
    out << "<text x='" << w - mr - 5 << "' y='" << mt + 14 * (ci + 1)
        << "' text-anchor='end' font-size='11' fill='" << colors[ci % 4] << "'>" << name
        << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

struct RunReport {
  nlohmann::json body;             // deterministic report content
  double elapsed_seconds = 0.0;    // recorded separately in run_info.json
  int exit_code = 0;
  std::filesystem::path report_path;
};

inline void write_report_files(RunReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string());
  report.report_path = out_dir / "report.json";
  {
    std::ofstream out(report.report_path);
    if (!out) throw std::runtime_error("cannot write " + report.report_path.string());
    out << report.body.dump(1) << "\n";
  }
  {
    std::ofstream out(out_dir / "run_info.json");
    out << nlohmann::json({{"elapsed_seconds", report.elapsed_seconds},
                           {"library_version", CHOWBAL_VERSION}})
               .dump(1)
        << "\n";
  }
}

}  // namespace chowbal
