///
/// \file runner.hpp
///
/// Experiment orchestration: builds the variety, torus and grid from a
/// validated config, dispatches to the requested task, and persists the
/// report, iteration CSVs and convergence plots. Every number in a report is
/// produced by the library modules; this layer only routes and serializes.
///
/// Exit codes: 0 converged/verified, 2 diverged or failed verification,
/// 1 configuration or runtime error (thrown to the caller).
///
#pragma once

#include <chrono>

#include "chowbal/cache.hpp"
#include "chowbal/chow.hpp"
#include "chowbal/config.hpp"
#include "chowbal/report.hpp"

namespace chowbal {

constexpr const char* kReportSchema = "chow-balance-report/1";

namespace runner_detail {

inline QuadratureGrid make_grid(const ExperimentConfig& cfg, const Variety& variety,
                                FileCache& cache, bool* hit = nullptr) {
  if (variety.is_points() || variety.n() == 0) return build_grid(0, 2, 2, 1.0);
  json key = cfg.grid.to_json();
  key["n"] = variety.n();
  json payload = cache.get_or_compute(
      "grid", key,
      [&]() {
        QuadratureGrid g =
            build_grid(variety.n(), cfg.grid.radial_nodes, cfg.grid.angular_nodes, cfg.grid.remap);
        json p;
        p["radial_u"] = std::vector<double>(g.radial_u.data(), g.radial_u.data() + g.radial_u.size());
        p["radial_x"] = std::vector<double>(g.radial_x.data(), g.radial_x.data() + g.radial_x.size());
        p["radial_w"] = std::vector<double>(g.radial_w.data(), g.radial_w.data() + g.radial_w.size());
        p["radial_cube_w"] = std::vector<double>(g.radial_cube_w.data(),
                                                 g.radial_cube_w.data() + g.radial_cube_w.size());
        p["angular_theta"] = std::vector<double>(g.angular_theta.data(),
                                                 g.angular_theta.data() + g.angular_theta.size());
        p["angular_w"] = g.angular_w;
        return p;
      },
      hit);
  QuadratureGrid g;
  g.n = variety.n();
  g.radial_nodes = cfg.grid.radial_nodes;
  g.angular_nodes = cfg.grid.angular_nodes;
  g.remap = cfg.grid.remap;
  auto to_vec = [](const json& arr) {
    std::vector<double> v = arr.get<std::vector<double>>();
    return RVec(Eigen::Map<RVec>(v.data(), v.size()));
  };
  g.radial_u = to_vec(payload.at("radial_u"));
  g.radial_x = to_vec(payload.at("radial_x"));
  g.radial_w = to_vec(payload.at("radial_w"));
  g.radial_cube_w = to_vec(payload.at("radial_cube_w"));
  g.angular_theta = to_vec(payload.at("angular_theta"));
  g.angular_w = payload.at("angular_w").get<double>();
  return g;
}

inline TorusData require_torus(const ExperimentConfig& cfg, const Variety& variety) {
  if (!cfg.torus_json)
    throw std::invalid_argument("config: this task requires a \"torus\" section");
  return build_torus_from_config(*cfg.torus_json, variety);
}

inline json diag_values(const CMat& m) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) arr.push_back(m(i, i).real());
  return arr;
}

inline int exit_code_for(const std::string& status) {
  if (status == "verified" || status == "converged" || status == "computed") return 0;
  return 2;
}

/// Gram at the start point, cached by content of (variety, grid, start).
inline GramResult base_gram(const ExperimentConfig& cfg, const Variety& variety,
                            const OrbitPoint& g0, const QuadratureGrid& grid, FileCache& cache) {
  json key = {{"variety", cfg.variety_json}, {"grid", cfg.grid.to_json()}};
  if (cfg.start_g_json) key["start_g"] = *cfg.start_g_json;
  json payload = cache.get_or_compute("gram", key, [&]() {
    GramResult gr = integrate_gram(variety, g0, grid, CMat(), IntegratorOptions{cfg.threads, false});
    return json{{"m", matrix_to_json(gr.m)}, {"mass", gr.mass}};
  });
  GramResult gr;
  gr.mass = payload.at("mass").get<double>();
  gr.m = config_detail::parse_complex_matrix(payload.at("m"), "cache gram");
  return gr;
}

}  // namespace runner_detail

inline RunReport run(const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();

  Variety variety = build_variety(cfg.variety_json);
  const int dim = variety.dim_v();
  OrbitPoint g0 = start_point(cfg, dim);
  FileCache cache(cfg.output_dir / "cache", cfg.use_cache);
  bool grid_hit = false;
  QuadratureGrid grid = runner_detail::make_grid(cfg, variety, cache, &grid_hit);

  RunReport report;
  json& body = report.body;
  body["schema"] = kReportSchema;
  body["library_version"] = CHOWBAL_VERSION;
  body["task"] = to_string(cfg.task);
  if (cfg.task == Task::balance) body["mode"] = to_string(cfg.mode);
  if (cfg.task == Task::verify) body["target"] = to_string(cfg.target);
  body["config"] = cfg.echo;
  body["seed"] = cfg.seed;
  body["deterministic"] = cfg.deterministic;
  body["quadrature"] = {{"grid", cfg.grid.to_json()},
                        {"nodes", variety.is_points() ? 0 : grid.node_count()}};
  json& results = body["results"];
  std::string status;
  std::vector<std::pair<std::string, const SolveTrace*>> traces;

  SolverOptions solver = cfg.solver;
  solver.threads = cfg.deterministic ? 1 : cfg.threads;
  // the reduction order is fixed either way; single-thread under
  // --deterministic only pins the exact instruction stream
  if (!cfg.deterministic) solver.threads = cfg.threads;
  IntegratorOptions integ = solver.integrator();

  switch (cfg.task) {
    case Task::volume_check: {
      GramResult gr = runner_detail::base_gram(cfg, variety, g0, grid, cache);
      const double d = static_cast<double>(variety.degree());
      const double err = std::abs(gr.mass - d);
      results["mass"] = gr.mass;
      results["degree"] = variety.degree();
      results["mass_check"] = checked_value(gr.mass, cfg.volume_tolerance, err < cfg.volume_tolerance);
      status = err < cfg.volume_tolerance ? "verified" : "failed";
      break;
    }

    case Task::moment: {
      TorusData td = cfg.torus_json ? runner_detail::require_torus(cfg, variety)
                                    : trivial_torus(dim);
      IntegratorOptions io = integ;
      io.estimate_error = !variety.is_points();
      MomentResult m = mu0(variety, g0, grid, io);
      const CMat mu_t = extremal_vector(m.value.mat, td);
      results["mass"] = m.mass;
      results["mu0"] = matrix_to_json(m.value.mat);
      results["mu0_norm"] = m.value.mat.norm();
      results["mu_T"] = matrix_to_json(mu_t);
      results["mu_T_norm"] = mu_t.norm();
      results["residual_to_mu_T"] = (m.value.mat - mu_t).norm() / m.mass;
      results["offblock_norm"] = solver_detail::offblock_norm(m.value.mat, td);
      if (m.quad_error) body["quadrature"]["estimated_error"] = *m.quad_error;
      status = "computed";
      break;
    }

    case Task::optimal_weight: {
      TorusData td = runner_detail::require_torus(cfg, variety);
      OptimalWeightResult w = solve_optimal_weight(variety, td, grid, solver, g0, RVec());
      results["a_star"] = vector_to_json(w.a);
      results["sigma_star"] = runner_detail::diag_values(w.sigma.g);
      results["G_value"] = w.G_value;
      results["trace"] = trace_to_json(w.trace);
      if (w.trace.status == SolveStatus::diverged && w.destabilizing_ray.size())
        results["destabilizing_ray"] = vector_to_json(w.destabilizing_ray);
      status = to_string(w.trace.status);
      if (w.trace.status == SolveStatus::max_iter) status = "diverged";
      traces.push_back({"optimal-weight", new SolveTrace(w.trace)});
      break;
    }

    case Task::balance: {
      TorusData td = cfg.mode == BalanceMode::absolute
                         ? trivial_torus(dim)
                         : runner_detail::require_torus(cfg, variety);
      BalanceResult res;
      if (cfg.mode == BalanceMode::sigma) {
        OptimalWeightResult w = solve_optimal_weight(variety, td, grid, solver, g0, RVec());
        results["a_star"] = vector_to_json(w.a);
        results["sigma_star"] = runner_detail::diag_values(w.sigma.g);
        results["G_value"] = w.G_value;
        results["weight_trace"] = trace_to_json(w.trace);
        if (w.trace.status != SolveStatus::converged) {
          status = "diverged";
          results["message"] = "no optimal weight: " + w.trace.message;
          traces.push_back({"optimal-weight", new SolveTrace(w.trace)});
          break;
        }
        res = solve_sigma_balanced(variety, w.sigma, grid, solver, g0, td);
      } else if (cfg.mode == BalanceMode::absolute) {
        res = solve_sigma_balanced(variety, OrbitPoint::identity(dim), grid, solver, g0, td);
      } else {
        res = solve_relative_balanced(variety, td, grid, solver, g0);
      }
      results["g_star"] = matrix_to_json(res.g.g);
      results["residual"] = checked_value(res.residual, solver.tolerance,
                                          res.trace.status == SolveStatus::converged);
      results["trace"] = trace_to_json(res.trace);
      status = to_string(res.trace.status);
      if (res.trace.status == SolveStatus::max_iter) status = "diverged";
      traces.push_back({std::string("balance-") + to_string(cfg.mode), new SolveTrace(res.trace)});
      break;
    }

    case Task::verify: {
      TorusData td = runner_detail::require_torus(cfg, variety);
      switch (cfg.target) {
        case VerifyTarget::equivalence: {
          EquivalenceReport rep = verify_theorem_equivalence(variety, td, grid, solver, g0);
          results["verdict"] = rep.verdict;
          results["weight_trace"] = trace_to_json(rep.weight.trace);
          if (rep.weight.trace.status == SolveStatus::converged) {
            results["a_star"] = vector_to_json(rep.weight.a);
            results["G_value"] = rep.weight.G_value;
            results["t_sigma_subspace_distance"] = rep.t_sigma_subspace_distance;
          }
          results["sigma_trace"] = trace_to_json(rep.sigma_side.trace);
          results["relative_trace"] = trace_to_json(rep.relative_side.trace);
          if (rep.verdict == "equivalent") {
            results["cross_residual_relative_at_sigma"] = checked_value(
                rep.cross_residual_relative_at_sigma, 10 * solver.tolerance, rep.consistent);
            results["cross_residual_sigma_at_relative"] = checked_value(
                rep.cross_residual_sigma_at_relative, 10 * solver.tolerance, rep.consistent);
            results["orbit_distance"] = rep.orbit_distance;
          }
          status = rep.consistent ? "verified" : "failed";
          traces.push_back({"sigma", new SolveTrace(rep.sigma_side.trace)});
          traces.push_back({"relative", new SolveTrace(rep.relative_side.trace)});
          break;
        }
        case VerifyTarget::character: {
          if (!variety.is_points())
            throw std::invalid_argument(
                "verify character: exact Chow weights exist for point configurations only");
          CharacterIdentityReport rep = verify_character_identity(variety.points(), td, solver);
          if (rep.destabilized) {
            results["verdict"] = "destabilized, identity vacuous";
            status = "diverged";
            break;
          }
          results["sigma_star"] = runner_detail::diag_values(rep.sigma_star.g);
          results["a_star"] = vector_to_json(rep.a_star);
          results["G_value"] = rep.G_value;
          results["alpha_sigma"] = runner_detail::diag_values(rep.alpha);
          json chow = json::array();
          for (long long c : rep.chow.torus) chow.push_back(c);
          results["chow_weight"] = chow;
          results["homothety_weight"] = rep.chow.homothety;
          results["block_multiplicity"] = rep.block_multiplicity;
          if (rep.coordinate_exponents) results["exponents"] = *rep.coordinate_exponents;
          results["kappa_char"] = rep.kappa_char;
          results["kappa_empirical"] = rep.kappa_empirical;
          results["angle_residual"] = checked_value(rep.angle_residual, 1e-6, rep.angle_residual < 1e-6);
          results["t_tilde_residual"] = checked_value(rep.t_tilde_residual, 1e-10,
                                                      rep.t_tilde_residual < 1e-10);
          if (rep.rationality) {
            results["rationality"] = {{"numerators", rep.rationality->num},
                                      {"denominator", rep.rationality->den}};
          }
          status = rep.identity_holds ? "verified" : "failed";
          break;
        }
        case VerifyTarget::t_sigma: {
          OptimalWeightResult w = solve_optimal_weight(variety, td, grid, solver, g0, RVec());
          results["weight_trace"] = trace_to_json(w.trace);
          if (w.trace.status != SolveStatus::converged) {
            results["verdict"] = "destabilized";
            status = "diverged";
            break;
          }
          const double dist = t_sigma_identity_distance(w.sigma, td);
          results["a_star"] = vector_to_json(w.a);
          results["subspace_distance"] = checked_value(dist, 1e-6, dist < 1e-6);
          status = dist < 1e-6 ? "verified" : "failed";
          break;
        }
        case VerifyTarget::orbit_constancy: {
          SubalgebraBasis t = basis_t(td);
          if (t.elems.empty())
            throw std::invalid_argument("verify orbit-constancy: torus has trivial t");
          MomentResult base = mu0(variety, g0, grid, integ);
          std::vector<double> base_f;
          for (const CMat& xi : t.elems) base_f.push_back(herm_inner(base.value.mat, xi));
          // quadrature tolerance from a grid-halving comparison at the base point
          double quad_tol = 1e-11 * std::max(1.0, base.mass);
          if (!variety.is_points()) {
            MomentResult half =
                mu0(variety, g0, integrate_detail::half_grid(grid), g0.is_identity() ? integ : integ);
            for (std::size_t k = 0; k < t.elems.size(); ++k)
              quad_tol = std::max(quad_tol,
                                  std::abs(herm_inner(half.value.mat, t.elems[k]) - base_f[k]));
          }
          std::mt19937_64 rng(cfg.seed);
          double max_dev = 0.0;
          json samples = json::array();
          for (int s = 0; s < 10; ++s) {
            OrbitPoint gp{g0.g * random_block_orbit_point(td, rng, 0.4, true).g};
            MomentResult m = mu0(variety, gp, grid, integ);
            double dev = 0.0;
            for (std::size_t k = 0; k < t.elems.size(); ++k)
              dev = std::max(dev, std::abs(herm_inner(m.value.mat, t.elems[k]) - base_f[k]));
            samples.push_back(dev);
            max_dev = std::max(max_dev, dev);
          }
          results["character_values"] = base_f;
          results["deviations"] = samples;
          results["max_deviation"] = checked_value(max_dev, 10.0 * quad_tol, max_dev < 10.0 * quad_tol);
          results["quadrature_tolerance"] = quad_tol;
          status = max_dev < 10.0 * quad_tol ? "verified" : "failed";
          break;
        }
      }
      break;
    }
  }

  body["status"] = status;
  report.exit_code = runner_detail::exit_code_for(status);
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  write_report_files(report, cfg.output_dir);
  if (!traces.empty()) {
    write_convergence_svg(cfg.output_dir / "convergence.svg", traces);
    if (traces.size() == 1) {
      write_trace_csv(cfg.output_dir / "trace.csv", *traces[0].second);
    } else {
      for (const auto& [name, tr] : traces)
        write_trace_csv(cfg.output_dir / ("trace-" + name + ".csv"), *tr);
    }
    for (auto& [name, tr] : traces) delete tr;
  }
  return report;
}

}  // namespace chowbal
