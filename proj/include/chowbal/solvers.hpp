///
/// \file solvers.hpp
///
/// The three solvers and their cross-verification:
///   - damped Newton on the convex functional G for the optimal weight,
///   - inverse-square-root fixed-point iteration for sigma-balanced
///     embeddings (the twisted form of the classical balancing iteration),
///   - projected gradient flow for embeddings balanced relative to T.
///
/// Each residual is the defining equation of the corresponding notion, so a
/// converged run certifies the property at the stated tolerance and a
/// diverged run reports the witness instead of a spurious fixed point.
///
#pragma once

#include <sstream>

#include "chowbal/moment.hpp"

namespace chowbal {

struct SolverOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;  // on relative residuals
  double damping = 0.5;     // in (0,1]
  bool line_search = true;
  std::vector<std::pair<int, int>> grid_schedule;  // optional (radial, angular) stages
  int threads = 1;

  void validate() const {
    if (tolerance <= 0.0) throw std::invalid_argument("SolverOptions: tolerance must be > 0");
    if (damping <= 0.0 || damping > 1.0)
      throw std::invalid_argument("SolverOptions: damping must be in (0,1]");
    if (max_iterations < 1) throw std::invalid_argument("SolverOptions: max_iterations must be >= 1");
  }

  IntegratorOptions integrator() const {
    IntegratorOptions io;
    io.threads = threads;
    return io;
  }
};

enum class SolveStatus { converged, max_iter, diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;
  double value = 0.0;  // G for the weight solve, moment norms for balancing
  double step = 0.0;
};

struct SolveTrace {
  std::vector<IterationRecord> records;
  SolveStatus status = SolveStatus::max_iter;
  std::string message;

  double final_residual() const { return records.empty() ? 0.0 : records.back().residual; }
};

// ---------------------------------------------------------------------------
// Gram form with stability guards
// ---------------------------------------------------------------------------

/// M^sigma = integral of (sigma z)(sigma z)^*/|z|^2; must be positive
/// definite for a non-degenerate embedding on an adequate grid.
inline GramResult gram_sigma(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                             const OrbitPoint& sigma, const IntegratorOptions& opts = {}) {
  GramResult gr = integrate_gram(variety, g, grid, sigma.g, opts);
  const double scale = gr.m.trace().real() / static_cast<double>(variety.dim_v());
  if (scale <= 0.0 || min_eigenvalue(gr.m) <= 1e-12 * scale)
    throw std::runtime_error("insufficient quadrature or degenerate embedding (Gram not positive)");
  return gr;
}

namespace solver_detail {

inline bool gram_positive(const GramResult& gr, int dim) {
  const double scale = gr.m.trace().real() / dim;
  return scale > 0.0 && min_eigenvalue(gr.m) > 1e-12 * scale;
}

inline double offblock_norm(const CMat& m, const TorusData& td) {
  double s = 0.0;
  for (int i = 0; i < td.dim(); ++i)
    for (int j = 0; j < td.dim(); ++j)
      if (td.block_of[i] != td.block_of[j]) s += std::norm(m(i, j));
  return std::sqrt(s);
}

inline CMat block_clip(const CMat& m, const TorusData& td) {
  CMat out = m;
  for (int i = 0; i < td.dim(); ++i)
    for (int j = 0; j < td.dim(); ++j)
      if (td.block_of[i] != td.block_of[j]) out(i, j) = 0.0;
  return out;
}

/// A^p per block; block sizes are small, so dense eigendecomposition per
/// block is the whole story.
inline CMat block_herm_power(const CMat& m, const TorusData& td, double p) {
  CMat out = CMat::Zero(td.dim(), td.dim());
  for (const auto& blk : td.blocks) {
    const int nb = static_cast<int>(blk.size());
    CMat sub(nb, nb);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) sub(a, b) = m(blk[a], blk[b]);
    CMat powed = herm_power(sub, p);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) out(blk[a], blk[b]) = powed(a, b);
  }
  return out;
}

/// Pseudoinverse Newton step -H^+ g; falls back to a scaled gradient step
/// when the Hessian is numerically singular in the gradient direction.
inline RVec newton_step(const RMat& h, const RVec& grad) {
  Eigen::SelfAdjointEigenSolver<RMat> es(h);
  const RVec ev = es.eigenvalues();
  const double emax = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  if (emax <= 0.0) return -grad;
  const double thr = 1e-12 * emax;
  RVec step = RVec::Zero(grad.size());
  RVec coef = es.eigenvectors().transpose() * grad;
  bool any = false;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] > thr) {
      step -= (coef[k] / ev[k]) * es.eigenvectors().col(k);
      any = true;
    }
  }
  if (!any || !step.allFinite()) return -grad / emax;
  return step;
}

}  // namespace solver_detail

// ---------------------------------------------------------------------------
// Optimal weight
// ---------------------------------------------------------------------------

struct OptimalWeightResult {
  RVec a;             // minimizer coordinates in the corrected weight frame
  OrbitPoint sigma;   // exp(sum a_k D_k)
  double G_value = 0.0;
  SolveTrace trace;
  RVec destabilizing_ray;  // unit direction of decay when diverged
};

/// Minimize G(a) by damped Newton with Armijo backtracking. Since sigma is
/// diagonal the Gram at the base point determines G along the whole torus,
/// so the integral is evaluated exactly once.
inline OptimalWeightResult solve_optimal_weight(const Variety& variety, const TorusData& td,
                                                const QuadratureGrid& grid, const SolverOptions& opts,
                                                const OrbitPoint& g0, const RVec& a0) {
  opts.validate();
  if (td.rank < 1) throw std::invalid_argument("solve_optimal_weight: torus rank must be >= 1");
  WeightObjective wo = WeightObjective::at_base(variety, g0, grid, td, opts.integrator());

  OptimalWeightResult out;
  out.a = a0.size() == td.rank ? a0 : RVec::Zero(td.rank);
  const double g_ref = wo.value(RVec::Zero(td.rank));
  double g_cur = wo.value(out.a);
  double last_step = 0.0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    const RVec grad = wo.grad(out.a);
    const double resid = grad.norm() / g_cur;  // scale-free: G > 0
    out.trace.records.push_back({it, resid, g_cur, last_step});
    if (g_cur < 1e-9 * g_ref || out.a.norm() > 50.0) {
      out.trace.status = SolveStatus::diverged;
      out.destabilizing_ray = out.a.norm() > 0 ? RVec(out.a / out.a.norm()) : RVec(-grad.normalized());
      out.trace.message = "G decays along a torus ray; no optimal weight exists";
      break;
    }
    if (resid < opts.tolerance) {
      out.trace.status = SolveStatus::converged;
      break;
    }
    const RMat hess = wo.hess(out.a);
    RVec step = solver_detail::newton_step(hess, grad);
    double t = opts.line_search ? 1.0 : opts.damping;
    const double slope = grad.dot(step);
    double g_next = wo.value(out.a + t * step);
    if (opts.line_search) {
      int bt = 0;
      while (g_next > g_cur + 1e-4 * t * slope && bt < 40) {
        t *= 0.5;
        g_next = wo.value(out.a + t * step);
        ++bt;
      }
    }
    out.a += t * step;
    g_cur = g_next;
    last_step = t * step.norm();
  }
  if (out.trace.status == SolveStatus::max_iter && !out.trace.records.empty() &&
      out.trace.records.back().residual >= opts.tolerance && out.a.norm() > 10.0) {
    out.trace.status = SolveStatus::diverged;
    out.destabilizing_ray = out.a / out.a.norm();
    out.trace.message = "iteration escaped along a torus ray";
  }
  out.sigma = sigma_from_coords(td, out.a);
  out.G_value = g_cur;
  return out;
}

inline OptimalWeightResult solve_optimal_weight(const Variety& variety, const TorusData& td,
                                                const QuadratureGrid& grid,
                                                const SolverOptions& opts) {
  return solve_optimal_weight(variety, td, grid, opts, OrbitPoint::identity(variety.dim_v()), RVec());
}

// ---------------------------------------------------------------------------
// sigma-balanced fixed point
// ---------------------------------------------------------------------------

struct BalanceResult {
  OrbitPoint g;
  SolveTrace trace;
  double residual = 0.0;
};

/// Residual of the sigma-balanced condition at g: the trace-free fraction of
/// the Gram form, |M^sigma - (tr/(N+1)) Id| / tr M^sigma.
inline double sigma_balance_residual(const Variety& variety, const OrbitPoint& g,
                                     const QuadratureGrid& grid, const OrbitPoint& sigma,
                                     const IntegratorOptions& opts = {}) {
  GramResult gr = integrate_gram(variety, g, grid, sigma.g, opts);
  return trace_free(gr.m).norm() / gr.m.trace().real();
}

/// Fixed-point iteration g <- g * conj(Mn^{-p}), Mn the Gram normalized to
/// unit mean eigenvalue and p = damping/2 in (0, 1/2]. The conjugate matches
/// the transpose convention of evaluate_embedding, so the transported Gram is
/// Mn^{-p} M Mn^{-p}; for real data this is the plain inverse-root update.
inline BalanceResult solve_sigma_balanced(const Variety& variety, const OrbitPoint& sigma,
                                          const QuadratureGrid& grid, const SolverOptions& opts,
                                          const OrbitPoint& g0, const TorusData& td) {
  opts.validate();
  const int dim = variety.dim_v();
  const double p = 0.5 * opts.damping;
  BalanceResult out;
  out.g = g0;

  std::vector<std::pair<int, int>> stages = opts.grid_schedule;
  stages.emplace_back(grid.radial_nodes, grid.angular_nodes);

  double first_resid = -1.0;
  for (const auto& [rn, an] : stages) {
    const QuadratureGrid stage_grid =
        variety.is_points() ? grid : build_grid(variety.n(), rn, an, grid.remap);
    for (int it = 0; it < opts.max_iterations; ++it) {
      GramResult gr = integrate_gram(variety, out.g, stage_grid, sigma.g, opts.integrator());
      if (!solver_detail::gram_positive(gr, dim)) {
        out.trace.status = SolveStatus::diverged;
        out.trace.message = "insufficient quadrature or degenerate embedding (Gram not positive)";
        out.residual = out.trace.final_residual();
        return out;
      }
      const double trace = gr.m.trace().real();
      const double offblock = solver_detail::offblock_norm(gr.m, td);
      if (offblock > 1e-2 * gr.m.norm())
        throw std::runtime_error("sigma solver: Gram is not block-diagonal; start point or torus "
                                 "data inconsistent with the variety");
      const double resid = trace_free(gr.m).norm() / trace;
      out.trace.records.push_back({static_cast<int>(out.trace.records.size()), resid, trace, p});
      if (first_resid < 0.0) first_resid = resid;
      if (resid < opts.tolerance) {
        out.trace.status = SolveStatus::converged;
        out.residual = resid;
        return out;
      }
      if (resid > 1e3 * std::max(first_resid, 1.0)) {
        out.trace.status = SolveStatus::diverged;
        out.trace.message = "residual grew by more than 1e3";
        out.residual = resid;
        return out;
      }
      CMat mn = solver_detail::block_clip(gr.m, td) * (static_cast<double>(dim) / trace);
      CMat h = solver_detail::block_herm_power(mn, td, -p).conjugate();
      out.g.g = out.g.g * h;
      // global scalar normalization; all criteria are invariant under it
      const double ad = std::abs(out.g.g.determinant());
      if (ad <= 0.0 || !std::isfinite(ad)) {
        out.trace.status = SolveStatus::diverged;
        out.trace.message = "iteration produced a singular basis change";
        out.residual = out.trace.final_residual();
        return out;
      }
      out.g.g *= std::pow(ad, -1.0 / dim);
    }
  }
  out.trace.status = SolveStatus::max_iter;
  out.residual = out.trace.final_residual();
  return out;
}

// ---------------------------------------------------------------------------
// Balanced relative to T
// ---------------------------------------------------------------------------

/// Residual of the relative condition at g: |mu0(g) - mu_T| / mass.
inline double relative_balance_residual(const Variety& variety, const OrbitPoint& g,
                                        const QuadratureGrid& grid, const CMat& mu_t,
                                        const IntegratorOptions& opts = {}) {
  MomentResult m = mu0(variety, g, grid, opts);
  return (m.value.mat - mu_t).norm() / m.mass;
}

/// Projected gradient flow g <- g * exp(-eps * conj(pi_{T-perp} mu0(g)))
/// with backtracking line search on |pi_{T-perp} mu0|^2; the conjugate
/// matches the transpose convention of evaluate_embedding (the generator acts
/// on evaluation vectors as its transpose). The target mu_T is the
/// t-projection of mu0 at the start point (constant along the orbit).
inline BalanceResult solve_relative_balanced(const Variety& variety, const TorusData& td,
                                             const QuadratureGrid& grid, const SolverOptions& opts,
                                             const OrbitPoint& g0) {
  opts.validate();
  const int dim = variety.dim_v();
  BalanceResult out;
  out.g = g0;

  GramResult gr0 = integrate_gram(variety, g0, grid, CMat(), opts.integrator());
  if (!solver_detail::gram_positive(gr0, dim)) {
    out.trace.status = SolveStatus::diverged;
    out.trace.message = "insufficient quadrature or degenerate embedding (Gram not positive)";
    return out;
  }
  const CMat mu_t = project_t(trace_free(gr0.m), td);

  double eps = opts.damping;
  CMat mu_cur = trace_free(gr0.m);
  double mass = gr0.mass;
  double phi_cur = std::pow(project_g_T_perp(mu_cur, td).norm() / mass, 2);
  const double phi_first = phi_cur;

  for (int it = 0; it < opts.max_iterations; ++it) {
    const CMat flow = project_g_T_perp(mu_cur, td);
    const double resid = (mu_cur - mu_t).norm() / mass;
    out.trace.records.push_back({it, resid, std::sqrt(phi_cur), eps});
    if (resid < opts.tolerance) {
      out.trace.status = SolveStatus::converged;
      out.residual = resid;
      return out;
    }
    if (phi_cur > 1e6 * std::max(phi_first, 1e-30)) {
      out.trace.status = SolveStatus::diverged;
      out.trace.message = "flow residual grew by more than 1e3";
      out.residual = resid;
      return out;
    }
    if (std::sqrt(phi_cur) < 1e-2 * opts.tolerance) {
      out.trace.status = SolveStatus::diverged;
      out.trace.message = "flow stalled: residual to mu_T is not reducible in G_{T-perp}";
      out.residual = resid;
      return out;
    }
    const CMat dir = flow.conjugate() / mass;  // dimensionless step generator

    struct Probe {
      double phi = 0.0;
      CMat mu;
      double mass = 0.0;
      OrbitPoint g;
      bool ok = false;
    };
    auto probe = [&](double step) {
      Probe p;
      p.g = OrbitPoint{out.g.g * herm_exp(-step * dir)};
      GramResult gr = integrate_gram(variety, p.g, grid, CMat(), opts.integrator());
      if (!solver_detail::gram_positive(gr, dim)) return p;
      p.mu = trace_free(gr.m);
      p.mass = gr.mass;
      p.phi = std::pow(project_g_T_perp(p.mu, td).norm() / gr.mass, 2);
      p.ok = true;
      return p;
    };

    bool accepted = false;
    for (int bt = 0; bt < 40 && !accepted; ++bt) {
      Probe p1 = probe(eps);
      if (!p1.ok || (opts.line_search && p1.phi >= phi_cur)) {
        eps *= 0.5;
        continue;
      }
      // expand while the longer step is strictly better
      while (eps < 1e6) {
        Probe p2 = probe(2.0 * eps);
        if (!p2.ok || p2.phi >= p1.phi) break;
        p1 = p2;
        eps *= 2.0;
      }
      out.g = p1.g;
      mu_cur = p1.mu;
      mass = p1.mass;
      phi_cur = p1.phi;
      accepted = true;
    }
    if (!accepted || eps < 1e-14) {
      out.trace.status = SolveStatus::diverged;
      out.trace.message = "line search failed to reduce the flow residual";
      out.residual = (mu_cur - mu_t).norm() / mass;
      return out;
    }
  }
  out.trace.status = SolveStatus::max_iter;
  out.residual = out.trace.final_residual();
  return out;
}

// ---------------------------------------------------------------------------
// Equivalence cross-check
// ---------------------------------------------------------------------------

struct EquivalenceReport {
  OptimalWeightResult weight;
  BalanceResult sigma_side;
  BalanceResult relative_side;
  double cross_residual_relative_at_sigma = 0.0;  // relative criterion at the sigma solution
  double cross_residual_sigma_at_relative = 0.0;  // sigma criterion at the relative solution
  double t_sigma_subspace_distance = -1.0;        // (sigma 1 sigma^* + t^sigma) vs t~
  double orbit_distance = -1.0;                   // between the two solutions, mod T~
  bool consistent = false;
  std::string verdict;  // "equivalent" | "relatively unstable" | "discrepancy"
};

/// Distance between span{sigma sigma^*} + t^sigma and t~ at the given sigma.
inline double t_sigma_identity_distance(const OrbitPoint& sigma, const TorusData& td) {
  SubalgebraBasis twisted = twist_t(sigma, td);
  std::vector<CMat> gens;
  gens.push_back(hermitize(sigma.g * sigma.g.adjoint()));
  for (const CMat& e : twisted.elems) gens.push_back(e);
  SubalgebraBasis lhs;
  lhs.tag = SubalgebraTag::t_sigma;
  lhs.ambient = td.dim();
  lhs.elems = detail::orthonormalize(gens);
  return subspace_equal(lhs, basis_t_tilde(td), 1e-6).distance;
}

/// Run both balancing solvers from the same start at the optimal weight and
/// evaluate each solver's criterion at the other's solution.
inline EquivalenceReport verify_theorem_equivalence(const Variety& variety, const TorusData& td,
                                                    const QuadratureGrid& grid,
                                                    const SolverOptions& opts, const OrbitPoint& g0) {
  EquivalenceReport rep;
  rep.weight = solve_optimal_weight(variety, td, grid, opts, g0, RVec());

  if (rep.weight.trace.status != SolveStatus::converged) {
    rep.relative_side = solve_relative_balanced(variety, td, grid, opts, g0);
    const bool rel_div = rep.relative_side.trace.status != SolveStatus::converged;
    rep.consistent = rel_div;
    rep.verdict = rel_div ? "relatively unstable" : "discrepancy";
    return rep;
  }

  rep.t_sigma_subspace_distance = t_sigma_identity_distance(rep.weight.sigma, td);
  rep.sigma_side = solve_sigma_balanced(variety, rep.weight.sigma, grid, opts, g0, td);
  rep.relative_side = solve_relative_balanced(variety, td, grid, opts, g0);

  const bool s_ok = rep.sigma_side.trace.status == SolveStatus::converged;
  const bool r_ok = rep.relative_side.trace.status == SolveStatus::converged;
  if (s_ok && r_ok) {
    GramResult gr0 = integrate_gram(variety, g0, grid, CMat(), opts.integrator());
    const CMat mu_t = project_t(trace_free(gr0.m), td);
    rep.cross_residual_relative_at_sigma =
        relative_balance_residual(variety, rep.sigma_side.g, grid, mu_t, opts.integrator());
    rep.cross_residual_sigma_at_relative = sigma_balance_residual(
        variety, rep.relative_side.g, grid, rep.weight.sigma, opts.integrator());
    rep.orbit_distance = projective_distance_mod_torus(rep.sigma_side.g, rep.relative_side.g, td);
    rep.consistent = rep.cross_residual_relative_at_sigma < 10.0 * opts.tolerance &&
                     rep.cross_residual_sigma_at_relative < 10.0 * opts.tolerance;
    rep.verdict = rep.consistent ? "equivalent" : "discrepancy";
  } else if (!s_ok && !r_ok) {
    rep.consistent = true;
    rep.verdict = "relatively unstable";
  } else {
    rep.consistent = false;
    rep.verdict = "discrepancy";
  }
  return rep;
}

}  // namespace chowbal
