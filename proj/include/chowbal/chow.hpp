///
/// \file chow.hpp
///
/// Exact Chow forms for zero-dimensional cycles and the character bookkeeping
/// around them: the destabilizing torus weight of a fixed configuration, its
/// lift by the homothety weight d(n+1), the vector alpha^sigma built from the
/// optimal weight, and the numerical verification that alpha^sigma is
/// proportional to the lifted character.
///
/// For d points the Chow form is the product of the d linear forms vanishing
/// on them; torus weights are integer arithmetic end to end, only
/// alpha^sigma is floating point.
///
#pragma once

#include "chowbal/solvers.hpp"

namespace chowbal {

/// Global pairing normalization between characters and Hermitian
/// representatives, calibrated once on the two-block configuration
/// {[1:0],[0:1],[0:1]} and frozen. Reports carry the empirical ratio next to
/// it so universality across (N, d) stays an observable, not an assumption.
constexpr double kKappaChar = 2.0;

struct ChowFormPoints {
  std::vector<CVec> factors;  // covector of each linear factor = the point itself
  std::optional<std::vector<long long>> coordinate_exponents;  // exponent of each u_beta
};

/// The Chow form of a point configuration: one linear factor per point,
/// multiplicities preserved. When every point is a coordinate vector the
/// expanded monomial exponents are recorded as well.
inline ChowFormPoints chow_form_points(const PointConfiguration& config) {
  ChowFormPoints out;
  out.factors = config.points;
  std::vector<long long> exps(config.ambient, 0);
  bool monomial = true;
  for (const CVec& p : config.points) {
    int nz = -1;
    for (int i = 0; i < config.ambient && monomial; ++i) {
      if (std::abs(p[i]) > 1e-14 * p.norm()) {
        if (nz >= 0) monomial = false;
        nz = i;
      }
    }
    if (monomial) exps[nz] += 1;
  }
  if (monomial) out.coordinate_exponents = std::move(exps);
  return out;
}

struct WeightVector {
  std::vector<long long> torus;  // character in Z^r
  long long homothety = 0;       // d(n+1) after lifting

  bool operator==(const WeightVector&) const = default;
};

namespace chow_detail {

/// Block carrying the factor, or -1 when the factor is not a weight
/// eigenvector (support meets more than one block).
inline int factor_block(const CVec& p, const TorusData& td) {
  int blk = -1;
  const double tol = 1e-12 * p.norm();
  for (int i = 0; i < td.dim(); ++i) {
    if (std::abs(p[i]) > tol) {
      if (blk >= 0 && td.block_of[i] != blk) return -1;
      blk = td.block_of[i];
    }
  }
  return blk;
}

}  // namespace chow_detail

/// Number of factors supported on each block; errors out unless the
/// configuration is fixed by the torus (every factor an eigenvector).
inline std::vector<long long> chow_block_multiplicities(const ChowFormPoints& form,
                                                        const TorusData& td) {
  std::vector<long long> mult(td.num_blocks(), 0);
  for (const CVec& p : form.factors) {
    const int b = chow_detail::factor_block(p, td);
    if (b < 0) throw std::invalid_argument("configuration not T-invariant");
    mult[b] += 1;
  }
  return mult;
}

/// The destabilizing character chi_X: the sum over factors of the raw block
/// weight, exact in integer arithmetic.
inline WeightVector chow_weight(const ChowFormPoints& form, const TorusData& td) {
  const std::vector<long long> mult = chow_block_multiplicities(form, td);
  WeightVector chi;
  chi.torus.assign(td.rank, 0);
  for (int b = 0; b < td.num_blocks(); ++b) {
    const Eigen::VectorXi w = td.block_weight(b);
    for (int k = 0; k < td.rank; ++k) chi.torus[k] += mult[b] * static_cast<long long>(w[k]);
  }
  return chi;
}

/// Weight correspondence chi -> chi': append the homothety weight d(n+1).
inline WeightVector lift_character(const WeightVector& chi, long long d, int n) {
  if (d < 1) throw std::invalid_argument("lift_character: d must be >= 1");
  WeightVector out = chi;
  out.homothety = d * static_cast<long long>(n + 1);
  return out;
}

inline WeightVector unlift_character(const WeightVector& chi) {
  WeightVector out = chi;
  out.homothety = 0;
  return out;
}

/// alpha^sigma = G(sigma) * sigma^{-2} in the Hermitian convention; positive
/// definite and, at an optimal weight, an element of t~.
inline CMat alpha_sigma(const OrbitPoint& sigma_star, double g_value) {
  if (g_value <= 0.0) throw std::invalid_argument("alpha_sigma: G value must be positive");
  const CMat& s = sigma_star.g;
  const int dim = static_cast<int>(s.rows());
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      if (i != j && std::abs(s(i, j)) > 1e-12 * s.norm())
        throw std::invalid_argument("sigma not in T^c");
  for (int i = 0; i < dim; ++i)
    if (s(i, i).real() <= 0.0 || std::abs(s(i, i).imag()) > 1e-12)
      throw std::invalid_argument("sigma not in T^c");
  CMat out = CMat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) out(i, i) = g_value / (s(i, i).real() * s(i, i).real());
  return out;
}

struct CharacterIdentityReport {
  bool destabilized = false;  // no optimal weight; identity vacuous
  RVec a_star;
  OrbitPoint sigma_star;
  double G_value = 0.0;
  CMat alpha;                   // alpha^sigma
  double t_tilde_residual = 0;  // |alpha - P_{t~} alpha|
  WeightVector chow;            // chi_X lifted by d(n+1)
  std::vector<long long> block_multiplicity;
  std::optional<std::vector<long long>> coordinate_exponents;
  double kappa_char = kKappaChar;
  double kappa_empirical = 0.0;   // <alpha, E>/<E, E> against the multiplicity matrix
  double angle_residual = 0.0;    // angle between alpha and P_{t~} E, radians
  double calibrated_mismatch = 0.0;  // max |alpha/kappa_char - E| entrywise
  double trace_alpha = 0.0;
  std::optional<RationalVector> rationality;  // of alpha / kappa_char
  bool identity_holds = false;
  SolveTrace weight_trace;
};

/// Verify the optimal-weight / destabilizing-character identity on an exact
/// configuration: solve for sigma*, form alpha^sigma, and compare against
/// the Hermitian representative E of the lifted Chow character (diagonal
/// m_b/N_b per block, projected to t~).
inline CharacterIdentityReport verify_character_identity(const PointConfiguration& config,
                                                         const TorusData& td,
                                                         const SolverOptions& opts) {
  Variety variety{config};
  const QuadratureGrid no_grid = build_grid(0, 2, 2, 1.0);

  CharacterIdentityReport rep;
  ChowFormPoints form = chow_form_points(config);
  rep.block_multiplicity = chow_block_multiplicities(form, td);
  rep.coordinate_exponents = form.coordinate_exponents;
  rep.chow = lift_character(chow_weight(form, td), config.degree(), 0);

  OptimalWeightResult w = solve_optimal_weight(variety, td, no_grid, opts);
  rep.weight_trace = w.trace;
  if (w.trace.status != SolveStatus::converged) {
    rep.destabilized = true;
    return rep;
  }
  rep.a_star = w.a;
  rep.sigma_star = w.sigma;
  rep.G_value = w.G_value;
  rep.alpha = alpha_sigma(w.sigma, w.G_value);
  rep.trace_alpha = rep.alpha.trace().real();
  rep.t_tilde_residual = (rep.alpha - project_t_tilde(rep.alpha, td)).norm();

  CMat e = CMat::Zero(td.dim(), td.dim());
  for (int b = 0; b < td.num_blocks(); ++b) {
    const double v = static_cast<double>(rep.block_multiplicity[b]) / td.blocks[b].size();
    for (int i : td.blocks[b]) e(i, i) = v;
  }
  const CMat e_t = project_t_tilde(e, td);
  const double cosang =
      herm_inner(rep.alpha, e_t) / std::max(1e-300, herm_norm(rep.alpha) * herm_norm(e_t));
  rep.angle_residual = std::acos(std::clamp(cosang, -1.0, 1.0));
  rep.kappa_empirical = herm_inner(rep.alpha, e_t) / herm_inner(e_t, e_t);
  rep.calibrated_mismatch = (rep.alpha / kKappaChar - e_t).cwiseAbs().maxCoeff();

  try {
    rep.rationality = rationality_check(rep.alpha / kKappaChar, td, 4 * config.degree());
  } catch (const std::invalid_argument&) {
    rep.rationality = std::nullopt;  // alpha not in t~; already visible in the residual
  }
  rep.identity_holds = rep.angle_residual < 1e-6 && rep.t_tilde_residual < 1e-10;
  return rep;
}

}  // namespace chowbal
