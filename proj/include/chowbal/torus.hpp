///
/// \file torus.hpp
///
/// Torus weight data and the block structure it induces on the basis of the
/// section space: the subalgebras t ⊂ t~ ⊂ g_T with their trace pairing,
/// orthogonal projections, the extremal vector, the sigma-twist of t, and a
/// rationality test for elements of t~.
///
/// Conventions: weights are integer vectors in Z^r, one per basis vector of
/// C^{N+1}. Generators of t are the diagonal weight patterns with the mean
/// subtracted, so that the torus representation lands in SL. All Lie-algebra
/// elements are stored as Hermitian matrices (the factor i is implicit) and
/// paired with <A,B> = tr(A B*).
///
#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "chowbal/linalg.hpp"

namespace chowbal {

struct TorusData {
  int rank = 0;                           // number of weight generators r
  Eigen::MatrixXi weights;                // (N+1) x r, raw integer weights
  std::vector<std::vector<int>> blocks;   // partition of {0..N}, sorted lex by weight
  std::vector<int> block_of;              // basis index -> block index
  RMat corrected;                         // (N+1) x r, weights minus column mean

  int dim() const { return static_cast<int>(weights.rows()); }
  int num_blocks() const { return static_cast<int>(blocks.size()); }

  Eigen::VectorXi block_weight(int b) const { return weights.row(blocks[b][0]).transpose(); }

  /// Diagonal generator D_k = diag(corrected weight pattern k), trace-free.
  CMat generator(int k) const {
    CMat d = CMat::Zero(dim(), dim());
    for (int i = 0; i < dim(); ++i) d(i, i) = corrected(i, k);
    return d;
  }
};

/// Group basis vectors by equal weight; block order is lexicographic in the
/// weight vectors so that repeated builds agree entry for entry.
inline TorusData build_torus(const std::vector<std::vector<long long>>& weight_rows) {
  if (weight_rows.empty()) throw std::invalid_argument("build_torus: empty weight list");
  const int n1 = static_cast<int>(weight_rows.size());
  const int r = static_cast<int>(weight_rows.front().size());
  for (const auto& w : weight_rows)
    if (static_cast<int>(w.size()) != r) throw std::invalid_argument("build_torus: ragged weight list");

  TorusData td;
  td.rank = r;
  td.weights.resize(n1, r);
  for (int i = 0; i < n1; ++i)
    for (int k = 0; k < r; ++k) td.weights(i, k) = static_cast<int>(weight_rows[i][k]);

  std::map<std::vector<long long>, std::vector<int>> groups;
  for (int i = 0; i < n1; ++i) groups[weight_rows[i]].push_back(i);
  td.block_of.assign(n1, -1);
  for (const auto& [w, members] : groups) {
    for (int i : members) td.block_of[i] = static_cast<int>(td.blocks.size());
    td.blocks.push_back(members);
  }

  td.corrected = td.weights.cast<double>();
  for (int k = 0; k < r; ++k) td.corrected.col(k).array() -= td.corrected.col(k).mean();
  return td;
}

inline TorusData trivial_torus(int dim_v) {
  return build_torus(std::vector<std::vector<long long>>(dim_v, std::vector<long long>{}));
}

enum class SubalgebraTag { t, t_tilde, g_T, g_T_perp, t_sigma };

/// Orthonormal family of Hermitian matrices spanning a subalgebra.
struct SubalgebraBasis {
  std::vector<CMat> elems;
  SubalgebraTag tag = SubalgebraTag::t;
  int ambient = 0;

  int size() const { return static_cast<int>(elems.size()); }
};

namespace detail {

/// Gram-Schmidt over the Hermitian trace pairing; drops near-dependent input.
inline std::vector<CMat> orthonormalize(const std::vector<CMat>& input, double drop_tol = 1e-10) {
  std::vector<CMat> out;
  for (const CMat& raw : input) {
    CMat v = hermitize(raw);
    const double scale = std::max(1.0, herm_norm(v));
    for (const CMat& b : out) v -= herm_inner(v, b) * b;
    // second pass for numerical orthogonality
    for (const CMat& b : out) v -= herm_inner(v, b) * b;
    const double nv = herm_norm(v);
    if (nv > drop_tol * scale) out.push_back(v / nv);
  }
  return out;
}

/// Real-isometric vectorization of Hermitian matrices (diag, then sqrt2 * re/im
/// of the upper triangle); used to compare subspace projectors.
inline RVec vectorize_hermitian(const CMat& a) {
  const int n = static_cast<int>(a.rows());
  RVec v(n * n);
  int p = 0;
  for (int i = 0; i < n; ++i) v[p++] = a(i, i).real();
  const double s = std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      v[p++] = s * a(i, j).real();
      v[p++] = s * a(i, j).imag();
    }
  return v;
}

}  // namespace detail

/// Orthonormal basis of t: span of the mean-corrected diagonal weight
/// patterns. Dimension equals the rank of the corrected weight matrix; an
/// all-equal weight assignment yields an empty basis.
inline SubalgebraBasis basis_t(const TorusData& td) {
  SubalgebraBasis out;
  out.tag = SubalgebraTag::t;
  out.ambient = td.dim();
  std::vector<CMat> gens;
  for (int k = 0; k < td.rank; ++k) gens.push_back(td.generator(k));
  out.elems = detail::orthonormalize(gens);
  if (td.rank > 0 && out.elems.empty())
    std::cerr << "[chowbal] warning: torus weights are all equal; t is trivial\n";
  return out;
}

/// t~ = R*Id ⊕ t, orthonormal (Id is orthogonal to every trace-free element).
inline SubalgebraBasis basis_t_tilde(const TorusData& td) {
  SubalgebraBasis out = basis_t(td);
  out.tag = SubalgebraTag::t_tilde;
  const int n = td.dim();
  out.elems.push_back(CMat::Identity(n, n) / std::sqrt(static_cast<double>(n)));
  return out;
}

/// Trace-free Hermitian block matrices (the Lie algebra of S(prod U(N_chi))).
inline SubalgebraBasis basis_g_T(const TorusData& td) {
  SubalgebraBasis out;
  out.tag = SubalgebraTag::g_T;
  const int n = td.dim();
  out.ambient = n;
  // trace-free diagonal part: Helmert vectors
  for (int k = 1; k < n; ++k) {
    CMat h = CMat::Zero(n, n);
    const double nk = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) h(i, i) = nk;
    h(k, k) = -static_cast<double>(k) * nk;
    out.elems.push_back(h);
  }
  // off-diagonal pairs inside each block
  const double s = 1.0 / std::sqrt(2.0);
  for (const auto& blk : td.blocks)
    for (std::size_t a = 0; a < blk.size(); ++a)
      for (std::size_t b = a + 1; b < blk.size(); ++b) {
        const int i = blk[a], j = blk[b];
        CMat re = CMat::Zero(n, n), im = CMat::Zero(n, n);
        re(i, j) = re(j, i) = s;
        im(i, j) = Complex(0, s);
        im(j, i) = Complex(0, -s);
        out.elems.push_back(re);
        out.elems.push_back(im);
      }
  return out;
}

/// Orthogonal projection onto span(basis) in the trace pairing.
inline CMat project(const CMat& xi, const SubalgebraBasis& basis) {
  CMat out = CMat::Zero(xi.rows(), xi.cols());
  for (const CMat& b : basis.elems) out += herm_inner(xi, b) * b;
  return out;
}

inline CMat project_t(const CMat& xi, const TorusData& td) { return project(xi, basis_t(td)); }

inline CMat project_t_tilde(const CMat& xi, const TorusData& td) {
  return project(xi, basis_t_tilde(td));
}

/// Complement projection used by the relative solver: trace-free part minus
/// the t-component. On block-diagonal input this is the projection onto
/// g_T ⊖ t; on general input it also keeps the off-block directions, which is
/// what drives configurations that are not torus-invariant.
inline CMat project_g_T_perp(const CMat& xi, const TorusData& td) {
  CMat tf = trace_free(hermitize(xi));
  return tf - project_t(tf, td);
}

/// Block part of g_T orthogonal to t; used to sample orbit directions that
/// commute with the torus.
inline SubalgebraBasis basis_g_T_perp_block(const TorusData& td) {
  SubalgebraBasis gt = basis_g_T(td);
  SubalgebraBasis t = basis_t(td);
  std::vector<CMat> raw;
  for (const CMat& b : gt.elems) raw.push_back(b - project(b, t));
  SubalgebraBasis out;
  out.tag = SubalgebraTag::g_T_perp;
  out.ambient = td.dim();
  out.elems = detail::orthonormalize(raw);
  return out;
}

/// The extremal vector: orthogonal projection of mu0 onto t.
inline CMat extremal_vector(const CMat& mu0_value, const TorusData& td) {
  return project_t(mu0_value, td);
}

/// Element of the block group acting on the reference basis. Orbit points
/// produced from block data have exactly zero off-block entries; the relative
/// solver may leave the block group when fed a configuration that is not
/// torus-invariant, so conformity is a query rather than a hard invariant.
struct OrbitPoint {
  CMat g;

  static OrbitPoint identity(int dim) { return OrbitPoint{CMat::Identity(dim, dim)}; }

  int dim() const { return static_cast<int>(g.rows()); }

  bool is_identity(double tol = 1e-14) const {
    return (g - CMat::Identity(g.rows(), g.cols())).norm() <= tol;
  }

  double offblock_norm(const TorusData& td) const {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i)
      for (int j = 0; j < dim(); ++j)
        if (td.block_of[i] != td.block_of[j]) s += std::norm(g(i, j));
    return std::sqrt(s);
  }

  bool is_block(const TorusData& td, double tol = 1e-12) const {
    return offblock_norm(td) <= tol * std::max(1.0, g.norm());
  }
};

/// Per-block scalar values of a block-scalar matrix; throws if the matrix is
/// not scalar on each block.
inline RVec block_scalar_values(const CMat& s, const TorusData& td, double tol = 1e-10) {
  const int n = td.dim();
  if (s.rows() != n || s.cols() != n) throw std::invalid_argument("block_scalar_values: bad size");
  RVec vals(td.num_blocks());
  CMat model = CMat::Zero(n, n);
  for (int b = 0; b < td.num_blocks(); ++b) {
    double acc = 0.0;
    for (int i : td.blocks[b]) acc += s(i, i).real();
    vals[b] = acc / static_cast<double>(td.blocks[b].size());
    for (int i : td.blocks[b]) model(i, i) = vals[b];
  }
  if ((s - model).norm() > tol * std::max(1.0, s.norm()))
    throw std::invalid_argument("sigma must lie in T^c (block-scalar positive representative)");
  return vals;
}

inline bool is_block_scalar_positive(const CMat& s, const TorusData& td, double tol = 1e-10) {
  try {
    RVec v = block_scalar_values(s, td, tol);
    return (v.array() > 0.0).all();
  } catch (const std::invalid_argument&) {
    return false;
  }
}

/// sigma = exp(sum_k a_k D_k) with D_k the corrected weight generators; the
/// positive-definite representative of a point of T^c modulo T.
inline OrbitPoint sigma_from_coords(const TorusData& td, const RVec& a) {
  if (a.size() != td.rank) throw std::invalid_argument("sigma_from_coords: coordinate size != rank");
  const int n = td.dim();
  CMat s = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double t = 0.0;
    for (int k = 0; k < td.rank; ++k) t += a[k] * td.corrected(i, k);
    s(i, i) = std::exp(t);
  }
  return OrbitPoint{s};
}

/// t^sigma = sigma * t * sigma^*, returned orthonormalized.
inline SubalgebraBasis twist_t(const OrbitPoint& sigma, const TorusData& td) {
  if (!is_block_scalar_positive(sigma.g, td))
    throw std::invalid_argument("sigma must lie in T^c (block-scalar positive representative)");
  SubalgebraBasis t = basis_t(td);
  std::vector<CMat> twisted;
  for (const CMat& xi : t.elems) twisted.push_back(sigma.g * xi * sigma.g.adjoint());
  SubalgebraBasis out;
  out.tag = SubalgebraTag::t_sigma;
  out.ambient = td.dim();
  out.elems = detail::orthonormalize(twisted);
  return out;
}

struct SubspaceDistance {
  bool equal = false;
  double distance = 0.0;
};

/// Frobenius distance between the orthogonal projectors of two spans.
inline SubspaceDistance subspace_equal(const SubalgebraBasis& b1, const SubalgebraBasis& b2,
                                       double tol) {
  if (b1.ambient != b2.ambient) throw std::invalid_argument("subspace_equal: ambient mismatch");
  const int m = b1.ambient * b1.ambient;
  RMat p1 = RMat::Zero(m, m), p2 = RMat::Zero(m, m);
  for (const CMat& e : b1.elems) {
    RVec v = detail::vectorize_hermitian(e);
    p1 += v * v.transpose();
  }
  for (const CMat& e : b2.elems) {
    RVec v = detail::vectorize_hermitian(e);
    p2 += v * v.transpose();
  }
  SubspaceDistance out;
  out.distance = (p1 - p2).norm();
  out.equal = out.distance < tol;
  return out;
}

struct RationalVector {
  std::vector<long long> num;
  long long den = 1;
};

/// Best rational approximation p/q of x with q <= max_den (continued
/// fractions); used for vertex rationalization and by rationality_check.
inline std::pair<long long, long long> rational_approx(double x, long long max_den) {
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double v = x;
  for (int it = 0; it < 64; ++it) {
    const double fl = std::floor(v);
    if (fl > 9e17 || fl < -9e17) break;
    const long long a = static_cast<long long>(fl);
    if (q1 != 0 && (max_den - q0) / q1 < a) break;  // next denominator would exceed the bound
    const long long p2 = a * p1 + p0, q2 = a * q1 + q0;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double rem = v - fl;
    if (rem < 1e-15) break;
    v = 1.0 / rem;
  }
  if (q1 == 0) return {llround(x), 1};
  return {p1, q1};
}

/// Attempt to express an element of t~ as a rational vector in the per-block
/// diagonal values, with a common denominator bounded by max_den. Returns
/// nothing when no such approximation exists within `tol`.
inline std::optional<RationalVector> rationality_check(const CMat& xi, const TorusData& td,
                                                       long long max_den, double tol = 1e-6) {
  const CMat pxi = project_t_tilde(hermitize(xi), td);
  if ((hermitize(xi) - pxi).norm() > 1e-8 * std::max(1.0, xi.norm()))
    throw std::invalid_argument("rationality_check: element not in t~");
  RVec vals = block_scalar_values(pxi, td, 1e-8);
  for (long long q = 1; q <= max_den; ++q) {
    bool ok = true;
    std::vector<long long> num(vals.size());
    for (Eigen::Index b = 0; b < vals.size(); ++b) {
      num[b] = llround(vals[b] * static_cast<double>(q));
      if (std::abs(vals[b] - static_cast<double>(num[b]) / static_cast<double>(q)) > tol) {
        ok = false;
        break;
      }
    }
    if (ok) return RationalVector{std::move(num), q};
  }
  return std::nullopt;
}

/// Rescale each block so its determinant has modulus one. All solver
/// residuals are invariant under this renormalization.
inline OrbitPoint normalize_block_determinants(const OrbitPoint& g, const TorusData& td) {
  OrbitPoint out = g;
  for (const auto& blk : td.blocks) {
    const int nb = static_cast<int>(blk.size());
    CMat sub(nb, nb);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) sub(a, b) = g.g(blk[a], blk[b]);
    const double ad = std::abs(sub.determinant());
    if (ad <= 0.0) throw std::runtime_error("normalize_block_determinants: singular block");
    const double f = std::pow(ad, -1.0 / nb);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) out.g(blk[a], blk[b]) *= f;
  }
  return out;
}

/// Distance between the embeddings represented by g1, g2 modulo the right
/// unitary ambiguity and the T~^c action: compares log of the metric Grams
/// K(g) = conj(g) g^T after removing the t~ component.
inline double projective_distance_mod_torus(const OrbitPoint& g1, const OrbitPoint& g2,
                                            const TorusData& td) {
  const CMat k1 = hermitize(g1.g.conjugate() * g1.g.transpose());
  const CMat k2 = hermitize(g2.g.conjugate() * g2.g.transpose());
  CMat diff = herm_log(k1) - herm_log(k2);
  diff -= project_t_tilde(diff, td);
  return diff.norm();
}

/// Random Hermitian direction in the block part of g_T orthogonal to t.
inline CMat random_g_T_perp_block(const TorusData& td, std::mt19937_64& rng, double scale) {
  SubalgebraBasis basis = basis_g_T_perp_block(td);
  std::normal_distribution<double> dist(0.0, scale);
  CMat out = CMat::Zero(td.dim(), td.dim());
  for (const CMat& b : basis.elems) out += dist(rng) * b;
  return out;
}

/// Random orbit point exp(eta), eta Hermitian block (optionally transverse to t).
inline OrbitPoint random_block_orbit_point(const TorusData& td, std::mt19937_64& rng, double scale,
                                           bool transverse_to_t = true) {
  CMat eta;
  if (transverse_to_t) {
    eta = random_g_T_perp_block(td, rng, scale);
  } else {
    SubalgebraBasis basis = basis_g_T(td);
    std::normal_distribution<double> dist(0.0, scale);
    eta = CMat::Zero(td.dim(), td.dim());
    for (const CMat& b : basis.elems) eta += dist(rng) * b;
  }
  return OrbitPoint{herm_exp(eta)};
}

}  // namespace chowbal
