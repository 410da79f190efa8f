///
/// \file embedding.hpp
///
/// Concrete embedded varieties and the quadrature machinery for integrating
/// against the induced Fubini-Study volume.
///
/// Toric model: the variety is parametrized over the dense torus in
/// exponential coordinates w = x + i*theta in C^n, with one monomial per
/// lattice point of the polytope,
///     z_beta(w) = sum_gamma g_{gamma,beta} c_gamma exp(<alpha_gamma, w>).
/// The Fubini-Study volume density is det of the complex Hessian of
/// log|z|^2; the measure is normalized so that the total mass of a variety
/// equals its degree d = n! vol(P) (kappa_n = pi^{-n} folded into weights).
///
/// Dimension-zero cycles are finite point configurations; integrals reduce
/// to exact sums with unit weights.
///
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <variant>
#include <vector>

#include "chowbal/linalg.hpp"
#include "chowbal/torus.hpp"

namespace chowbal {

// ---------------------------------------------------------------------------
// Lattice polytopes (n <= 3, exact integer arithmetic on scaled vertices)
// ---------------------------------------------------------------------------

namespace poly_detail {

using Int = long long;
using Wide = __int128;

struct HalfSpace {
  std::vector<Int> normal;  // inward form: normal . x <= offset, scaled coords
  Int offset = 0;
};

inline Int igcd(Int a, Int b) { return std::gcd(std::abs(a), std::abs(b)); }

}  // namespace poly_detail

struct LatticePolytope {
  int dimension = 0;                                // n
  std::vector<std::vector<double>> vertices;        // as given (rational values)
  long long scale = 1;                              // common denominator
  std::vector<std::vector<long long>> scaled_vertices;
  std::vector<poly_detail::HalfSpace> facets;       // exact H-representation
  std::vector<Eigen::VectorXi> lattice_points;      // sorted lexicographically
  long long degree = 0;                             // n! * EuclideanVolume, exact

  static LatticePolytope from_vertices(int n, const std::vector<std::vector<double>>& verts);

  bool contains_lattice_point(const Eigen::VectorXi& p) const {
    using poly_detail::Wide;
    for (const auto& f : facets) {
      Wide dot = 0;
      for (int k = 0; k < dimension; ++k)
        dot += static_cast<Wide>(f.normal[k]) * static_cast<Wide>(p[k]) * static_cast<Wide>(scale);
      if (dot > static_cast<Wide>(f.offset)) return false;
    }
    return true;
  }
};

namespace poly_detail {

inline void hull_1d(LatticePolytope& p) {
  Int lo = p.scaled_vertices[0][0], hi = lo;
  for (const auto& v : p.scaled_vertices) {
    lo = std::min(lo, v[0]);
    hi = std::max(hi, v[0]);
  }
  if (lo == hi) throw std::invalid_argument("polytope is not full-dimensional");
  p.facets.push_back({{-1}, -lo});
  p.facets.push_back({{1}, hi});
  p.degree = (hi - lo) / p.scale;
  if ((hi - lo) % p.scale != 0)
    throw std::invalid_argument("degree n! vol is not an integer for these vertices");
}

inline Wide cross2(const std::vector<Int>& o, const std::vector<Int>& a, const std::vector<Int>& b) {
  return static_cast<Wide>(a[0] - o[0]) * (b[1] - o[1]) -
         static_cast<Wide>(a[1] - o[1]) * (b[0] - o[0]);
}

inline void hull_2d(LatticePolytope& p) {
  auto pts = p.scaled_vertices;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw std::invalid_argument("polytope is not full-dimensional");
  // Andrew monotone chain
  std::vector<std::vector<Int>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& q : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], q) <= 0) --k;
    hull[k++] = q;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw std::invalid_argument("polytope is not full-dimensional");

  Wide area2 = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area2 += static_cast<Wide>(a[0]) * b[1] - static_cast<Wide>(a[1]) * b[0];
    // ccw edge a->b: inward normal keeps the interior on the left
    Int nx = b[1] - a[1], ny = a[0] - b[0];  // outward for ccw
    const Int g = std::max<Int>(1, igcd(nx, ny));
    nx /= g;
    ny /= g;
    p.facets.push_back({{nx, ny}, nx * a[0] + ny * a[1]});
  }
  if (area2 <= 0) throw std::invalid_argument("polytope is not full-dimensional");
  const Wide s2 = static_cast<Wide>(p.scale) * p.scale;
  if (area2 % s2 != 0)
    throw std::invalid_argument("degree n! vol is not an integer for these vertices");
  p.degree = static_cast<long long>(area2 / s2);
}

inline void hull_3d(LatticePolytope& p) {
  auto pts = p.scaled_vertices;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t m = pts.size();
  if (m < 4) throw std::invalid_argument("polytope is not full-dimensional");

  // facet candidates from vertex triples, kept when all points lie on one side
  std::vector<std::pair<std::vector<Int>, Int>> planes;
  bool full_dim = false;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      for (std::size_t l = j + 1; l < m; ++l) {
        Int ux = pts[j][0] - pts[i][0], uy = pts[j][1] - pts[i][1], uz = pts[j][2] - pts[i][2];
        Int vx = pts[l][0] - pts[i][0], vy = pts[l][1] - pts[i][1], vz = pts[l][2] - pts[i][2];
        std::vector<Int> nrm = {uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx};
        if (nrm[0] == 0 && nrm[1] == 0 && nrm[2] == 0) continue;
        Int g = igcd(igcd(nrm[0], nrm[1]), nrm[2]);
        for (auto& c : nrm) c /= g;
        Wide off = static_cast<Wide>(nrm[0]) * pts[i][0] + static_cast<Wide>(nrm[1]) * pts[i][1] +
                   static_cast<Wide>(nrm[2]) * pts[i][2];
        bool above = false, below = false;
        for (const auto& q : pts) {
          const Wide d = static_cast<Wide>(nrm[0]) * q[0] + static_cast<Wide>(nrm[1]) * q[1] +
                         static_cast<Wide>(nrm[2]) * q[2] - off;
          if (d > 0) above = true;
          if (d < 0) below = true;
        }
        if (above && below) {
          full_dim = true;
          continue;
        }
        if (above) {  // flip to keep interior below
          for (auto& c : nrm) c = -c;
          off = -off;
        }
        planes.emplace_back(nrm, static_cast<Int>(off));
      }
  if (!full_dim && planes.size() < 4)
    throw std::invalid_argument("polytope is not full-dimensional");
  std::sort(planes.begin(), planes.end());
  planes.erase(std::unique(planes.begin(), planes.end()), planes.end());
  if (planes.size() < 4) throw std::invalid_argument("polytope is not full-dimensional");
  for (auto& [nrm, off] : planes) p.facets.push_back({nrm, off});

  // 6 * volume by tetrahedra fanned from vertex 0 over facets avoiding it
  const auto& v0 = pts[0];
  Wide vol6 = 0;
  for (const auto& [nrm, off] : planes) {
    const Wide d0 = static_cast<Wide>(nrm[0]) * v0[0] + static_cast<Wide>(nrm[1]) * v0[1] +
                    static_cast<Wide>(nrm[2]) * v0[2] - off;
    if (d0 == 0) continue;  // facet contains v0
    std::vector<std::vector<Int>> on;
    for (const auto& q : pts) {
      const Wide d = static_cast<Wide>(nrm[0]) * q[0] + static_cast<Wide>(nrm[1]) * q[1] +
                     static_cast<Wide>(nrm[2]) * q[2] - off;
      if (d == 0) on.push_back(q);
    }
    if (on.size() < 3) continue;
    // order facet vertices by angle about their centroid in the facet plane
    double cx = 0, cy = 0, cz = 0;
    for (const auto& q : on) {
      cx += q[0];
      cy += q[1];
      cz += q[2];
    }
    cx /= on.size();
    cy /= on.size();
    cz /= on.size();
    Eigen::Vector3d nn(static_cast<double>(nrm[0]), static_cast<double>(nrm[1]),
                       static_cast<double>(nrm[2]));
    nn.normalize();
    Eigen::Vector3d e1 = nn.unitOrthogonal(), e2 = nn.cross(e1);
    std::sort(on.begin(), on.end(), [&](const auto& a, const auto& b) {
      const Eigen::Vector3d da(a[0] - cx, a[1] - cy, a[2] - cz), db(b[0] - cx, b[1] - cy, b[2] - cz);
      return std::atan2(da.dot(e2), da.dot(e1)) < std::atan2(db.dot(e2), db.dot(e1));
    });
    for (std::size_t t = 1; t + 1 < on.size(); ++t) {
      const auto &a = on[0], &b = on[t], &c = on[t + 1];
      const Wide ax = a[0] - v0[0], ay = a[1] - v0[1], az = a[2] - v0[2];
      const Wide bx = b[0] - v0[0], by = b[1] - v0[1], bz = b[2] - v0[2];
      const Wide cx2 = c[0] - v0[0], cy2 = c[1] - v0[1], cz2 = c[2] - v0[2];
      Wide det = ax * (by * cz2 - bz * cy2) - ay * (bx * cz2 - bz * cx2) +
                 az * (bx * cy2 - by * cx2);
      vol6 += det < 0 ? -det : det;
    }
  }
  const Wide s3 = static_cast<Wide>(p.scale) * p.scale * p.scale;
  if (vol6 <= 0) throw std::invalid_argument("polytope is not full-dimensional");
  if (vol6 % s3 != 0)
    throw std::invalid_argument("degree n! vol is not an integer for these vertices");
  p.degree = static_cast<long long>(vol6 / s3);
}

}  // namespace poly_detail

inline LatticePolytope LatticePolytope::from_vertices(int n,
                                                      const std::vector<std::vector<double>>& verts) {
  if (n < 1 || n > 3) throw std::invalid_argument("polytope dimension must be 1, 2 or 3");
  if (verts.empty()) throw std::invalid_argument("polytope needs vertices");
  LatticePolytope p;
  p.dimension = n;
  p.vertices = verts;

  long long scale = 1;
  std::vector<std::vector<std::pair<long long, long long>>> rat(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    if (static_cast<int>(verts[i].size()) != n)
      throw std::invalid_argument("vertex dimension mismatch");
    for (double c : verts[i]) {
      auto [num, den] = rational_approx(c, 1000000);
      rat[i].push_back({num, den});
      scale = std::lcm(scale, den);
      if (scale > 1000000000LL) throw std::invalid_argument("vertex denominators too large");
    }
  }
  p.scale = scale;
  for (const auto& row : rat) {
    std::vector<long long> sv;
    for (auto [num, den] : row) sv.push_back(num * (scale / den));
    p.scaled_vertices.push_back(std::move(sv));
  }

  if (n == 1) poly_detail::hull_1d(p);
  if (n == 2) poly_detail::hull_2d(p);
  if (n == 3) poly_detail::hull_3d(p);

  // bounding box scan with exact membership
  std::vector<long long> lo(n), hi(n);
  for (int k = 0; k < n; ++k) {
    long long mn = p.scaled_vertices[0][k], mx = mn;
    for (const auto& v : p.scaled_vertices) {
      mn = std::min(mn, v[k]);
      mx = std::max(mx, v[k]);
    }
    lo[k] = static_cast<long long>(std::floor(static_cast<double>(mn) / scale)) - 1;
    hi[k] = static_cast<long long>(std::ceil(static_cast<double>(mx) / scale)) + 1;
  }
  Eigen::VectorXi pt(n);
  std::function<void(int)> scan = [&](int axis) {
    if (axis == n) {
      if (p.contains_lattice_point(pt)) p.lattice_points.push_back(pt);
      return;
    }
    for (long long c = lo[axis]; c <= hi[axis]; ++c) {
      pt[axis] = static_cast<int>(c);
      scan(axis + 1);
    }
  };
  scan(0);
  std::sort(p.lattice_points.begin(), p.lattice_points.end(),
            [](const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
              return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                                  b.data() + b.size());
            });
  if (p.lattice_points.empty()) throw std::invalid_argument("no lattice points");
  return p;
}

/// The integer points of the polytope, lexicographically sorted.
inline std::vector<Eigen::VectorXi> enumerate_lattice_points(const LatticePolytope& p) {
  return p.lattice_points;
}

// ---------------------------------------------------------------------------
// Embedded varieties
// ---------------------------------------------------------------------------

struct MonomialEmbedding {
  Eigen::MatrixXi exponents;  // (N+1) x n, lattice point per basis monomial
  RVec coefficients;          // base coefficients c > 0 (the reference metric)
  long long degree = 0;       // d = n! vol(P)

  int n() const { return static_cast<int>(exponents.cols()); }
  int dim_v() const { return static_cast<int>(exponents.rows()); }

  static MonomialEmbedding from_polytope(const LatticePolytope& p, RVec coeffs,
                                         long long declared_degree) {
    MonomialEmbedding e;
    const int n1 = static_cast<int>(p.lattice_points.size());
    e.exponents.resize(n1, p.dimension);
    for (int i = 0; i < n1; ++i) e.exponents.row(i) = p.lattice_points[i].transpose();
    if (coeffs.size() == 0) coeffs = RVec::Ones(n1);
    if (coeffs.size() != n1)
      throw std::invalid_argument("coefficient count does not match lattice point count");
    if ((coeffs.array() <= 0.0).any())
      throw std::invalid_argument("coefficients must be positive");
    e.coefficients = std::move(coeffs);
    if (declared_degree != p.degree)
      throw std::invalid_argument("declared degree " + std::to_string(declared_degree) +
                                  " != n! vol = " + std::to_string(p.degree));
    e.degree = p.degree;
    return e;
  }

  static MonomialEmbedding from_data(Eigen::MatrixXi exps, RVec coeffs, long long degree) {
    MonomialEmbedding e;
    e.exponents = std::move(exps);
    e.coefficients = std::move(coeffs);
    e.degree = degree;
    if (e.coefficients.size() != e.exponents.rows())
      throw std::invalid_argument("coefficient count does not match exponent count");
    return e;
  }
};

struct PointConfiguration {
  std::vector<CVec> points;  // evaluation vectors in C^{N+1}; repeats allowed
  int ambient = 0;           // N+1

  static PointConfiguration from_points(std::vector<CVec> pts) {
    if (pts.empty()) throw std::invalid_argument("point configuration needs d >= 1 points");
    PointConfiguration c;
    c.ambient = static_cast<int>(pts.front().size());
    for (const auto& p : pts) {
      if (static_cast<int>(p.size()) != c.ambient)
        throw std::invalid_argument("point dimension mismatch");
      if (p.norm() == 0.0) throw std::invalid_argument("point configuration contains a zero vector");
    }
    c.points = std::move(pts);
    return c;
  }

  long long degree() const { return static_cast<long long>(points.size()); }
};

/// A polarized variety with its embedding data: monomial/toric or a finite
/// point configuration (dimension zero).
struct Variety {
  std::variant<MonomialEmbedding, PointConfiguration> model;

  bool is_points() const { return std::holds_alternative<PointConfiguration>(model); }
  const MonomialEmbedding& toric() const { return std::get<MonomialEmbedding>(model); }
  const PointConfiguration& points() const { return std::get<PointConfiguration>(model); }

  int n() const { return is_points() ? 0 : toric().n(); }
  int dim_v() const { return is_points() ? points().ambient : toric().dim_v(); }
  long long degree() const { return is_points() ? points().degree() : toric().degree; }
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

namespace quad_detail {

/// Gauss-Legendre nodes/weights on (-1,1) via the symmetric Jacobi matrix.
inline void gauss_legendre(int m, RVec& nodes, RVec& weights) {
  RMat j = RMat::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    j(k, k - 1) = j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<RMat> es(j);
  nodes = es.eigenvalues();
  weights.resize(m);
  for (int k = 0; k < m; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    weights[k] = 2.0 * v0 * v0;
  }
}

}  // namespace quad_detail

/// Tensor quadrature for the dense torus (C^*)^n in exponential coordinates:
/// radial axes use Gauss-Legendre on (-1,1) remapped by x = remap*atanh(u)
/// (the Jacobian is folded into the node weight), angular axes use the
/// periodic trapezoidal rule on [0, 2pi). Bit-identical given its metadata.
struct QuadratureGrid {
  int n = 0;
  int radial_nodes = 0;
  int angular_nodes = 0;
  double remap = 1.0;

  RVec radial_u;       // GL nodes on (-1,1)
  RVec radial_x;       // remapped coordinates
  RVec radial_w;       // GL weight * remap Jacobian
  RVec radial_cube_w;  // GL weight only
  RVec angular_theta;
  double angular_w = 0.0;

  std::size_t radial_count() const {
    std::size_t c = 1;
    for (int k = 0; k < n; ++k) c *= static_cast<std::size_t>(radial_nodes);
    return c;
  }
  std::size_t angular_count() const {
    std::size_t c = 1;
    for (int k = 0; k < n; ++k) c *= static_cast<std::size_t>(angular_nodes);
    return c;
  }
  std::size_t node_count() const { return radial_count() * angular_count(); }

  /// Sum of the reference-cube weights, (2 * 2pi)^n up to roundoff.
  double cube_weight_total() const {
    double s = 1.0;
    for (int k = 0; k < n; ++k) s *= radial_cube_w.sum() * angular_w * angular_nodes;
    return s;
  }
};

inline QuadratureGrid build_grid(int n, int radial_nodes, int angular_nodes, double remap) {
  if (n < 0) throw std::invalid_argument("build_grid: n must be >= 0");
  if (n > 0 && (radial_nodes < 2 || angular_nodes < 2))
    throw std::invalid_argument("build_grid: node counts must be >= 2");
  if (remap <= 0.0) throw std::invalid_argument("build_grid: remap must be > 0");
  QuadratureGrid g;
  g.n = n;
  g.radial_nodes = radial_nodes;
  g.angular_nodes = angular_nodes;
  g.remap = remap;
  if (n == 0) return g;
  quad_detail::gauss_legendre(radial_nodes, g.radial_u, g.radial_cube_w);
  g.radial_x.resize(radial_nodes);
  g.radial_w.resize(radial_nodes);
  for (int i = 0; i < radial_nodes; ++i) {
    const double u = g.radial_u[i];
    g.radial_x[i] = remap * std::atanh(u);
    g.radial_w[i] = g.radial_cube_w[i] * remap / (1.0 - u * u);
  }
  g.angular_theta.resize(angular_nodes);
  for (int j = 0; j < angular_nodes; ++j)
    g.angular_theta[j] = 2.0 * M_PI * static_cast<double>(j) / angular_nodes;
  g.angular_w = 2.0 * M_PI / angular_nodes;
  return g;
}

/// Measure normalization: with omega_FS scaled so that a line has unit mass,
/// omega_FS^n = (n!/pi^n) det(H) dx dtheta in torus coordinates, and the
/// total mass of a degree-d variety is d.
inline double kappa_n(int n) {
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  return fact * std::pow(M_PI, -n);
}

// ---------------------------------------------------------------------------
// Evaluation and Fubini-Study density
// ---------------------------------------------------------------------------

namespace eval_detail {

constexpr double kSafeExponent = 700.0;

/// Monomial vector zeta and its logarithmic derivatives before the basis
/// change; z = g^T zeta per the right action on the reference basis.
inline void monomials(const MonomialEmbedding& e, const CVec& w, CVec& zeta) {
  const int n1 = e.dim_v();
  zeta.resize(n1);
  for (int b = 0; b < n1; ++b) {
    Complex ex = 0.0;
    for (int k = 0; k < e.n(); ++k) ex += static_cast<double>(e.exponents(b, k)) * w[k];
    if (std::abs(ex.real()) > kSafeExponent)
      throw std::runtime_error("coordinate out of safe range for exp");
    zeta[b] = e.coefficients[b] * std::exp(ex);
  }
}

}  // namespace eval_detail

/// z_beta = sum_gamma g_{gamma beta} c_gamma exp(<alpha_gamma, w>).
inline CVec evaluate_embedding(const MonomialEmbedding& e, const OrbitPoint& g, const CVec& w) {
  if (w.size() != e.n()) throw std::invalid_argument("evaluate_embedding: bad coordinate size");
  CVec zeta;
  eval_detail::monomials(e, w, zeta);
  if (g.is_identity()) return zeta;
  return g.g.transpose() * zeta;
}

/// z together with the holomorphic derivatives dz/dw_j.
inline void evaluate_with_derivatives(const MonomialEmbedding& e, const OrbitPoint& g, const CVec& w,
                                      CVec& z, std::vector<CVec>& dz) {
  CVec zeta;
  eval_detail::monomials(e, w, zeta);
  const int n = e.n();
  dz.assign(n, CVec());
  const bool id = g.is_identity();
  z = id ? zeta : CVec(g.g.transpose() * zeta);
  for (int j = 0; j < n; ++j) {
    CVec dzeta(zeta.size());
    for (int b = 0; b < e.dim_v(); ++b) dzeta[b] = static_cast<double>(e.exponents(b, j)) * zeta[b];
    dz[j] = id ? dzeta : CVec(g.g.transpose() * dzeta);
  }
}

/// det of the complex Hessian H_{jk} = d^2 log|z|^2 / dw_j dwbar_k, by the
/// closed form (<dz_k|dz_j>|z|^2 - <z|dz_j><dz_k|z>) / |z|^4. Nonnegative up
/// to 1e-12 slack (H is positive semidefinite).
inline double fs_volume_density(const MonomialEmbedding& e, const OrbitPoint& g, const CVec& w) {
  CVec z;
  std::vector<CVec> dz;
  evaluate_with_derivatives(e, g, w, z, dz);
  const int n = e.n();
  const double zz = z.squaredNorm();
  if (zz == 0.0) throw std::runtime_error("evaluate_embedding produced the zero vector");
  CMat h(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      h(j, k) = (dz[k].dot(dz[j]) * zz - z.dot(dz[j]) * dz[k].dot(z)) / (zz * zz);
  const double det = h.determinant().real();
  const double scale = std::max(1.0, std::pow(h.norm(), n));
  if (det < -1e-12 * scale) {
    std::string coords;
    for (int k = 0; k < n; ++k)
      coords += (k ? ", " : "") + std::to_string(w[k].real()) + "+" + std::to_string(w[k].imag()) + "i";
    throw std::runtime_error("numerical degeneracy: negative volume density at w = (" + coords + ")");
  }
  return std::max(det, 0.0);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplePoint {
  CVec z;
  double density = 0.0;  // Fubini-Study volume density (1 for configurations)
};

/// Visit every sample of the variety in a fixed deterministic order. The
/// callback receives (z, density, weight); the weight already contains the
/// measure normalization, so sum(weight * density) converges to the degree.
/// `radial_slice`, when nonnegative, restricts a toric walk to one radial
/// multi-index (the unit of parallel work).
template <class F>
void for_each_sample(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                     F&& fn, long long radial_slice = -1) {
  if (variety.is_points()) {
    const auto& cfg = variety.points();
    const bool id = g.is_identity();
    for (const CVec& p : cfg.points) {
      CVec z = id ? p : CVec(g.g.transpose() * p);
      fn(z, 1.0, 1.0);
    }
    return;
  }
  const MonomialEmbedding& emb = variety.toric();
  const int n = emb.n();
  if (grid.n != n) throw std::invalid_argument("grid dimension does not match variety");
  const double kn = kappa_n(n);
  const std::size_t rc = grid.radial_count(), ac = grid.angular_count();
  std::vector<int> ri(n), ai(n);
  CVec w(n);
  const std::size_t r_begin = radial_slice < 0 ? 0 : static_cast<std::size_t>(radial_slice);
  const std::size_t r_end = radial_slice < 0 ? rc : r_begin + 1;
  for (std::size_t r = r_begin; r < r_end; ++r) {
    std::size_t rr = r;
    double wr = kn;
    for (int k = 0; k < n; ++k) {
      ri[k] = static_cast<int>(rr % grid.radial_nodes);
      rr /= grid.radial_nodes;
      wr *= grid.radial_w[ri[k]];
    }
    for (std::size_t a = 0; a < ac; ++a) {
      std::size_t aa = a;
      double weight = wr;
      for (int k = 0; k < n; ++k) {
        ai[k] = static_cast<int>(aa % grid.angular_nodes);
        aa /= grid.angular_nodes;
        weight *= grid.angular_w;
        w[k] = Complex(grid.radial_x[ri[k]], grid.angular_theta[ai[k]]);
      }
      CVec z;
      std::vector<CVec> dz;
      evaluate_with_derivatives(emb, g, w, z, dz);
      const double zz = z.squaredNorm();
      CMat h(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          h(j, k) = (dz[k].dot(dz[j]) * zz - z.dot(dz[j]) * dz[k].dot(z)) / (zz * zz);
      const double det = h.determinant().real();
      if (det < -1e-12 * std::max(1.0, std::pow(h.norm(), n)))
        throw std::runtime_error("numerical degeneracy: negative volume density at radial node " +
                                 std::to_string(r));
      fn(z, std::max(det, 0.0), weight);
    }
  }
}

/// Materialized sample stream (tests and small grids; the integrators stream).
inline std::vector<std::pair<SamplePoint, double>> sample_variety(const Variety& variety,
                                                                  const OrbitPoint& g,
                                                                  const QuadratureGrid& grid) {
  std::vector<std::pair<SamplePoint, double>> out;
  for_each_sample(variety, g, grid, [&](const CVec& z, double density, double weight) {
    out.push_back({SamplePoint{z, density}, weight});
  });
  return out;
}

}  // namespace chowbal
