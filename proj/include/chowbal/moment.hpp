///
/// \file moment.hpp
///
/// Pointwise moment maps m0, m, m0^sigma on projective space, their
/// integrals mu0, mu, mu0^sigma over an embedded variety, the obstruction
/// characters F and F^sigma on t, and the convex functional G on the torus
/// with gradient and Hessian.
///
/// Everything integral-valued routes through one Gram kernel
///     M^sigma = integral of (sigma z)(sigma z)^* / |z|^2
/// whose trace is G(sigma) and whose trace-free part is mu0^sigma. The
/// kernel reduces over radial slices in a fixed order, so the parallel and
/// sequential paths produce identical bits.
///
#pragma once

#include <future>
#include <optional>

#include "chowbal/embedding.hpp"
#include "chowbal/linalg.hpp"
#include "chowbal/torus.hpp"

namespace chowbal {

/// m0: z -> (z z^*/|z|^2) - Id/(N+1), Hermitian and exactly trace-free.
inline CMat m0(const CVec& z) {
  const double zz = z.squaredNorm();
  if (zz == 0.0) throw std::invalid_argument("m0: zero vector");
  const auto n = z.size();
  CMat m = (z * z.adjoint()) / zz;
  m -= CMat::Identity(n, n) / static_cast<double>(n);
  return m;
}

/// m: z -> z z^*/|z|^2, the rank-one projector onto the line of z; trace 1.
inline CMat m_full(const CVec& z) {
  const double zz = z.squaredNorm();
  if (zz == 0.0) throw std::invalid_argument("m_full: zero vector");
  return (z * z.adjoint()) / zz;
}

/// m0^sigma: trace-free part of (sigma z)(sigma z)^* / |z|^2. The
/// denominator is |z|^2, not |sigma z|^2.
inline CMat m0_sigma(const CMat& sigma, const CVec& z) {
  const double zz = z.squaredNorm();
  if (zz == 0.0) throw std::invalid_argument("m0_sigma: zero vector");
  CVec sz = sigma * z;
  return trace_free((sz * sz.adjoint()) / zz);
}

struct IntegratorOptions {
  int threads = 1;
  bool estimate_error = false;  // Richardson comparison against the half grid
};

struct GramResult {
  CMat m;             // integral of (sigma z)(sigma z)^*/|z|^2
  double mass = 0.0;  // integral of the volume density (degree at sigma = Id)
};

namespace integrate_detail {

struct Accum {
  CMat m;
  double mass = 0.0;
  void init(int dim) {
    m = CMat::Zero(dim, dim);
    mass = 0.0;
  }
  void add(const Accum& o) {
    m += o.m;
    mass += o.mass;
  }
};

template <class F>
inline void slice_range(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                        const F& node_fn, std::size_t begin, std::size_t end) {
  for (std::size_t s = begin; s < end; ++s)
    for_each_sample(variety, g, grid, node_fn, static_cast<long long>(s));
}

}  // namespace integrate_detail

/// The Gram form M^sigma. sigma may be empty (treated as the identity).
/// Point configurations reduce to exact finite sums and ignore the grid.
inline GramResult integrate_gram(const Variety& variety, const OrbitPoint& g,
                                 const QuadratureGrid& grid, const CMat& sigma,
                                 const IntegratorOptions& opts = {}) {
  const int dim = variety.dim_v();
  const bool twist = sigma.size() != 0;
  if (twist && (sigma.rows() != dim || sigma.cols() != dim))
    throw std::invalid_argument("integrate_gram: sigma dimension mismatch");

  auto make_accum_fn = [&](integrate_detail::Accum& acc) {
    return [&acc, twist, &sigma](const CVec& z, double density, double weight) {
      const double zz = z.squaredNorm();
      const double f = weight * density / zz;
      if (twist) {
        CVec sz = sigma * z;
        acc.m.noalias() += f * (sz * sz.adjoint());
        acc.mass += weight * density;
      } else {
        acc.m.noalias() += f * (z * z.adjoint());
        acc.mass += weight * density;
      }
    };
  };

  integrate_detail::Accum total;
  total.init(dim);

  if (variety.is_points() || variety.n() == 0) {
    auto fn = make_accum_fn(total);
    for_each_sample(variety, g, grid, fn);
  } else {
    const std::size_t slices = grid.radial_count();
    const int threads = std::max(1, opts.threads);
    if (threads == 1 || slices < 2) {
      auto fn = make_accum_fn(total);
      integrate_detail::slice_range(variety, g, grid, fn, 0, slices);
    } else {
      const std::size_t nchunk = std::min<std::size_t>(threads, slices);
      std::vector<integrate_detail::Accum> partial(nchunk);
      std::vector<std::future<void>> jobs;
      for (std::size_t c = 0; c < nchunk; ++c) {
        partial[c].init(dim);
        const std::size_t b = slices * c / nchunk, e = slices * (c + 1) / nchunk;
        jobs.push_back(std::async(std::launch::async, [&, c, b, e]() {
          auto fn = make_accum_fn(partial[c]);
          integrate_detail::slice_range(variety, g, grid, fn, b, e);
        }));
      }
      for (auto& j : jobs) j.get();
      // fixed-order combine keeps the reduction deterministic
      for (std::size_t c = 0; c < nchunk; ++c) total.add(partial[c]);
    }
  }

  if (!total.m.allFinite() || !std::isfinite(total.mass))
    throw std::runtime_error("integrate_gram: non-finite accumulation (degenerate node)");
  return GramResult{hermitize(total.m), total.mass};
}

/// Numerical moment-map value with its mass and, on request, a grid-halving
/// error estimate.
struct MomentResult {
  HermitianElement value;
  double mass = 0.0;
  std::optional<double> quad_error;
  CMat g_at;
};

namespace integrate_detail {

inline QuadratureGrid half_grid(const QuadratureGrid& grid) {
  return build_grid(grid.n, std::max(2, grid.radial_nodes / 2), std::max(2, grid.angular_nodes / 2),
                    grid.remap);
}

}  // namespace integrate_detail

inline MomentResult mu0(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                        const IntegratorOptions& opts = {}) {
  GramResult gr = integrate_gram(variety, g, grid, CMat(), opts);
  MomentResult out;
  out.value = HermitianElement::from(trace_free(gr.m), true);
  out.mass = gr.mass;
  out.g_at = g.g;
  if (opts.estimate_error && !variety.is_points()) {
    IntegratorOptions o2 = opts;
    o2.estimate_error = false;
    GramResult gh = integrate_gram(variety, g, integrate_detail::half_grid(grid), CMat(), o2);
    out.quad_error = (trace_free(gr.m) - trace_free(gh.m)).norm();
  }
  return out;
}

inline MomentResult mu_full(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                            const IntegratorOptions& opts = {}) {
  GramResult gr = integrate_gram(variety, g, grid, CMat(), opts);
  MomentResult out;
  out.value = HermitianElement::from(gr.m);
  out.mass = gr.mass;
  out.g_at = g.g;
  return out;
}

inline MomentResult mu0_sigma(const OrbitPoint& sigma, const Variety& variety, const OrbitPoint& g,
                              const QuadratureGrid& grid, const IntegratorOptions& opts = {}) {
  GramResult gr = integrate_gram(variety, g, grid, sigma.g, opts);
  MomentResult out;
  out.value = HermitianElement::from(trace_free(gr.m), true);
  out.mass = gr.mass;
  out.g_at = g.g;
  if (opts.estimate_error && !variety.is_points()) {
    IntegratorOptions o2 = opts;
    o2.estimate_error = false;
    GramResult gh = integrate_gram(variety, g, integrate_detail::half_grid(grid), sigma.g, o2);
    out.quad_error = (trace_free(gr.m) - trace_free(gh.m)).norm();
  }
  return out;
}

namespace char_detail {

inline void require_in_t(const CMat& xi, const TorusData& td, const char* who) {
  const CMat p = project_t(xi, td);
  if ((hermitize(xi) - p).norm() > 1e-8 * std::max(1.0, xi.norm()))
    throw std::invalid_argument(std::string(who) + ": direction not in t");
}

}  // namespace char_detail

/// F(xi) = <mu0, xi>. Constant along the block-group orbit for xi in t.
inline double character_F(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                          const CMat& xi, const TorusData& td, const IntegratorOptions& opts = {}) {
  char_detail::require_in_t(xi, td, "character_F");
  MomentResult m = mu0(variety, g, grid, opts);
  return herm_inner(m.value.mat, xi);
}

/// F^sigma(xi) = <mu0^sigma, xi>; F^{Id} = F.
inline double character_F_sigma(const Variety& variety, const OrbitPoint& g,
                                const QuadratureGrid& grid, const OrbitPoint& sigma, const CMat& xi,
                                const TorusData& td, const IntegratorOptions& opts = {}) {
  char_detail::require_in_t(xi, td, "character_F_sigma");
  MomentResult m = mu0_sigma(sigma, variety, g, grid, opts);
  return herm_inner(m.value.mat, xi);
}

/// G(sigma) = integral of |sigma z|^2/|z|^2; equals tr M^sigma.
inline double functional_G(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                           const OrbitPoint& sigma, const IntegratorOptions& opts = {}) {
  return integrate_gram(variety, g, grid, sigma.g, opts).m.trace().real();
}

/// dG/da_k = 2 tr(M^sigma D_k) in the corrected weight frame a -> exp(sum a_k D_k).
inline RVec grad_G(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                   const TorusData& td, const RVec& a, const IntegratorOptions& opts = {}) {
  OrbitPoint sigma = sigma_from_coords(td, a);
  GramResult gr = integrate_gram(variety, g, grid, sigma.g, opts);
  RVec out(td.rank);
  for (int k = 0; k < td.rank; ++k) {
    double s = 0.0;
    for (int i = 0; i < td.dim(); ++i) s += gr.m(i, i).real() * td.corrected(i, k);
    out[k] = 2.0 * s;
  }
  return out;
}

/// Hessian d2G/da_k da_l = 4 tr(M^sigma D_k D_l); positive semidefinite.
inline RMat hess_G(const Variety& variety, const OrbitPoint& g, const QuadratureGrid& grid,
                   const TorusData& td, const RVec& a, const IntegratorOptions& opts = {}) {
  OrbitPoint sigma = sigma_from_coords(td, a);
  GramResult gr = integrate_gram(variety, g, grid, sigma.g, opts);
  RMat out = RMat::Zero(td.rank, td.rank);
  for (int k = 0; k < td.rank; ++k)
    for (int l = k; l < td.rank; ++l) {
      double s = 0.0;
      for (int i = 0; i < td.dim(); ++i)
        s += gr.m(i, i).real() * td.corrected(i, k) * td.corrected(i, l);
      out(k, l) = out(l, k) = 4.0 * s;
    }
  return out;
}

/// Closed form of G along the torus through a fixed base point: since sigma
/// is diagonal it pulls out of the Gram integral, G(a) = sum_i M_ii e^{2 t_i}
/// with t = corrected * a. One integral serves the whole optimal-weight solve.
struct WeightObjective {
  RVec masses;     // diagonal of the Gram at the base point
  RMat corrected;  // (N+1) x r

  static WeightObjective at_base(const Variety& variety, const OrbitPoint& g,
                                 const QuadratureGrid& grid, const TorusData& td,
                                 const IntegratorOptions& opts = {}) {
    GramResult gr = integrate_gram(variety, g, grid, CMat(), opts);
    WeightObjective wo;
    wo.masses = gr.m.diagonal().real();
    wo.corrected = td.corrected;
    return wo;
  }

  RVec exponents(const RVec& a) const { return 2.0 * (corrected * a); }

  double value(const RVec& a) const {
    const RVec t = exponents(a);
    double s = 0.0;
    for (Eigen::Index i = 0; i < masses.size(); ++i) s += masses[i] * std::exp(t[i]);
    return s;
  }

  RVec grad(const RVec& a) const {
    const RVec t = exponents(a);
    RVec out = RVec::Zero(corrected.cols());
    for (Eigen::Index i = 0; i < masses.size(); ++i) {
      const double f = 2.0 * masses[i] * std::exp(t[i]);
      out += f * corrected.row(i).transpose();
    }
    return out;
  }

  RMat hess(const RVec& a) const {
    const RVec t = exponents(a);
    RMat out = RMat::Zero(corrected.cols(), corrected.cols());
    for (Eigen::Index i = 0; i < masses.size(); ++i) {
      const double f = 4.0 * masses[i] * std::exp(t[i]);
      out += f * (corrected.row(i).transpose() * corrected.row(i));
    }
    return out;
  }
};

}  // namespace chowbal
