///
/// \file linalg.hpp
///
/// Hermitian matrix utilities shared by every module: the trace pairing
/// <A,B> = tr(A B*), trace-free parts, and matrix functions (powers, log)
/// through self-adjoint eigendecomposition.
///
#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace chowbal {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline CMat hermitize(const CMat& a) { return 0.5 * (a + a.adjoint()); }

inline bool is_hermitian(const CMat& a, double tol = 1e-12) {
  return (a - a.adjoint()).norm() <= tol * std::max(1.0, a.norm());
}

/// Trace pairing on Hermitian matrices; real by symmetry.
inline double herm_inner(const CMat& a, const CMat& b) {
  return (a * b.adjoint()).trace().real();
}

inline double herm_norm(const CMat& a) { return std::sqrt(std::max(0.0, herm_inner(a, a))); }

inline CMat trace_free(const CMat& a) {
  const auto n = a.rows();
  return a - (a.trace() / static_cast<double>(n)) * CMat::Identity(n, n);
}

/// A^p for Hermitian A via eigendecomposition. Negative or fractional p
/// requires positive eigenvalues; eigenvalues below `floor` are rejected.
inline CMat herm_power(const CMat& a, double p, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  if (es.info() != Eigen::Success) throw std::runtime_error("herm_power: eigensolver failed");
  RVec ev = es.eigenvalues();
  const bool needs_positive = (p < 0.0) || (p != std::floor(p));
  RVec fv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (needs_positive && ev[i] <= floor)
      throw std::runtime_error("herm_power: matrix not positive definite (eigenvalue " +
                               std::to_string(ev[i]) + ")");
    fv[i] = std::pow(ev[i], p);
  }
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMat herm_log(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  if (es.info() != Eigen::Success) throw std::runtime_error("herm_log: eigensolver failed");
  RVec ev = es.eigenvalues();
  RVec fv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] <= 0.0) throw std::runtime_error("herm_log: matrix not positive definite");
    fv[i] = std::log(ev[i]);
  }
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMat herm_exp(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  if (es.info() != Eigen::Success) throw std::runtime_error("herm_exp: eigensolver failed");
  RVec fv = es.eigenvalues().array().exp();
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

inline double min_eigenvalue(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  return es.eigenvalues().minCoeff();
}

/// Checked Hermitian value. Moment-map values and Lie-algebra elements are
/// carried in the Hermitian convention (the anti-Hermitian factor i of the
/// symplectic picture is implicit); the pairing is tr(A B*).
struct HermitianElement {
  CMat mat;
  bool trace_free_flag = false;

  static HermitianElement from(CMat m, bool require_trace_free = false, double tol = 1e-12) {
    if (!is_hermitian(m, tol)) throw std::invalid_argument("HermitianElement: matrix not Hermitian");
    HermitianElement h;
    h.mat = hermitize(std::move(m));
    h.trace_free_flag = require_trace_free;
    if (require_trace_free && std::abs(h.mat.trace()) > tol * std::max(1.0, h.mat.norm()))
      throw std::invalid_argument("HermitianElement: matrix not trace-free");
    return h;
  }
};

}  // namespace chowbal
