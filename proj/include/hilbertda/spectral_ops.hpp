#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <variant>

#include "hilbertda/core.hpp"

namespace hilbertda::spectral_ops {

struct NonFiniteResult : Error {
  using Error::Error;
};
struct SingularInnerSystem : Error {
  using Error::Error;
};

/** Sine-mode basis on an m-by-n interior grid; modes (k,l), 1<=k<=m, 1<=l<=n. */
struct SineBasis {
  int m = 0;
  int n = 0;
};

/** Standard coordinate basis of R^dim. */
struct AbstractBasis {
  Eigen::Index dim = 0;
};

using Basis = std::variant<SineBasis, AbstractBasis>;

inline Eigen::Index basis_size(const Basis& b) {
  if (const auto* s = std::get_if<SineBasis>(&b))
    return static_cast<Eigen::Index>(s->m) * s->n;
  return std::get<AbstractBasis>(b).dim;
}

/**
 * Self-adjoint operator given by its eigenvalues on a labeled orthonormal
 * basis. Sine-basis eigenvalues are stored flattened with index
 * (k-1)*n + (l-1).
 */
struct SpectralOperator {
  Basis basis;
  Vector eigenvalues;
  bool psd = false;

  Eigen::Index size() const { return basis_size(basis); }

  /** Sine-basis accessor, 1-based mode indices. */
  double eigenvalue(int k, int l) const {
    const auto& s = std::get<SineBasis>(basis);
    return eigenvalues[static_cast<Eigen::Index>(k - 1) * s.n + (l - 1)];
  }
};

inline SpectralOperator make_sine_operator(int m, int n, Vector eigs,
                                           bool psd) {
  SpectralOperator op{SineBasis{m, n}, std::move(eigs), psd};
  if (op.eigenvalues.size() != op.size())
    throw Error("eigenvalue count does not match sine basis size");
  return op;
}

inline SpectralOperator make_abstract_operator(Vector eigs, bool psd) {
  const Eigen::Index d = eigs.size();
  return SpectralOperator{AbstractBasis{d}, std::move(eigs), psd};
}

/** Thin SVD truncated at singular values below 1e-12 * sigma_max. */
struct SvdFactors {
  DenseOp left;    // rows x rank, orthonormal columns
  Vector sigma;    // descending, all > tolerance
  DenseOp right;   // cols x rank, orthonormal columns
  Eigen::Index rank = 0;
};

inline SvdFactors svd_factors(const DenseOp& a) {
  Eigen::JacobiSVD<DenseOp> svd(a,
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  const double tol = 1e-12 * smax;
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > tol && s[rank] > 0.0) ++rank;
  SvdFactors f;
  f.left = svd.matrixU().leftCols(rank);
  f.sigma = s.head(rank);
  f.right = svd.matrixV().leftCols(rank);
  f.rank = rank;
  return f;
}

/** Rank-one operator x (x) y acting as z -> <y,z> x; entries x_i * y_j. */
inline DenseOp tensor_product(const Vector& x, const Vector& y) {
  return x * y.transpose();
}

struct OperatorNorms {
  double op_norm = 0;
  double hs_norm = 0;
  double trace_norm = 0;
};

/**
 * The three operator norms from the singular values: max, l2, and l1.
 * Always op_norm <= hs_norm <= trace_norm.
 */
inline OperatorNorms operator_norms(const DenseOp& a) {
  if (a.size() == 0) return {};
  Eigen::JacobiSVD<DenseOp> svd(a);
  const Vector& s = svd.singularValues();
  OperatorNorms n;
  n.op_norm = s.size() ? s[0] : 0.0;
  n.hs_norm = s.norm();
  n.trace_norm = s.sum();
  return n;
}

/**
 * Spectral calculus: map eigenvalues elementwise, same basis.
 * Throws NonFiniteResult if f leaves the reals at any eigenvalue.
 */
template <class F>
SpectralOperator apply_function(F&& f, const SpectralOperator& a) {
  SpectralOperator out = a;
  bool psd = true;
  for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
    const double v = f(a.eigenvalues[i]);
    if (!std::isfinite(v))
      throw NonFiniteResult("apply_function: f(eigenvalue) is not finite");
    out.eigenvalues[i] = v;
    psd = psd && v >= 0.0;
  }
  out.psd = psd;
  return out;
}

using LinearSolveHandle = std::function<Vector(const Vector&)>;

/**
 * Sherman-Morrison-Woodbury solve:
 *   (A + U C V)^{-1} rhs
 *     = A^{-1} rhs - A^{-1} U (C^{-1} + V A^{-1} U)^{-1} V A^{-1} rhs
 * with A^{-1} available only through the handle. Throws
 * SingularInnerSystem when the small system is singular to 1e-12.
 */
inline Vector smw_solve(const LinearSolveHandle& a_inv_apply, const DenseOp& u,
                        const DenseOp& c_inv, const DenseOp& v,
                        const Vector& rhs) {
  const Vector ai_rhs = a_inv_apply(rhs);
  if (u.cols() == 0 || u.size() == 0) return ai_rhs;

  DenseOp ai_u(u.rows(), u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    ai_u.col(j) = a_inv_apply(u.col(j));

  const DenseOp inner = c_inv + v * ai_u;
  Eigen::JacobiSVD<DenseOp> svd(inner,
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[s.size() - 1] <= 1e-12 * s[0] || s[0] == 0.0)
    throw SingularInnerSystem("smw_solve: inner system singular");
  const Vector y = svd.solve(v * ai_rhs);
  return ai_rhs - ai_u * y;
}

/**
 * Checks that Range(A A^T) = Range(A). True for every A in exact
 * arithmetic; exposed as a diagnostic of the SVD plumbing. Ranges are
 * compared through their orthogonal projectors, whose difference has
 * operator norm sin(largest principal angle); the angle tolerance is
 * 1e-8.
 */
inline bool range_equal_diagnostic(const DenseOp& a) {
  const SvdFactors fa = svd_factors(a);
  const SvdFactors fs = svd_factors(DenseOp(a * a.transpose()));
  if (fa.rank != fs.rank) return false;
  if (fa.rank == 0) return true;  // both ranges are {0}
  const DenseOp pa = fa.left * fa.left.transpose();
  const DenseOp ps = fs.left * fs.left.transpose();
  return operator_norms(DenseOp(pa - ps)).op_norm < 1e-8;
}

}  // namespace hilbertda::spectral_ops
