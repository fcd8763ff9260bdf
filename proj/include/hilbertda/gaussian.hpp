#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "hilbertda/core.hpp"
#include "hilbertda/rng.hpp"
#include "hilbertda/spectral_ops.hpp"

namespace hilbertda::gaussian {

struct DecompositionFailure : Error {
  using Error::Error;
};
struct RankDeficient : Error {
  using Error::Error;
};

/**
 * N(a, Q) at finite dimension. The covariance is kept in eigenform
 * (basis columns and eigenvalues); eigenvalues in [-1e-12, 0) are
 * clamped to zero and anything lower is rejected as not PSD.
 */
class GaussianSpec {
 public:
  /** Dense symmetric covariance; symmetry checked to 1e-10. */
  static GaussianSpec dense(Vector mean, const DenseOp& cov) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw Error("GaussianSpec: covariance shape does not match mean");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw Error("GaussianSpec: covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<DenseOp> es(0.5 * (cov + cov.transpose()));
    if (es.info() != Eigen::Success)
      throw DecompositionFailure("GaussianSpec: eigendecomposition failed");
    return GaussianSpec(std::move(mean), es.eigenvectors(),
                        clamp(es.eigenvalues()));
  }

  /** Diagonal covariance in the standard coordinate basis. */
  static GaussianSpec diagonal(Vector mean, const Vector& eigenvalues) {
    if (eigenvalues.size() != mean.size())
      throw Error("GaussianSpec: eigenvalue count does not match mean");
    return GaussianSpec(std::move(mean), DenseOp(), clamp(eigenvalues));
  }

  /** Covariance given as a SpectralOperator on the abstract basis. */
  static GaussianSpec spectral(Vector mean, const spectral_ops::SpectralOperator& cov) {
    const auto* basis = std::get_if<spectral_ops::AbstractBasis>(&cov.basis);
    if (!basis) throw Error("GaussianSpec: operator is not on the abstract basis");
    if (basis->dim != mean.size())
      throw Error("GaussianSpec: operator dimension does not match mean");
    return diagonal(std::move(mean), cov.eigenvalues);
  }

  /** Standard normal N(0, I_dim). */
  static GaussianSpec standard(Eigen::Index dim) {
    return diagonal(Vector::Zero(dim), Vector::Ones(dim));
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  bool is_diagonal() const { return basis_.size() == 0; }

  /** Covariance as a dense matrix (reassembled when diagonal). */
  DenseOp covariance() const {
    if (is_diagonal()) return DenseOp(eigenvalues_.asDiagonal());
    return basis_ * eigenvalues_.asDiagonal() * basis_.transpose();
  }

  double trace() const { return eigenvalues_.sum(); }

  /** E|X|^2 = |a|^2 + tr Q. */
  double mean_sq_norm() const { return mean_.squaredNorm() + trace(); }

  /** <Qh, h>. */
  double quad_form(const Vector& h) const {
    if (is_diagonal()) return eigenvalues_.dot(h.cwiseAbs2());
    const Vector y = basis_.transpose() * h;
    return eigenvalues_.dot(y.cwiseAbs2());
  }

  /** One draw a + sum_n lambda_n^{1/2} xi_n u_n; xi_n at rng coordinate n. */
  Vector draw(const rng::CounterRng& rng_) const {
    Vector xi(dim());
    for (Eigen::Index i = 0; i < dim(); ++i)
      xi[i] = std::sqrt(eigenvalues_[i]) * rng_.normal(static_cast<std::uint64_t>(i));
    if (is_diagonal()) return mean_ + xi;
    return mean_ + basis_ * xi;
  }

 private:
  GaussianSpec(Vector mean, DenseOp basis, Vector eigenvalues)
      : mean_(std::move(mean)), basis_(std::move(basis)),
        eigenvalues_(std::move(eigenvalues)) {}

  static Vector clamp(Vector eigenvalues) {
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
      if (eigenvalues[i] < -1e-12)
        throw Error("GaussianSpec: covariance eigenvalue below -1e-12");
      if (eigenvalues[i] < 0) eigenvalues[i] = 0;
    }
    return eigenvalues;
  }

  Vector mean_;
  DenseOp basis_;  // empty means the standard basis
  Vector eigenvalues_;
};

/** Draws stored one per column, with the generating spec and seed. */
struct SampleBatch {
  GaussianSpec spec;
  DenseOp draws;  // dim x count
  std::uint64_t seed = 0;

  Eigen::Index count() const { return draws.cols(); }
};

/** count i.i.d. draws; draw j uses the rng member key j. */
inline SampleBatch sample(const GaussianSpec& spec, Eigen::Index count,
                          const rng::CounterRng& rng_) {
  DenseOp draws(spec.dim(), count);
  for (Eigen::Index j = 0; j < count; ++j)
    draws.col(j) = spec.draw(rng_.with_member(static_cast<std::uint64_t>(j)));
  return SampleBatch{spec, std::move(draws), rng_.seed()};
}

struct CharFnResult {
  std::complex<double> empirical;  // mean of e^{-i<h,X>}
  std::complex<double> exact;      // e^{+i<a,h> - <Qh,h>/2}
  double abs_error = 0;            // |empirical - conj(exact)|
};

/**
 * Characteristic-functional check. The empirical side uses the Fourier
 * kernel e^{-i<h,X>}; the exact side is stored with the textbook
 * positive sign on the mean term, so the comparison conjugates it.
 * Both conventions agree when the two signs are flipped together.
 */
inline CharFnResult char_fn_check(const SampleBatch& batch, const Vector& h) {
  if (h.size() != batch.spec.dim())
    throw Error("char_fn_check: h dimension mismatch");
  std::complex<double> acc(0, 0);
  for (Eigen::Index j = 0; j < batch.count(); ++j) {
    const double phase = -h.dot(batch.draws.col(j));
    acc += std::complex<double>(std::cos(phase), std::sin(phase));
  }
  CharFnResult r;
  r.empirical = acc / double(batch.count());
  const double mean_phase = batch.spec.mean().dot(h);
  const double decay = std::exp(-0.5 * batch.spec.quad_form(h));
  r.exact = decay * std::complex<double>(std::cos(mean_phase), std::sin(mean_phase));
  r.abs_error = std::abs(r.empirical - std::conj(r.exact));
  return r;
}

/**
 * Projects each draw on the top-K eigenvectors of q and rescales by
 * lambda^{-1/2}. Eigenvalues below 1e-12 * lambda_max are never divided
 * by: requesting them raises RankDeficient (the finite-dimensional
 * shadow of the Cameron-Martin restriction).
 */
inline SampleBatch whiten(const SampleBatch& batch, const DenseOp& q, Eigen::Index K) {
  if (q.rows() != q.cols() || q.rows() != batch.spec.dim())
    throw Error("whiten: covariance shape mismatch");
  Eigen::SelfAdjointEigenSolver<DenseOp> es(0.5 * (q + q.transpose()));
  if (es.info() != Eigen::Success)
    throw DecompositionFailure("whiten: eigendecomposition failed");

  const Eigen::Index d = q.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  // Descending by eigenvalue; stable so equal eigenvalues keep the
  // solver's order (identity covariance then whitens to the identity map).
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return es.eigenvalues()[i] > es.eigenvalues()[j];
  });

  const double lmax = es.eigenvalues().maxCoeff();
  Eigen::Index rank = 0;
  while (rank < d && es.eigenvalues()[order[static_cast<std::size_t>(rank)]] > 1e-12 * lmax)
    ++rank;
  if (K > rank)
    throw RankDeficient("whiten: truncation exceeds the numerical rank");

  DenseOp w(K, d);  // rows: lambda^{-1/2} u^T
  for (Eigen::Index r = 0; r < K; ++r) {
    const Eigen::Index i = order[static_cast<std::size_t>(r)];
    w.row(r) = es.eigenvectors().col(i).transpose() / std::sqrt(es.eigenvalues()[i]);
  }

  SampleBatch out{
      GaussianSpec::dense(w * batch.spec.mean(),
                          DenseOp(w * batch.spec.covariance() * w.transpose())),
      DenseOp(w * batch.draws), batch.seed};
  return out;
}

/**
 * Mean squared norm of standard normal vectors per dimension; grows like
 * d itself, the reason no Hilbert-space element has identity covariance.
 */
inline std::vector<std::pair<int, double>> white_noise_growth(
    const std::vector<int>& dims, int draws_per_dim, const rng::CounterRng& rng_) {
  if (dims.empty()) throw Error("white_noise_growth: dims must be nonempty");
  std::vector<std::pair<int, double>> out;
  out.reserve(dims.size());
  for (std::size_t t = 0; t < dims.size(); ++t) {
    const int d = dims[t];
    const rng::CounterRng sub = rng_.with_cycle(t);
    double acc = 0;
    for (int j = 0; j < draws_per_dim; ++j) {
      const rng::CounterRng member = sub.with_member(static_cast<std::uint64_t>(j));
      double nrm2 = 0;
      for (int i = 0; i < d; ++i) {
        const double z = member.normal(static_cast<std::uint64_t>(i));
        nrm2 += z * z;
      }
      acc += nrm2;
    }
    out.emplace_back(d, acc / draws_per_dim);
  }
  return out;
}

/** L^p norm estimator (mean of |X|^p)^{1/p} over the batch. */
inline double moment_estimate(const SampleBatch& batch, double p) {
  if (p < 1) throw Error("moment_estimate: order must be >= 1");
  double acc = 0;
  for (Eigen::Index j = 0; j < batch.count(); ++j)
    acc += std::pow(batch.draws.col(j).norm(), p);
  return std::pow(acc / double(batch.count()), 1.0 / p);
}

}  // namespace hilbertda::gaussian
