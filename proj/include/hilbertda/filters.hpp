#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "hilbertda/core.hpp"
#include "hilbertda/ensemble_stats.hpp"
#include "hilbertda/gaussian.hpp"
#include "hilbertda/rng.hpp"

namespace hilbertda::filters {

/** Thrown when the innovation covariance HQH^T + R cannot be inverted,
 *  which signals an invalid R since R alone should make it definite. */
struct SingularInnovation : Error {
  using Error::Error;
};

/** Thrown when R is not symmetric positive definite where its inverse is needed. */
struct SingularR : Error {
  using Error::Error;
};

/** Thrown when every reweighting factor underflows to zero, the numerical
 *  signature of filter degeneracy in high dimension. */
struct AllWeightsZero : Error {
  using Error::Error;
};

/** Gaussian state estimate: mean and covariance. */
struct KfState {
  Vector mean;
  DenseOp cov;
};

/** Linear observation d = Hx + noise, noise ~ N(0, R). */
struct ObservationModel {
  DenseOp H;  // m_obs x n_state
  DenseOp R;  // m_obs x m_obs, symmetric positive definite
  Vector d;   // m_obs
};

/** Linear forecast model x' = Ax + f with additive covariance boost D. */
struct LinearModel {
  DenseOp A;
  Vector f;
  DenseOp D;
};

/** Data ensemble D_k ~ N(d, R), one column per member, with its seed. */
struct PerturbedData {
  DenseOp columns;  // m_obs x N
  std::uint64_t seed = 0;

  Eigen::Index count() const { return columns.cols(); }
};

/** Weighted particle representation of a distribution. */
struct ParticleSet {
  DenseOp particles;  // n_state x N
  Vector weights;     // nonnegative, sum 1
};

namespace detail {

inline void require(bool ok, const char* msg) {
  if (!ok) throw Error(msg);
}

inline void check_symmetric(const DenseOp& m, double tol, const char* what) {
  if (m.rows() != m.cols() || (m - m.transpose()).cwiseAbs().maxCoeff() > tol)
    throw Error(std::string(what) + ": matrix must be symmetric");
}

/** Minimum eigenvalue of a symmetric matrix. */
inline double min_eigenvalue(const DenseOp& m) {
  return Eigen::SelfAdjointEigenSolver<DenseOp>(m, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

inline void check_obs(const ObservationModel& obs, Eigen::Index n_state) {
  require(obs.H.cols() == n_state, "observation: H column count != state dimension");
  require(obs.R.rows() == obs.H.rows() && obs.R.cols() == obs.H.rows(),
          "observation: R shape mismatch");
  require(obs.d.size() == obs.H.rows(), "observation: data dimension mismatch");
  check_symmetric(obs.R, 1e-10, "observation R");
}

/** Inverse of a symmetric matrix from its eigendecomposition. */
inline DenseOp sym_inverse(const Eigen::SelfAdjointEigenSolver<DenseOp>& es) {
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

/** Kalman / optimal statistical interpolation analysis.
 *
 *  K = QH^T (HQH^T + R)^{-1}, mean' = mean + K(d - H mean),
 *  cov' = (I - KH) Q symmetrized. When Q and R are invertible the mean is
 *  recomputed in precision form (Q^{-1} + H^T R^{-1} H)^{-1} (Q^{-1} mu +
 *  H^T R^{-1} d) and the two must agree to relative 1e-8; disagreement
 *  means the inputs are too ill-conditioned to trust and is an error. */
inline KfState osi_analysis(const KfState& prior, const ObservationModel& obs) {
  const Eigen::Index n = prior.mean.size();
  detail::require(prior.cov.rows() == n && prior.cov.cols() == n,
                  "osi_analysis: state shape mismatch");
  detail::check_symmetric(prior.cov, 1e-10, "osi_analysis prior covariance");
  detail::check_obs(obs, n);

  const DenseOp s_raw = obs.H * prior.cov * obs.H.transpose() + obs.R;
  const Eigen::SelfAdjointEigenSolver<DenseOp> es(((s_raw + s_raw.transpose()) / 2.0).eval());
  const double smax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (smax <= 0.0 || es.eigenvalues().minCoeff() <= 1e-14 * smax)
    throw SingularInnovation("osi_analysis: innovation covariance is singular");

  const DenseOp gain = prior.cov * obs.H.transpose() * detail::sym_inverse(es);
  KfState posterior;
  posterior.mean = prior.mean + gain * (obs.d - obs.H * prior.mean);
  const DenseOp qa = (DenseOp::Identity(n, n) - gain * obs.H) * prior.cov;
  posterior.cov = (qa + qa.transpose()) / 2.0;

  // Precision-form cross-check, available when Q and R are invertible.
  const Eigen::SelfAdjointEigenSolver<DenseOp> eq(prior.cov);
  const double qmax = eq.eigenvalues().cwiseAbs().maxCoeff();
  const bool q_invertible = qmax > 0.0 && eq.eigenvalues().minCoeff() > 1e-12 * qmax;
  if (q_invertible && detail::min_eigenvalue(obs.R) > 1e-12) {
    const DenseOp q_inv = detail::sym_inverse(eq);
    const DenseOp r_inv_h = obs.R.ldlt().solve(obs.H);
    const DenseOp precision = q_inv + obs.H.transpose() * r_inv_h;
    const Vector mean_opt =
        precision.ldlt().solve(q_inv * prior.mean + obs.H.transpose() *
                                                        obs.R.ldlt().solve(obs.d));
    const double scale = std::max(1.0, posterior.mean.norm());
    if ((posterior.mean - mean_opt).norm() > 1e-8 * scale)
      throw Error("osi_analysis: gain-form and precision-form means disagree");
  }
  return posterior;
}

/** Forecast step mean' = A mean + f, cov' = A cov A^T + D. */
inline KfState kf_forecast(const KfState& state, const LinearModel& model) {
  const Eigen::Index n = state.mean.size();
  detail::require(model.A.rows() == model.A.cols() && model.A.cols() == n,
                  "kf_forecast: model shape mismatch");
  detail::require(model.f.size() == n && model.D.rows() == n && model.D.cols() == n,
                  "kf_forecast: model shape mismatch");
  detail::check_symmetric(model.D, 1e-10, "kf_forecast D");
  KfState out;
  out.mean = model.A * state.mean + model.f;
  const DenseOp q = model.A * state.cov * model.A.transpose() + model.D;
  out.cov = (q + q.transpose()) / 2.0;
  return out;
}

/** Draws N columns D_k ~ N(d, R). Columns are keyed by member index, so
 *  growing N extends the ensemble without changing earlier columns. */
inline PerturbedData make_perturbed_data(const ObservationModel& obs, int count,
                                         const rng::CounterRng& rng) {
  detail::require(count >= 1, "make_perturbed_data: need at least one column");
  const auto spec = gaussian::GaussianSpec::dense(obs.d, obs.R);
  const gaussian::SampleBatch batch = gaussian::sample(spec, count, rng);
  return {batch.draws, batch.seed};
}

namespace detail {

/** Deviate matrix X (I - ee^T/N), written column-by-column. */
inline DenseOp deviates(const DenseOp& x) {
  return x.colwise() - x.rowwise().mean().eval();
}

}  // namespace detail

/** EnKF analysis with perturbed observations: X' = X + K_N (D - HX) with the
 *  gain built from the divisor N-1 sample covariance.
 *
 *  Two internal cross-checks guard the algebra on every call: the innovation
 *  inverse recomputed through the ensemble-space SMW identity, and the output
 *  recomputed in transform form X' = XT. Both must agree to 1e-8. */
inline stats::Ensemble enkf_analysis(const stats::Ensemble& x,
                                     const ObservationModel& obs,
                                     const PerturbedData& data) {
  const Eigen::Index n_members = x.count();
  if (n_members < 2)
    throw stats::DegenerateEnsemble("enkf_analysis: need at least two members");
  detail::check_obs(obs, x.dim());
  detail::require(data.columns.cols() == n_members,
                  "enkf_analysis: perturbed data count mismatch");
  detail::require(data.columns.rows() == obs.H.rows(),
                  "enkf_analysis: perturbed data dimension mismatch");
  if (detail::min_eigenvalue(obs.R) <= 1e-12)
    throw SingularInnovation("enkf_analysis: R must be positive definite");

  const double nm1 = double(n_members - 1);
  const DenseOp q_n = stats::sample_cov(x, stats::CovDivisor::Nminus1);
  const DenseOp s = obs.H * q_n * obs.H.transpose() + obs.R;
  const Eigen::LDLT<DenseOp> s_fact(((s + s.transpose()) / 2.0).eval());
  const Eigen::Index m = obs.H.rows();
  const DenseOp s_inv = s_fact.solve(DenseOp::Identity(m, m));

  // SMW route: (H Q_N H^T + R)^{-1} expanded around R^{-1} with the N x N
  // inner matrix inverted densely, sharing nothing with the LDLT above.
  const DenseOp b = detail::deviates(obs.H * x.members);
  const DenseOp r_inv_b = obs.R.ldlt().solve(b);
  const DenseOp inner =
      DenseOp::Identity(n_members, n_members) + b.transpose() * r_inv_b / nm1;
  const DenseOp inner_inv = inner.llt().solve(DenseOp::Identity(n_members, n_members));
  const DenseOp r_inv = obs.R.ldlt().solve(DenseOp::Identity(m, m));
  const DenseOp s_inv_smw =
      r_inv - r_inv_b * inner_inv * r_inv_b.transpose() / nm1;
  if ((s_inv - s_inv_smw).norm() > 1e-8 * std::max(1.0, s_inv.norm()))
    throw Error("enkf_analysis: SMW and direct innovation inverses disagree");

  const DenseOp gain = q_n * obs.H.transpose() * s_inv;
  const DenseOp innovations = data.columns - obs.H * x.members;
  stats::Ensemble out{x.members + gain * innovations};

  // Transform route: X' = XT with T built only from ensemble-space factors.
  const DenseOp centering =
      DenseOp::Identity(n_members, n_members) -
      DenseOp::Constant(n_members, n_members, 1.0 / double(n_members));
  const DenseOp t =
      DenseOp::Identity(n_members, n_members) +
      centering * x.members.transpose() * obs.H.transpose() * s_inv * innovations / nm1;
  if ((out.members - x.members * t).norm() > 1e-8 * std::max(1.0, out.members.norm()))
    throw Error("enkf_analysis: transform-form output disagrees");
  return out;
}

/** EnKF analysis formula with a prescribed exact covariance: keeps i.i.d.
 *  Gaussian members i.i.d. Gaussian, which makes it the reference the EnKF
 *  converges to under shared perturbed data. */
inline stats::Ensemble exact_gain_analysis(const stats::Ensemble& u,
                                           const ObservationModel& obs,
                                           const DenseOp& q_exact,
                                           const PerturbedData& data) {
  if (u.count() < 2)
    throw stats::DegenerateEnsemble("exact_gain_analysis: need at least two members");
  detail::check_obs(obs, u.dim());
  detail::require(data.columns.cols() == u.count(),
                  "exact_gain_analysis: perturbed data count mismatch");
  detail::check_symmetric(q_exact, 1e-10, "exact_gain_analysis covariance");
  detail::require(q_exact.rows() == u.dim(), "exact_gain_analysis: covariance shape");

  const DenseOp s = obs.H * q_exact * obs.H.transpose() + obs.R;
  const Eigen::SelfAdjointEigenSolver<DenseOp> es(((s + s.transpose()) / 2.0).eval());
  const double smax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (smax <= 0.0 || es.eigenvalues().minCoeff() <= 1e-14 * smax)
    throw SingularInnovation("exact_gain_analysis: innovation covariance singular");
  const DenseOp gain = q_exact * obs.H.transpose() * detail::sym_inverse(es);
  return {u.members + gain * (data.columns - obs.H * u.members)};
}

/** Observation map for the ETKF; may be nonlinear. */
using ObsFn = std::function<Vector(const Vector&)>;

/** Ensemble transform Kalman filter analysis.
 *
 *  Works in the N-dimensional ensemble space: with deviates A, observation
 *  deviates B, Qt = ((N-1)I + B^T R^{-1} B)^{-1} and w = Qt B^T R^{-1}
 *  (d - mean(Y)), the analysis is X'_i = mean(X) + Aw + (AW)_i where W is the
 *  symmetric PSD square root of (N-1)Qt. The symmetric root is the unique
 *  choice that fixes the all-ones vector (We = e), which keeps the ensemble
 *  mean exact. Sample mean and divisor N-1 covariance of the output then
 *  reproduce the analysis mean and A Qt A^T exactly, up to roundoff. */
inline stats::Ensemble etkf_analysis(const stats::Ensemble& x, const ObsFn& obs_fn,
                                     const DenseOp& r, const Vector& d) {
  const Eigen::Index n_members = x.count();
  if (n_members < 2)
    throw stats::DegenerateEnsemble("etkf_analysis: need at least two members");
  if (r.rows() != r.cols() || (r - r.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
      detail::min_eigenvalue(((r + r.transpose()) / 2.0).eval()) <= 1e-12)
    throw SingularR("etkf_analysis: R must be symmetric positive definite");
  detail::require(d.size() == r.rows(), "etkf_analysis: data dimension mismatch");

  DenseOp y(r.rows(), n_members);
  for (Eigen::Index i = 0; i < n_members; ++i) {
    const Vector yi = obs_fn(x.members.col(i));
    detail::require(yi.size() == r.rows(), "etkf_analysis: obs_fn dimension mismatch");
    y.col(i) = yi;
  }

  const double nm1 = double(n_members - 1);
  const Vector xbar = x.members.rowwise().mean();
  const Vector ybar = y.rowwise().mean();
  const DenseOp a = detail::deviates(x.members);
  const DenseOp b = detail::deviates(y);

  const Eigen::LDLT<DenseOp> r_fact(r);
  const DenseOp r_inv_b = r_fact.solve(b);
  const DenseOp m =
      nm1 * DenseOp::Identity(n_members, n_members) + b.transpose() * r_inv_b;
  const Eigen::SelfAdjointEigenSolver<DenseOp> em(((m + m.transpose()) / 2.0).eval());
  // eigenvalues >= N-1 > 0 by construction
  const Vector wa =
      detail::sym_inverse(em) * (b.transpose() * r_fact.solve(d - ybar));
  const DenseOp w = em.eigenvectors() *
                    (nm1 * em.eigenvalues().cwiseInverse()).cwiseSqrt().asDiagonal() *
                    em.eigenvectors().transpose();

  const Vector mean_a = xbar + a * wa;
  stats::Ensemble out{DenseOp(x.dim(), n_members)};
  const DenseOp deviates_a = a * w;
  for (Eigen::Index i = 0; i < n_members; ++i)
    out.members.col(i) = mean_a + deviates_a.col(i);
  return out;
}

/** Ensemble-space posterior factor (I + B^T R^{-1} B/(N-1))^{-1}, computed
 *  through the SMW expansion I - B^T (R + BB^T/(N-1))^{-1} B/(N-1) and
 *  cross-checked against the direct inverse to 1e-8. As R -> 0 with full-rank
 *  B this becomes the orthogonal projection onto the null space of B. */
inline DenseOp etkf_smw_inner(const DenseOp& b, const DenseOp& r, int n_members) {
  detail::require(n_members >= 2, "etkf_smw_inner: need at least two members");
  detail::require(b.rows() == r.rows(), "etkf_smw_inner: shape mismatch");
  if (r.rows() != r.cols() || (r - r.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
      detail::min_eigenvalue(((r + r.transpose()) / 2.0).eval()) <= 1e-12)
    throw SingularR("etkf_smw_inner: R must be symmetric positive definite");

  const double nm1 = double(n_members - 1);
  const Eigen::Index n = b.cols();
  const DenseOp s = r + b * b.transpose() / nm1;
  const DenseOp smw =
      DenseOp::Identity(n, n) - b.transpose() * s.ldlt().solve(b) / nm1;

  const DenseOp direct =
      (DenseOp::Identity(n, n) + b.transpose() * r.ldlt().solve(b) / nm1)
          .llt()
          .solve(DenseOp::Identity(n, n));
  if ((smw - direct).norm() > 1e-8 * std::max(1.0, direct.norm()))
    throw Error("etkf_smw_inner: SMW and direct forms disagree");
  return smw;
}

/** Both sides of the scalar-observation identity H(mean(X) + Aw) = mean(Y) + Bw
 *  for the affine map H(x) = h0 + h1.x; exact up to roundoff, which is what
 *  makes one-observation-at-a-time assimilation consistent. */
struct ScalarObsCheck {
  double lhs;
  double rhs;
  double diff;
};

inline ScalarObsCheck scalar_obs_exactness(const stats::Ensemble& x, double h0,
                                           const Vector& h1, const Vector& w) {
  detail::require(h1.size() == x.dim(), "scalar_obs_exactness: h1 dimension mismatch");
  detail::require(w.size() == x.count(), "scalar_obs_exactness: weight count mismatch");
  const Vector xbar = x.members.rowwise().mean();
  const DenseOp a = detail::deviates(x.members);

  Vector y(x.count());
  for (Eigen::Index i = 0; i < x.count(); ++i)
    y[i] = h0 + h1.dot(x.members.col(i));
  const double ybar = y.mean();
  const Vector b = y.array() - ybar;

  const double lhs = h0 + h1.dot(xbar + a * w);
  const double rhs = ybar + b.dot(w);
  return {lhs, rhs, lhs - rhs};
}

/** Particle set after a Bayes update, with its effective sample size. */
struct ReweightResult {
  ParticleSet particles;
  double ess;  // 1 / sum of squared weights
};

/** Multiplies each weight by the Gaussian data likelihood
 *  exp(-(Hx - d)^T R^{-1} (Hx - d) / 2) and renormalizes.
 *
 *  The factors are evaluated in plain double precision on purpose: when the
 *  data is too far from every particle they all underflow to zero, and that
 *  degeneracy is reported as AllWeightsZero rather than hidden by a shifted
 *  log-sum computation. */
inline ReweightResult bayes_reweight(const ParticleSet& p, const ObservationModel& obs) {
  const Eigen::Index n = p.particles.cols();
  detail::require(n >= 1, "bayes_reweight: empty particle set");
  detail::require(p.weights.size() == n, "bayes_reweight: weight count mismatch");
  detail::check_obs(obs, p.particles.rows());
  if (detail::min_eigenvalue(obs.R) <= 1e-12)
    throw SingularR("bayes_reweight: R must be positive definite");
  detail::require(std::abs(p.weights.sum() - 1.0) <= 1e-12,
                  "bayes_reweight: weights must sum to one");
  detail::require(p.weights.minCoeff() >= 0.0, "bayes_reweight: negative weight");

  const Eigen::LDLT<DenseOp> r_fact(obs.R);
  Vector next(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vector residual = obs.H * p.particles.col(k) - obs.d;
    next[k] = p.weights[k] * std::exp(-0.5 * residual.dot(r_fact.solve(residual)));
  }
  const double total = next.sum();
  if (total <= 0.0)
    throw AllWeightsZero("bayes_reweight: every likelihood underflowed");
  next /= total;
  return {ParticleSet{p.particles, next}, 1.0 / next.squaredNorm()};
}

}  // namespace hilbertda::filters
