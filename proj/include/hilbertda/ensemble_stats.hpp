#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hilbertda/core.hpp"
#include "hilbertda/gaussian.hpp"
#include "hilbertda/rng.hpp"

namespace hilbertda::stats {

/** Thrown when a sample covariance with divisor N-1 is requested from a
 *  single-member ensemble. */
struct DegenerateEnsemble : Error {
  using Error::Error;
};

/** An ordered collection of state vectors, one per column. */
struct Ensemble {
  DenseOp members;  // n_state x N

  Eigen::Index dim() const { return members.rows(); }
  Eigen::Index count() const { return members.cols(); }
};

/** Divisor convention for the sample covariance. Filters use Nminus1, the
 *  theoretical convergence results use N. Always explicit, never defaulted. */
enum class CovDivisor { N, Nminus1 };

/** Mean of the ensemble members. */
inline Vector sample_mean(const Ensemble& e) {
  if (e.count() < 1) throw Error("sample_mean: empty ensemble");
  return e.members.rowwise().mean();
}

/** Sample covariance sum (X_k - mean) (X_k - mean)^T / divisor.
 *  Symmetric by construction; PSD up to roundoff. */
inline DenseOp sample_cov(const Ensemble& e, CovDivisor divisor) {
  const Eigen::Index n = e.count();
  if (n < 1) throw Error("sample_cov: empty ensemble");
  if (divisor == CovDivisor::Nminus1 && n < 2)
    throw DegenerateEnsemble("sample_cov: divisor N-1 needs at least two members");
  const Vector mean = sample_mean(e);
  const DenseOp centered = e.members.colwise() - mean;
  const double denom = divisor == CovDivisor::N ? double(n) : double(n - 1);
  DenseOp cov = centered * centered.transpose() / denom;
  cov = ((cov + cov.transpose()) / 2.0).eval();
  return cov;
}

/** Mean and covariance of an ensemble under an explicit divisor convention. */
struct SampleMoments {
  Vector mean;
  DenseOp cov;
  CovDivisor divisor;
};

inline SampleMoments sample_moments(const Ensemble& e, CovDivisor divisor) {
  return {sample_mean(e), sample_cov(e, divisor), divisor};
}

/** Measured decay of a Monte Carlo error over increasing sample sizes.
 *
 *  bounds[i] is the explicit theoretical bound at sizes[i] when one exists
 *  (L2 law of large numbers), NaN otherwise. std_errors[i] is the replicate
 *  standard error of errors[i]. slope is the least-squares fit of log error
 *  against log size with the smallest size discarded (transient constants
 *  pollute the first point); NaN when a fitted error is zero or fewer than
 *  two points remain. empirical_constant = max over sizes of error * sqrt(size). */
struct ConvergenceReport {
  std::vector<long> sizes;
  std::vector<double> errors;
  std::vector<double> bounds;
  std::vector<double> std_errors;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double empirical_constant = 0.0;
};

namespace detail {

inline void check_experiment_inputs(const std::vector<long>& sizes, int replicates,
                                    double p) {
  if (sizes.empty()) throw Error("experiment: no sizes given");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    if (sizes[i] >= sizes[i + 1]) throw Error("experiment: sizes must be strictly increasing");
  if (sizes.front() < 1) throw Error("experiment: sizes must be positive");
  if (replicates < 30) throw Error("experiment: at least 30 replicates required");
  if (p < 1.0) throw Error("experiment: moment order must be >= 1");
}

/** Least-squares slope of log(error) vs log(size), first point discarded. */
inline double fit_loglog_slope(const std::vector<long>& sizes,
                               const std::vector<double>& errors) {
  std::vector<double> xs, ys;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (errors[i] <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    xs.push_back(std::log(double(sizes[i])));
    ys.push_back(std::log(errors[i]));
  }
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(xs.size());
  my /= double(xs.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/** Finalize a report from per-size replicate samples of ||error||^p.
 *  The error at each size is the p-th root of the replicate mean; its
 *  standard error comes from the delta method. */
inline ConvergenceReport assemble_report(const std::vector<long>& sizes,
                                         const std::vector<std::vector<double>>& powers,
                                         const std::vector<double>& bounds, double p) {
  ConvergenceReport report;
  report.sizes = sizes;
  report.bounds = bounds;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto& z = powers[i];
    const double R = double(z.size());
    double mean = 0;
    for (double v : z) mean += v;
    mean /= R;
    double var = 0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= std::max(1.0, R - 1.0);
    const double err = std::pow(mean, 1.0 / p);
    const double se_mean = std::sqrt(var / R);
    const double se_err =
        err > 0 ? se_mean * (1.0 / p) * std::pow(mean, 1.0 / p - 1.0) : 0.0;
    report.errors.push_back(err);
    report.std_errors.push_back(se_err);
    report.empirical_constant =
        std::max(report.empirical_constant, err * std::sqrt(double(sizes[i])));
  }
  report.slope = fit_loglog_slope(report.sizes, report.errors);
  return report;
}

}  // namespace detail

/** Law-of-large-numbers experiment for the sample mean.
 *
 *  For each size n, error = (mean over replicates of |E_n(X) - E X|^p)^(1/p).
 *  For p = 2 the report carries the explicit bound 2 |X_1|_2 / sqrt(n); for
 *  other p no explicit constant is known and the bound is NaN.
 *
 *  Replicate r draws from a generator seeded with rng.seed() + r, so results
 *  do not depend on how replicates are scheduled. Within a replicate the
 *  sizes share draws (prefixes of one stream), which smooths the error curve
 *  without biasing it. */
inline ConvergenceReport lln_experiment(const gaussian::GaussianSpec& source,
                                        const std::vector<long>& sizes, int replicates,
                                        double p, const rng::CounterRng& rng) {
  detail::check_experiment_inputs(sizes, replicates, p);
  const Vector a = source.mean();
  const long n_max = sizes.back();

  std::vector<std::vector<double>> powers(sizes.size());
  for (int r = 0; r < replicates; ++r) {
    const rng::CounterRng rep(rng.seed() + std::uint64_t(r));
    const gaussian::SampleBatch batch = gaussian::sample(source, n_max, rep);
    Vector running = Vector::Zero(source.dim());
    std::size_t next = 0;
    for (long j = 0; j < n_max; ++j) {
      running += batch.draws.col(j);
      while (next < sizes.size() && sizes[next] == j + 1) {
        const double err = (running / double(j + 1) - a).norm();
        powers[next].push_back(std::pow(err, p));
        ++next;
      }
    }
  }

  std::vector<double> bounds(sizes.size(), std::numeric_limits<double>::quiet_NaN());
  if (p == 2.0) {
    const double l2 = std::sqrt(source.mean_sq_norm());
    for (std::size_t i = 0; i < sizes.size(); ++i)
      bounds[i] = 2.0 * l2 / std::sqrt(double(sizes[i]));
  }
  return detail::assemble_report(sizes, powers, bounds, p);
}

/** Convergence experiment for the sample covariance with divisor N.
 *
 *  error = (mean over replicates of |C_n - Q|_HS^p)^(1/p). The known decay
 *  has no explicit constant, so bounds are NaN; the slope near -1/2 and a
 *  finite empirical constant are the testable content. */
inline ConvergenceReport cov_convergence_experiment(const gaussian::GaussianSpec& source,
                                                    const std::vector<long>& sizes,
                                                    int replicates, double p,
                                                    const rng::CounterRng& rng) {
  detail::check_experiment_inputs(sizes, replicates, p);
  const DenseOp q = source.covariance();
  const long n_max = sizes.back();
  const Eigen::Index d = source.dim();

  std::vector<std::vector<double>> powers(sizes.size());
  for (int r = 0; r < replicates; ++r) {
    const rng::CounterRng rep(rng.seed() + std::uint64_t(r));
    const gaussian::SampleBatch batch = gaussian::sample(source, n_max, rep);
    Vector sum = Vector::Zero(d);
    DenseOp sum_outer = DenseOp::Zero(d, d);
    std::size_t next = 0;
    for (long j = 0; j < n_max; ++j) {
      const Vector x = batch.draws.col(j);
      sum += x;
      sum_outer += x * x.transpose();
      while (next < sizes.size() && sizes[next] == j + 1) {
        const double n = double(j + 1);
        const Vector mean = sum / n;
        const DenseOp cov = sum_outer / n - mean * mean.transpose();
        powers[next].push_back(std::pow((cov - q).norm(), p));
        ++next;
      }
    }
  }

  const std::vector<double> bounds(sizes.size(), std::numeric_limits<double>::quiet_NaN());
  return detail::assemble_report(sizes, powers, bounds, p);
}

/** Empirical tail probability against the p-th moment bound (|X|_p / theta)^p. */
struct ChebyshevResult {
  double empirical;
  double bound;
  bool consistent;  // empirical <= bound + 3 sqrt(bound / batch size)
};

inline ChebyshevResult chebyshev_check(const gaussian::SampleBatch& batch, double theta,
                                       double p) {
  if (theta <= 0.0) throw Error("chebyshev_check: threshold must be positive");
  const Eigen::Index n = batch.count();
  long exceed = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (batch.draws.col(j).norm() > theta) ++exceed;
  const double empirical = double(exceed) / double(n);
  const double moment = gaussian::moment_estimate(batch, p);
  const double bound = std::pow(moment / theta, p);
  const bool consistent = empirical <= bound + 3.0 * std::sqrt(bound / double(n));
  return {empirical, bound, consistent};
}

/** One Monte Carlo replicate of a paired ensemble: column k of x and of u
 *  belong to the same member. */
struct PairedEnsemble {
  DenseOp x;  // n_state x N
  DenseOp u;  // n_state x N
};

/** Result of the exchangeability check. Pass means every per-index summary
 *  sits within three standard errors of its cross-index mean. */
struct ExchangeabilityReport {
  int indices = 0;
  int comparisons = 0;
  int violations = 0;
  double worst_z = 0.0;  // largest |deviation| / SE seen
  bool pass = false;
};

/** Tests the observable consequence of exchangeability: the marginal law of
 *  member k does not depend on k. Five scalar summaries are tracked per
 *  index across replicates (coordinate sum and squared norm of X_k and of
 *  U_k, squared norm of X_k - U_k); each must agree with the mean of its row
 *  across indices to within three standard errors. Scalar summaries keep the
 *  number of comparisons, and with it the false-alarm rate, small. */
inline ExchangeabilityReport exchangeability_check(
    const std::vector<PairedEnsemble>& replicates) {
  if (replicates.size() < 2) throw Error("exchangeability_check: need replicates");
  const Eigen::Index N = replicates.front().x.cols();
  if (N < 2) throw Error("exchangeability_check: need at least two members");
  for (const auto& rep : replicates) {
    if (rep.x.cols() != N || rep.u.cols() != N || rep.x.rows() != rep.u.rows())
      throw Error("exchangeability_check: inconsistent replicate shapes");
  }

  constexpr int kSummaries = 5;
  const double R = double(replicates.size());
  // mean and variance over replicates for each (summary, index) pair
  DenseOp mean = DenseOp::Zero(kSummaries, N);
  DenseOp sq = DenseOp::Zero(kSummaries, N);
  for (const auto& rep : replicates) {
    for (Eigen::Index k = 0; k < N; ++k) {
      const double vals[kSummaries] = {
          rep.x.col(k).sum(), rep.x.col(k).squaredNorm(), rep.u.col(k).sum(),
          rep.u.col(k).squaredNorm(), (rep.x.col(k) - rep.u.col(k)).squaredNorm()};
      for (int s = 0; s < kSummaries; ++s) {
        mean(s, k) += vals[s];
        sq(s, k) += vals[s] * vals[s];
      }
    }
  }
  mean /= R;

  ExchangeabilityReport report;
  report.indices = int(N);
  for (int s = 0; s < kSummaries; ++s) {
    const double grand = mean.row(s).mean();
    for (Eigen::Index k = 0; k < N; ++k) {
      const double var = std::max(0.0, sq(s, k) / R - mean(s, k) * mean(s, k)) * R / (R - 1.0);
      const double se = std::sqrt(var / R);
      const double dev = std::abs(mean(s, k) - grand);
      // se == 0 happens only for degenerate constants, where dev is 0 too
      const double z = se > 0 ? dev / se : (dev > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      report.worst_z = std::max(report.worst_z, z);
      ++report.comparisons;
      if (z > 3.0) ++report.violations;
    }
  }
  report.pass = report.violations == 0;
  return report;
}

}  // namespace hilbertda::stats
