#pragma once

#include <cmath>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "hilbertda/config.hpp"
#include "hilbertda/csv.hpp"
#include "hilbertda/ensemble_stats.hpp"
#include "hilbertda/filters.hpp"
#include "hilbertda/gaussian.hpp"
#include "hilbertda/rect_field.hpp"

namespace hilbertda::experiments {

/** Exit codes shared by every driver. */
enum ExitCode { ExitPass = 0, ExitThreshold = 1, ExitConfig = 2 };

namespace detail {

inline std::string out_path(const std::string& out_dir, const std::string& name) {
  if (out_dir.empty()) return name;
  return out_dir.back() == '/' ? out_dir + name : out_dir + "/" + name;
}

/** Replicate counts below the library minimum are noisy, not fatal:
 *  warn and raise rather than abort. */
inline int clamped_replicates(const config::Config& cfg, int fallback, std::ostream& err) {
  const long r = cfg.get_long("replicates", fallback);
  if (r < 30) {
    err << "warning: replicates=" << r << " gives a noisy slope; using 30\n";
    return 30;
  }
  return static_cast<int>(r);
}

inline rect_field::CovarianceLaw parse_law(const std::string& text) {
  try {
    return rect_field::CovarianceLaw::parse(text);
  } catch (const Error& e) {
    throw config::ConfigError(e.what());
  }
}

inline bool slope_within(double slope, double lo, double hi) {
  return std::isfinite(slope) && slope >= lo && slope <= hi;
}

/** Reads a size list and enforces a strictly increasing order. */
inline std::vector<long> increasing_sizes(const config::Config& cfg, const std::string& key,
                                          const std::vector<long>& fallback) {
  const auto sizes = cfg.get_long_list(key, fallback);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    if (sizes[i] >= sizes[i + 1])
      throw config::ConfigError("config: '" + key + "' must be strictly increasing");
  return sizes;
}

}  // namespace detail

/** Samples one random field, writes it with the trace partial sums, and
 *  prints the analytic trace (and optional Sobolev) verdicts. */
inline int cmd_field(const config::Config& cfg, const std::string& out_dir,
                     std::ostream& out, std::ostream& err) {
  cfg.require_known_keys({"seed", "law", "a", "b", "m", "n", "K", "sobolev_s",
                          "use_discrete"});
  const std::uint64_t seed = cfg.get_seed();
  const auto law = detail::parse_law(cfg.get_string("law", "inverse_power:2.0"));
  rect_field::RectDomain dom(cfg.get_double("a", 1.0), cfg.get_double("b", 1.0),
                             static_cast<int>(cfg.get_long("m", 64)),
                             static_cast<int>(cfg.get_long("n", 64)));
  const long K = cfg.get_long("K", 16384);
  const bool use_discrete = cfg.get_long("use_discrete", 0) != 0;

  const auto field =
      rect_field::sample_field(law, dom, rng::CounterRng(seed), use_discrete);
  csv::write_file(detail::out_path(out_dir, "field.csv"), csv::grid_field(field));

  const auto trace = rect_field::trace_partial_sums(law, dom, K);
  csv::write_file(detail::out_path(out_dir, "trace.csv"), csv::partial_sums(trace));
  out << "trace: " << trace.verdict() << "\n";

  if (cfg.has("sobolev_s")) {
    const int s = static_cast<int>(cfg.get_long("sobolev_s"));
    if (law.kind != rect_field::CovarianceLaw::Kind::InversePower)
      throw config::ConfigError("config: sobolev_s requires an inverse_power law");
    if (s < 0) throw config::ConfigError("config: sobolev_s must be >= 0");
    const auto sob = rect_field::sobolev_energy(law, s, dom, K);
    csv::write_file(detail::out_path(out_dir, "sobolev.csv"), csv::partial_sums(sob));
    out << "sobolev(s=" << s << "): " << sob.verdict() << "\n";
  }
  (void)err;
  return ExitPass;
}

namespace detail {

/** Shared body of the two law-of-large-numbers commands. */
inline int run_lln(const config::Config& cfg, const std::string& out_dir,
                   std::ostream& out, std::ostream& err, bool covariance) {
  cfg.require_known_keys({"seed", "dim", "sizes", "replicates", "p"});
  const std::uint64_t seed = cfg.get_seed();
  const long dim = cfg.get_long("dim", 5);
  if (dim < 1) throw config::ConfigError("config: dim must be >= 1");
  const auto sizes = increasing_sizes(cfg, "sizes", {16, 64, 256, 1024, 4096});
  const int replicates = clamped_replicates(cfg, 100, err);
  const double p = cfg.get_double("p", 2.0);
  if (p < 1) throw config::ConfigError("config: p must be >= 1");

  const auto source = gaussian::GaussianSpec::standard(dim);
  const rng::CounterRng rng(seed);
  const auto report =
      covariance ? stats::cov_convergence_experiment(source, sizes, replicates, p, rng)
                 : stats::lln_experiment(source, sizes, replicates, p, rng);
  csv::write_file(detail::out_path(out_dir, covariance ? "cov_lln.csv" : "lln.csv"),
                  csv::convergence_report(report));

  out << "slope: " << csv::fmt(report.slope) << "\n";
  out << "empirical_constant: " << csv::fmt(report.empirical_constant) << "\n";
  int code = ExitPass;
  if (!slope_within(report.slope, -0.6, -0.4)) {
    err << "slope " << csv::fmt(report.slope) << " outside [-0.6,-0.4]\n";
    code = ExitThreshold;
  }
  // The mean experiment at p=2 carries the explicit bound; check it holds
  // at every size up to three replicate standard errors.
  if (!covariance && p == 2.0) {
    for (std::size_t i = 0; i < report.sizes.size(); ++i) {
      if (report.errors[i] > report.bounds[i] + 3.0 * report.std_errors[i]) {
        err << "bound violated at size " << report.sizes[i] << ": error "
            << csv::fmt(report.errors[i]) << " > bound " << csv::fmt(report.bounds[i])
            << " + 3 se\n";
        code = ExitThreshold;
      }
    }
  }
  return code;
}

}  // namespace detail

/** Sample-mean convergence: slope of the Monte Carlo error vs sample size. */
inline int cmd_lln(const config::Config& cfg, const std::string& out_dir,
                   std::ostream& out, std::ostream& err) {
  return detail::run_lln(cfg, out_dir, out, err, false);
}

/** Sample-covariance convergence in the Hilbert-Schmidt norm. */
inline int cmd_cov_lln(const config::Config& cfg, const std::string& out_dir,
                       std::ostream& out, std::ostream& err) {
  return detail::run_lln(cfg, out_dir, out, err, true);
}

/** Twin-experiment setup for the EnKF-vs-exact-gain comparison. */
struct EnkfConvergeParams {
  std::uint64_t seed = 0;
  Eigen::Index dim = 10;
  std::vector<long> sizes = {8, 16, 32, 64, 128, 256, 512, 1024};
  int replicates = 100;
  int cycles = 3;
  Eigen::Index m_obs = 5;
  double model_scale = 0.9;
  double model_shift = 0.1;
  double obs_noise = 0.25;
};

/** Twin runs of the stochastic EnKF against the exact-gain reference on a
 *  shared perturbed-data stream; reports the first-member gap per cycle.
 *
 *  Both ensembles start from the same draws and see the same data columns,
 *  so the only difference is the gain: sample covariance vs the exactly
 *  propagated one. The exact-gain member 1 never depends on N because its
 *  update reads only its own data column. Fixed setup: decaying prior
 *  spectrum 1/k^2, affine contraction model, first m_obs coordinates
 *  observed, deterministic data per cycle. */
inline std::vector<stats::ConvergenceReport> enkf_convergence(
    const EnkfConvergeParams& prm) {
  Vector prior_eigs(prm.dim);
  for (Eigen::Index k = 0; k < prm.dim; ++k)
    prior_eigs[k] = 1.0 / double((k + 1) * (k + 1));
  const auto prior = gaussian::GaussianSpec::diagonal(Vector::Zero(prm.dim), prior_eigs);
  filters::LinearModel model{prm.model_scale * DenseOp::Identity(prm.dim, prm.dim),
                             Vector::Constant(prm.dim, prm.model_shift),
                             DenseOp::Zero(prm.dim, prm.dim)};
  filters::ObservationModel obs{
      DenseOp::Identity(prm.dim, prm.dim).topRows(prm.m_obs),
      prm.obs_noise * DenseOp::Identity(prm.m_obs, prm.m_obs), Vector::Zero(prm.m_obs)};

  const long n_max = prm.sizes.back();
  std::vector<std::vector<std::vector<double>>> powers(
      prm.cycles, std::vector<std::vector<double>>(prm.sizes.size()));

  for (int r = 0; r < prm.replicates; ++r) {
    const rng::CounterRng rep_rng(prm.seed + static_cast<std::uint64_t>(r));
    const DenseOp init =
        gaussian::sample(prior, n_max, rep_rng.with_stream(rng::Stream::InitEnsemble))
            .draws;
    std::vector<DenseOp> x(prm.sizes.size());
    for (std::size_t s = 0; s < prm.sizes.size(); ++s) x[s] = init.leftCols(prm.sizes[s]);
    DenseOp u = init;
    filters::KfState exact{prior.mean(), DenseOp(prior_eigs.asDiagonal())};

    for (int c = 1; c <= prm.cycles; ++c) {
      for (auto& ens : x) ens = (model.A * ens).colwise() + model.f;
      u = (model.A * u).colwise() + model.f;
      exact = filters::kf_forecast(exact, model);

      obs.d = Vector::Constant(prm.m_obs, 1.0 + 0.5 * double(c));
      const auto data = filters::make_perturbed_data(
          obs, static_cast<int>(n_max),
          rep_rng.with_stream(rng::Stream::PerturbedData).with_cycle(
              static_cast<std::uint64_t>(c)));

      u = filters::exact_gain_analysis({u}, obs, exact.cov, data).members;
      exact = filters::osi_analysis(exact, obs);
      for (std::size_t s = 0; s < prm.sizes.size(); ++s) {
        const filters::PerturbedData slice{data.columns.leftCols(prm.sizes[s]),
                                           data.seed};
        x[s] = filters::enkf_analysis({x[s]}, obs, slice).members;
        powers[c - 1][s].push_back((x[s].col(0) - u.col(0)).squaredNorm());
      }
    }
  }

  const std::vector<double> no_bounds(prm.sizes.size(),
                                      std::numeric_limits<double>::quiet_NaN());
  std::vector<stats::ConvergenceReport> reports;
  for (int c = 1; c <= prm.cycles; ++c)
    reports.push_back(
        stats::detail::assemble_report(prm.sizes, powers[c - 1], no_bounds, 2.0));
  return reports;
}

inline int cmd_enkf_converge(const config::Config& cfg, const std::string& out_dir,
                             std::ostream& out, std::ostream& err) {
  cfg.require_known_keys({"seed", "dim", "sizes", "replicates", "cycles", "m_obs",
                          "model_scale", "model_shift", "obs_noise"});
  EnkfConvergeParams prm;
  prm.seed = cfg.get_seed();
  prm.dim = cfg.get_long("dim", 10);
  if (prm.dim < 1) throw config::ConfigError("config: dim must be >= 1");
  prm.sizes = detail::increasing_sizes(cfg, "sizes", prm.sizes);
  if (prm.sizes.front() < 2)
    throw config::ConfigError("config: ensemble sizes must be >= 2");
  prm.replicates = detail::clamped_replicates(cfg, 100, err);
  prm.cycles = static_cast<int>(cfg.get_long("cycles", 3));
  if (prm.cycles < 1 || prm.cycles > 5)
    throw config::ConfigError("config: cycles must be between 1 and 5");
  prm.m_obs = cfg.get_long("m_obs", 5);
  if (prm.m_obs < 1 || prm.m_obs > prm.dim)
    throw config::ConfigError("config: m_obs must be between 1 and dim");
  prm.model_scale = cfg.get_double("model_scale", prm.model_scale);
  prm.model_shift = cfg.get_double("model_shift", prm.model_shift);
  prm.obs_noise = cfg.get_double("obs_noise", prm.obs_noise);
  if (!(prm.obs_noise > 0)) throw config::ConfigError("config: obs_noise must be positive");

  const auto reports = enkf_convergence(prm);
  int code = ExitPass;
  for (int c = 1; c <= prm.cycles; ++c) {
    const auto& report = reports[c - 1];
    csv::write_file(detail::out_path(out_dir, "enkf_cycle" + std::to_string(c) + ".csv"),
                    csv::convergence_report(report));
    out << "cycle " << c << " slope: " << csv::fmt(report.slope) << "\n";
    if (!detail::slope_within(report.slope, -0.65, -0.35)) {
      err << "cycle " << c << " slope " << csv::fmt(report.slope)
          << " outside [-0.65,-0.35]\n";
      code = ExitThreshold;
    }
  }
  return code;
}

/** Fixed-budget dimension sweep setup. */
struct CurseParams {
  std::uint64_t seed = 0;
  std::vector<long> dims = {50, 100, 200, 400};
  std::vector<rect_field::CovarianceLaw> laws;
  int members = 10;
  int data_count = 25;
  int replicates = 50;
  double obs_noise = 0.25;
};

/** Per-law outcome of the sweep, one entry per dimension. */
struct CurseLawResult {
  rect_field::CovarianceLaw law;
  std::vector<double> rmse;        // EnKF posterior-mean error per grid point
  std::vector<double> se;          // replicate standard error of rmse
  std::vector<double> particle_rmse;  // NaN when every replicate degenerated
  std::vector<double> ess;            // mean effective sample size, same caveat
  std::vector<double> degenerate;     // fraction of underflowed replicates

  explicit CurseLawResult(const rect_field::CovarianceLaw& l) : law(l) {}
};

/** Dimension sweep at fixed ensemble and data budget: EnKF posterior-mean
 *  error per grid point, plus the Bayes-reweighting particle analog, for
 *  each eigenvalue law. Per-point error is |mean - truth|_2 / sqrt(dim) on
 *  the grid values, so a dimension-free law reads flat.
 *
 *  The particle weights are reported as-is; in high dimension they collapse
 *  or underflow, and underflow of every weight is recorded as a degenerate
 *  replicate rather than an error. */
inline std::vector<CurseLawResult> curse_sweep(const CurseParams& prm) {
  std::vector<CurseLawResult> results;
  for (std::size_t li = 0; li < prm.laws.size(); ++li) {
    CurseLawResult res(prm.laws[li]);

    for (std::size_t di = 0; di < prm.dims.size(); ++di) {
      const int dim = static_cast<int>(prm.dims[di]);
      const rect_field::RectDomain dom(1.0, 1.0, dim, 1);
      const auto cov = rect_field::covariance_eigs(res.law, dom);

      // Evenly spaced point observations of the grid values.
      DenseOp h = DenseOp::Zero(prm.data_count, dim);
      for (int j = 0; j < prm.data_count; ++j)
        h(j, (2 * j + 1) * dim / (2 * prm.data_count)) = 1.0;
      const DenseOp r_cov =
          prm.obs_noise * DenseOp::Identity(prm.data_count, prm.data_count);

      double sum = 0, sum_sq = 0, psum = 0, ess_sum = 0;
      int degenerate = 0, particle_ok = 0;
      for (int rep = 0; rep < prm.replicates; ++rep) {
        const rng::CounterRng rep_rng =
            rng::CounterRng(prm.seed + static_cast<std::uint64_t>(rep))
                .with_cycle(li * prm.dims.size() + di);

        const Vector truth =
            rect_field::sample_field(cov, dom, rep_rng.with_stream(rng::Stream::Truth))
                .values.col(0);
        const Vector noise =
            std::sqrt(prm.obs_noise) *
            rep_rng.with_stream(rng::Stream::DataNoise).normals(prm.data_count);
        const filters::ObservationModel obs{h, r_cov, h * truth + noise};

        DenseOp prior(dim, prm.members);
        for (int j = 0; j < prm.members; ++j)
          prior.col(j) = rect_field::sample_field(
                             cov, dom,
                             rep_rng.with_stream(rng::Stream::InitEnsemble)
                                 .with_member(static_cast<std::uint64_t>(j)))
                             .values.col(0);

        const auto data = filters::make_perturbed_data(
            obs, prm.members, rep_rng.with_stream(rng::Stream::PerturbedData));
        const auto analysis = filters::enkf_analysis({prior}, obs, data);
        const double e =
            (stats::sample_mean(analysis) - truth).norm() / std::sqrt(double(dim));
        sum += e;
        sum_sq += e * e;

        try {
          const auto rw = filters::bayes_reweight(
              {prior, Vector::Constant(prm.members, 1.0 / prm.members)}, obs);
          const Vector pmean = rw.particles.particles * rw.particles.weights;
          psum += (pmean - truth).norm() / std::sqrt(double(dim));
          ess_sum += rw.ess;
          ++particle_ok;
        } catch (const filters::AllWeightsZero&) {
          ++degenerate;
        }
      }

      const double nan = std::numeric_limits<double>::quiet_NaN();
      res.rmse.push_back(sum / prm.replicates);
      const double var = (sum_sq - sum * sum / prm.replicates) /
                         std::max(1, prm.replicates - 1);
      res.se.push_back(std::sqrt(std::max(0.0, var) / prm.replicates));
      res.particle_rmse.push_back(particle_ok ? psum / particle_ok : nan);
      res.ess.push_back(particle_ok ? ess_sum / particle_ok : nan);
      res.degenerate.push_back(double(degenerate) / prm.replicates);
    }
    results.push_back(std::move(res));
  }
  return results;
}

/** Ordering assertions on a sweep result: the flat spectrum must grow with
 *  dimension, the summable one must not grow beyond joint noise. Laws other
 *  than those two are informational only. */
inline bool curse_ordering_holds(const CurseLawResult& res, std::ostream& err) {
  using Rule = rect_field::CovarianceLaw::SequenceRule;
  if (res.law.kind != rect_field::CovarianceLaw::Kind::Sequence) return true;
  bool ok = true;
  for (std::size_t i = 0; i + 1 < res.rmse.size(); ++i) {
    const double margin =
        3.0 * std::sqrt(res.se[i] * res.se[i] + res.se[i + 1] * res.se[i + 1]);
    if (res.law.rule == Rule::ConstantOne && !(res.rmse[i + 1] > res.rmse[i])) {
      err << res.law.to_string() << ": rmse not increasing at step " << i << "\n";
      ok = false;
    }
    if (res.law.rule == Rule::InverseNSquared &&
        res.rmse[i + 1] > res.rmse[i] + margin) {
      err << res.law.to_string() << ": rmse grew beyond noise at step " << i << "\n";
      ok = false;
    }
  }
  return ok;
}

inline int cmd_curse(const config::Config& cfg, const std::string& out_dir,
                     std::ostream& out, std::ostream& err) {
  cfg.require_known_keys({"seed", "dims", "laws", "members", "data_count", "replicates",
                          "obs_noise"});
  CurseParams prm;
  prm.seed = cfg.get_seed();
  prm.dims = detail::increasing_sizes(cfg, "dims", prm.dims);
  for (const auto& name :
       cfg.get_string_list("laws", {"seq:const", "seq:inv", "seq:inv_sq"}))
    prm.laws.push_back(detail::parse_law(name));
  prm.members = static_cast<int>(cfg.get_long("members", prm.members));
  if (prm.members < 2) throw config::ConfigError("config: members must be >= 2");
  prm.data_count = static_cast<int>(cfg.get_long("data_count", prm.data_count));
  if (prm.data_count < 1) throw config::ConfigError("config: data_count must be >= 1");
  if (prm.dims.front() < prm.data_count)
    throw config::ConfigError("config: every dim must be >= data_count");
  prm.replicates = static_cast<int>(cfg.get_long("replicates", prm.replicates));
  if (prm.replicates < 2) throw config::ConfigError("config: replicates must be >= 2");
  prm.obs_noise = cfg.get_double("obs_noise", prm.obs_noise);
  if (!(prm.obs_noise > 0)) throw config::ConfigError("config: obs_noise must be positive");

  const auto results = curse_sweep(prm);

  std::string report = "# N=" + std::to_string(prm.members) + "\n# m=" +
                       std::to_string(prm.data_count) + "\n" +
                       "law,dim,enkf_rmse,enkf_se,particle_rmse,particle_ess,"
                       "degenerate_fraction\n";
  int code = ExitPass;
  for (const auto& res : results) {
    for (std::size_t di = 0; di < prm.dims.size(); ++di)
      report += res.law.to_string() + "," + std::to_string(prm.dims[di]) + "," +
                csv::fmt(res.rmse[di]) + "," + csv::fmt(res.se[di]) + "," +
                csv::fmt(res.particle_rmse[di]) + "," + csv::fmt(res.ess[di]) + "," +
                csv::fmt(res.degenerate[di]) + "\n";
    if (!curse_ordering_holds(res, err)) code = ExitThreshold;
    out << res.law.to_string() << " rmse:";
    for (double v : res.rmse) out << " " << csv::fmt(v);
    out << "\n";
  }

  csv::write_file(detail::out_path(out_dir, "curse.csv"), report);
  return code;
}

/** Random-instance exactness suite for the transform filter: the analysis
 *  ensemble's sample moments must reproduce the ensemble-space formulas,
 *  recomputed here through plain dense inverses. */
inline int cmd_etkf_check(const config::Config& cfg, const std::string& out_dir,
                          std::ostream& out, std::ostream& err) {
  cfg.require_known_keys({"seed", "trials", "max_dim", "max_members", "inject"});
  const std::uint64_t seed = cfg.get_seed();
  const int trials = static_cast<int>(cfg.get_long("trials", 100));
  if (trials < 1) throw config::ConfigError("config: trials must be >= 1");
  const long max_dim = cfg.get_long("max_dim", 20);
  const long max_members = cfg.get_long("max_members", 40);
  if (max_dim < 2 || max_members < 3)
    throw config::ConfigError("config: need max_dim >= 2 and max_members >= 3");
  const std::string inject = cfg.get_string("inject", "none");
  if (inject != "none" && inject != "asym_r")
    throw config::ConfigError("config: inject must be none or asym_r");

  std::string rows = "trial,n_state,n_members,m_obs,mean_residual,cov_residual,"
                     "deviate_residual\n";
  double worst_mean = 0, worst_cov = 0, worst_dev = 0;

  for (int t = 0; t < trials; ++t) {
    const rng::CounterRng rng(seed, rng::Stream::Generic,
                              static_cast<std::uint64_t>(t));
    const auto shape = rng.with_member(0);
    const int n_state = 2 + int(shape.uniform(0) * double(max_dim - 1));
    const int n_members = 3 + int(shape.uniform(1) * double(max_members - 2));
    const int m_obs = 2 + int(shape.uniform(2) * double(n_state - 1));

    // Member keys: 0 shapes, 2..5 observation pieces, 10+j ensemble columns.
    DenseOp x(n_state, n_members);
    for (int j = 0; j < n_members; ++j)
      x.col(j) = rng.with_member(10 + static_cast<std::uint64_t>(j)).normals(n_state);
    const Vector h_flat = rng.with_member(2).normals(m_obs * n_state);
    const DenseOp h_obs = Eigen::Map<const DenseOp>(h_flat.data(), m_obs, n_state);
    const Vector shift = rng.with_member(3).normals(m_obs);
    const Vector g_flat = rng.with_member(4).normals(m_obs * m_obs);
    const DenseOp g = Eigen::Map<const DenseOp>(g_flat.data(), m_obs, m_obs);
    DenseOp r_cov = 0.1 * g * g.transpose() + DenseOp::Identity(m_obs, m_obs);
    const Vector d = 2.0 * rng.with_member(5).normals(m_obs);
    if (inject == "asym_r") r_cov(0, 1) += 0.3;

    stats::Ensemble analysis{DenseOp()};
    try {
      analysis = filters::etkf_analysis(
          {x}, [&](const Vector& v) { return Vector(h_obs * v + shift); }, r_cov, d);
    } catch (const filters::SingularR& e) {
      err << "SingularR: " << e.what() << "\n";
      return ExitThreshold;
    }

    // Reference moments through plain inverses.
    const Vector xbar = x.rowwise().mean();
    const DenseOp a = x.colwise() - xbar;
    DenseOp y(m_obs, n_members);
    for (int j = 0; j < n_members; ++j) y.col(j) = h_obs * x.col(j) + shift;
    const Vector ybar = y.rowwise().mean();
    const DenseOp b = y.colwise() - ybar;
    const DenseOp r_inv = r_cov.inverse();
    const DenseOp qt = (double(n_members - 1) *
                            DenseOp::Identity(n_members, n_members) +
                        b.transpose() * r_inv * b)
                           .inverse();
    const Vector w = qt * b.transpose() * r_inv * (d - ybar);
    const Vector mean_ref = xbar + a * w;
    const DenseOp cov_ref = a * qt * a.transpose();

    const double mean_res = (stats::sample_mean(analysis) - mean_ref).norm() /
                            std::max(1.0, mean_ref.norm());
    const double cov_res =
        (stats::sample_cov(analysis, stats::CovDivisor::Nminus1) - cov_ref).norm() /
        std::max(1.0, cov_ref.norm());
    const double dev_res =
        (analysis.members.rowwise().mean() - mean_ref).norm() * double(n_members);
    worst_mean = std::max(worst_mean, mean_res);
    worst_cov = std::max(worst_cov, cov_res);
    worst_dev = std::max(worst_dev, dev_res);
    rows += std::to_string(t) + "," + std::to_string(n_state) + "," +
            std::to_string(n_members) + "," + std::to_string(m_obs) + "," +
            csv::fmt(mean_res) + "," + csv::fmt(cov_res) + "," + csv::fmt(dev_res) + "\n";
  }

  csv::write_file(detail::out_path(out_dir, "etkf_check.csv"), rows);
  const bool pass = worst_mean < 1e-10 && worst_cov < 1e-10 && worst_dev < 1e-10;
  out << (pass ? "PASS" : "FAIL") << " mean_residual=" << csv::fmt(worst_mean)
      << " cov_residual=" << csv::fmt(worst_cov)
      << " deviate_residual=" << csv::fmt(worst_dev) << "\n";
  return pass ? ExitPass : ExitThreshold;
}

/** Empirical vs exact characteristic functional on random frequencies. */
inline int cmd_char_fn(const config::Config& cfg, const std::string& out_dir,
                       std::ostream& out, std::ostream& err) {
  cfg.require_known_keys({"seed", "dim", "draws", "num_h", "h_max"});
  const std::uint64_t seed = cfg.get_seed();
  const Eigen::Index dim = cfg.get_long("dim", 2);
  if (dim < 1) throw config::ConfigError("config: dim must be >= 1");
  const long draws = cfg.get_long("draws", 100000);
  if (draws < 100) throw config::ConfigError("config: draws must be >= 100");
  const int num_h = static_cast<int>(cfg.get_long("num_h", 20));
  if (num_h < 1) throw config::ConfigError("config: num_h must be >= 1");
  const double h_max = cfg.get_double("h_max", 3.0);
  if (!(h_max > 0)) throw config::ConfigError("config: h_max must be positive");

  const auto batch = gaussian::sample(gaussian::GaussianSpec::standard(dim), draws,
                                      rng::CounterRng(seed));
  const double bound = 5.0 / std::sqrt(double(draws));
  std::string rows = "index,h_norm,abs_error,bound\n";
  double worst = 0;
  const rng::CounterRng h_rng(seed, rng::Stream::Generic, 1);
  for (int k = 0; k < num_h; ++k) {
    const Vector dir = h_rng.with_member(static_cast<std::uint64_t>(2 * k)).normals(dim);
    const double radius =
        h_max * h_rng.with_member(static_cast<std::uint64_t>(2 * k + 1)).uniform(0);
    const Vector h = dir.norm() > 0 ? Vector(radius * dir / dir.norm())
                                    : Vector(Vector::Zero(dim));
    const auto res = gaussian::char_fn_check(batch, h);
    worst = std::max(worst, res.abs_error);
    rows += std::to_string(k) + "," + csv::fmt(h.norm()) + "," + csv::fmt(res.abs_error) +
            "," + csv::fmt(bound) + "\n";
  }
  csv::write_file(detail::out_path(out_dir, "char_fn.csv"), rows);
  out << (worst <= bound ? "PASS" : "FAIL") << " max_abs_error=" << csv::fmt(worst)
      << " bound=" << csv::fmt(bound) << "\n";
  if (worst > bound) {
    err << "characteristic functional error above bound\n";
    return ExitThreshold;
  }
  return ExitPass;
}

}  // namespace hilbertda::experiments
