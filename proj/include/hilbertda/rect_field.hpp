#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hilbertda/core.hpp"
#include "hilbertda/rng.hpp"
#include "hilbertda/spectral_ops.hpp"

namespace hilbertda::rect_field {

using spectral_ops::SineBasis;
using spectral_ops::SpectralOperator;

struct IndexOutOfRange : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct UnsupportedLaw : Error {
  using Error::Error;
};

/** Rectangle (0,a) x (0,b) with an m x n interior grid. */
struct RectDomain {
  double a = 1, b = 1;
  int m = 1, n = 1;

  RectDomain(double a_, double b_, int m_, int n_) : a(a_), b(b_), m(m_), n(n_) {
    if (!(a > 0) || !(b > 0)) throw Error("RectDomain: side lengths must be positive");
    if (m < 1 || n < 1) throw Error("RectDomain: grid counts must be >= 1");
  }

  double hx() const { return a / (m + 1); }
  double hy() const { return b / (n + 1); }
  Eigen::Index modes() const { return static_cast<Eigen::Index>(m) * n; }
};

/**
 * Eigenvalue law defining a covariance as a function of the Laplacian
 * (InversePower, HeatKernel) or directly as a 1-D sequence mapped over
 * the flattened mode index (Sequence).
 */
struct CovarianceLaw {
  enum class Kind { InversePower, HeatKernel, Sequence };
  enum class SequenceRule { ConstantOne, InverseN, InverseNSquared };

  Kind kind = Kind::InversePower;
  double alpha = 1;  // InversePower exponent, > 0
  double T = 1;      // HeatKernel time, >= 0
  SequenceRule rule = SequenceRule::ConstantOne;

  static CovarianceLaw inverse_power(double alpha) {
    if (!(alpha > 0)) throw Error("inverse_power: alpha must be positive");
    CovarianceLaw law;
    law.kind = Kind::InversePower;
    law.alpha = alpha;
    return law;
  }
  static CovarianceLaw heat_kernel(double T) {
    if (!(T >= 0)) throw Error("heat_kernel: T must be nonnegative");
    CovarianceLaw law;
    law.kind = Kind::HeatKernel;
    law.T = T;
    return law;
  }
  static CovarianceLaw sequence(SequenceRule rule) {
    CovarianceLaw law;
    law.kind = Kind::Sequence;
    law.rule = rule;
    return law;
  }

  /** Config strings: "inverse_power:2.0", "heat_kernel:0.5", "seq:const|inv|inv_sq". */
  static CovarianceLaw parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
      throw Error("covariance law '" + text + "': expected kind:parameter");
    const std::string kind = text.substr(0, colon);
    const std::string arg = text.substr(colon + 1);
    if (kind == "inverse_power") return inverse_power(parse_positive(arg, text));
    if (kind == "heat_kernel") {
      CovarianceLaw law;
      law.kind = Kind::HeatKernel;
      law.T = parse_nonnegative(arg, text);
      return law;
    }
    if (kind == "seq") {
      if (arg == "const") return sequence(SequenceRule::ConstantOne);
      if (arg == "inv") return sequence(SequenceRule::InverseN);
      if (arg == "inv_sq") return sequence(SequenceRule::InverseNSquared);
      throw Error("covariance law '" + text + "': unknown sequence rule");
    }
    throw Error("covariance law '" + text + "': unknown kind");
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::InversePower:
        return "inverse_power:" + std::to_string(alpha);
      case Kind::HeatKernel:
        return "heat_kernel:" + std::to_string(T);
      case Kind::Sequence:
        switch (rule) {
          case SequenceRule::ConstantOne: return "seq:const";
          case SequenceRule::InverseN: return "seq:inv";
          case SequenceRule::InverseNSquared: return "seq:inv_sq";
        }
    }
    return "?";
  }

 private:
  CovarianceLaw() = default;

  static double parse_positive(const std::string& arg, const std::string& ctx) {
    const double v = parse_nonnegative(arg, ctx);
    if (!(v > 0)) throw Error("covariance law '" + ctx + "': parameter must be positive");
    return v;
  }
  static double parse_nonnegative(const std::string& arg, const std::string& ctx) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(arg, &used);
    } catch (const std::exception&) {
      throw Error("covariance law '" + ctx + "': bad numeric parameter");
    }
    if (used != arg.size() || !std::isfinite(v) || v < 0)
      throw Error("covariance law '" + ctx + "': bad numeric parameter");
    return v;
  }
};

/** Real values on the interior grid; values(i-1,j-1) sits at (i hx, j hy). */
struct GridField {
  RectDomain domain;
  Eigen::MatrixXd values;  // m x n

  GridField(const RectDomain& dom, Eigen::MatrixXd vals)
      : domain(dom), values(std::move(vals)) {
    if (values.rows() != dom.m || values.cols() != dom.n)
      throw ShapeMismatch("GridField: value shape does not match domain");
  }
  static GridField zero(const RectDomain& dom) {
    return GridField(dom, Eigen::MatrixXd::Zero(dom.m, dom.n));
  }
};

/** Grid quadrature inner product hx*hy*sum(u*v); Parseval-exact weight. */
inline double grid_inner(const GridField& u, const GridField& v) {
  if (u.values.rows() != v.values.rows() || u.values.cols() != v.values.cols())
    throw ShapeMismatch("grid_inner: field shapes differ");
  return u.domain.hx() * u.domain.hy() * u.values.cwiseProduct(v.values).sum();
}

inline double grid_norm(const GridField& u) { return std::sqrt(grid_inner(u, u)); }

/** Dirichlet Laplacian eigenvalue (k pi/a)^2 + (l pi/b)^2 on the rectangle. */
inline double continuous_eigenvalue(int k, int l, const RectDomain& dom) {
  const double pi = M_PI;
  const double u = k * pi / dom.a;
  const double v = l * pi / dom.b;
  return u * u + v * v;
}

/**
 * Eigenvalue of the 5-point finite-difference Laplacian:
 *   4 (sin(k pi / (2(m+1))) / hx)^2 + 4 (sin(l pi / (2(n+1))) / hy)^2.
 * Always below the continuous eigenvalue; converges to it as m,n grow.
 */
inline double discrete_eigenvalue(int k, int l, const RectDomain& dom) {
  if (k < 1 || k > dom.m || l < 1 || l > dom.n)
    throw IndexOutOfRange("discrete_eigenvalue: mode index outside 1..m, 1..n");
  const double pi = M_PI;
  const double sx = std::sin(k * pi / (2.0 * (dom.m + 1))) / dom.hx();
  const double sy = std::sin(l * pi / (2.0 * (dom.n + 1))) / dom.hy();
  return 4.0 * (sx * sx + sy * sy);
}

namespace detail {

/** Unnormalized 2-D DST-I (factor 2 per dimension), row-major in/out. */
inline void dst2_raw(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  const int m = static_cast<int>(in.rows());
  const int n = static_cast<int>(in.cols());
  std::vector<double> buf(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(i) * n + j] = in(i, j);
  fftw_plan plan = fftw_plan_r2r_2d(m, n, buf.data(), buf.data(), FFTW_RODFT00,
                                    FFTW_RODFT00, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  out.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = buf[static_cast<std::size_t>(i) * n + j];
}

}  // namespace detail

/**
 * Coefficients of a field in the orthonormal discrete sine modes
 * u_kl(i,j) = sqrt(4/(ab)) sin(ik pi/(m+1)) sin(jl pi/(n+1)), which have
 * unit grid-quadrature norm. Entry (k-1,l-1) is <field, u_kl>_h.
 */
inline Eigen::MatrixXd dst2_forward(const GridField& field) {
  const RectDomain& dom = field.domain;
  Eigen::MatrixXd coeffs;
  detail::dst2_raw(field.values, coeffs);
  coeffs *= dom.hx() * dom.hy() / (2.0 * std::sqrt(dom.a * dom.b));
  return coeffs;
}

/** Inverse of dst2_forward; exact up to round-off. */
inline GridField dst2_inverse(const Eigen::MatrixXd& coeffs, const RectDomain& dom) {
  if (coeffs.rows() != dom.m || coeffs.cols() != dom.n)
    throw ShapeMismatch("dst2_inverse: coefficient shape does not match domain");
  Eigen::MatrixXd values;
  detail::dst2_raw(coeffs, values);
  values /= 2.0 * std::sqrt(dom.a * dom.b);
  return GridField(dom, std::move(values));
}

namespace detail {

/**
 * Modes of the m x n box in diagonal order: k+l ascending, k ascending
 * within each diagonal. This is the flattening used by Sequence laws
 * and by the partial-sum diagnostics.
 */
inline std::vector<std::pair<int, int>> diagonal_modes(const RectDomain& dom) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(dom.modes()));
  for (int s = 2; s <= dom.m + dom.n; ++s) {
    const int k_lo = std::max(1, s - dom.n);
    const int k_hi = std::min(dom.m, s - 1);
    for (int k = k_lo; k <= k_hi; ++k) order.emplace_back(k, s - k);
  }
  return order;
}

inline double sequence_value(CovarianceLaw::SequenceRule rule, long pos) {
  switch (rule) {
    case CovarianceLaw::SequenceRule::ConstantOne: return 1.0;
    case CovarianceLaw::SequenceRule::InverseN: return 1.0 / double(pos);
    case CovarianceLaw::SequenceRule::InverseNSquared:
      return 1.0 / (double(pos) * double(pos));
  }
  return 0.0;
}

}  // namespace detail

/**
 * Covariance eigenvalues on the sine basis. InversePower and HeatKernel
 * are functions of the Laplacian eigenvalues (continuous by default,
 * finite-difference ones when use_discrete_eigs is set); Sequence laws
 * assign the 1-D sequence over the diagonal flattening.
 */
inline SpectralOperator covariance_eigs(const CovarianceLaw& law, const RectDomain& dom,
                                        bool use_discrete_eigs = false) {
  Vector eigs(dom.modes());
  if (law.kind == CovarianceLaw::Kind::Sequence) {
    long pos = 0;
    for (const auto& [k, l] : detail::diagonal_modes(dom)) {
      ++pos;
      eigs[static_cast<Eigen::Index>(k - 1) * dom.n + (l - 1)] =
          detail::sequence_value(law.rule, pos);
    }
  } else {
    for (int k = 1; k <= dom.m; ++k) {
      for (int l = 1; l <= dom.n; ++l) {
        const double lap = use_discrete_eigs ? discrete_eigenvalue(k, l, dom)
                                             : continuous_eigenvalue(k, l, dom);
        const double v = law.kind == CovarianceLaw::Kind::InversePower
                             ? std::pow(lap, -law.alpha)
                             : std::exp(-law.T * lap);
        eigs[static_cast<Eigen::Index>(k - 1) * dom.n + (l - 1)] = v;
      }
    }
  }
  return spectral_ops::make_sine_operator(dom.m, dom.n, std::move(eigs), true);
}

namespace detail {

inline const SineBasis& sine_basis_of(const SpectralOperator& cov, const char* who) {
  const auto* basis = std::get_if<SineBasis>(&cov.basis);
  if (!basis) throw Error(std::string(who) + ": operator is not on a sine basis");
  return *basis;
}

}  // namespace detail

/**
 * One random-field draw U = sum_kl lambda_kl^{1/2} xi_kl u_kl with
 * independent standard normal xi; coefficient (k,l) uses rng coordinate
 * (k-1)*n + (l-1). The domain is explicit because the sine basis fixes
 * only the grid counts, not the side lengths.
 */
inline GridField sample_field(const SpectralOperator& cov, const RectDomain& dom,
                              const rng::CounterRng& rng_) {
  const SineBasis& basis = detail::sine_basis_of(cov, "sample_field");
  if (basis.m != dom.m || basis.n != dom.n)
    throw ShapeMismatch("sample_field: basis and domain grids differ");
  if (!cov.psd) throw Error("sample_field: covariance must be PSD");
  Eigen::MatrixXd coeffs(dom.m, dom.n);
  for (int k = 1; k <= dom.m; ++k) {
    for (int l = 1; l <= dom.n; ++l) {
      const Eigen::Index idx = static_cast<Eigen::Index>(k - 1) * dom.n + (l - 1);
      coeffs(k - 1, l - 1) =
          std::sqrt(cov.eigenvalues[idx]) * rng_.normal(static_cast<std::uint64_t>(idx));
    }
  }
  return dst2_inverse(coeffs, dom);
}

/** Law-based convenience overload; the flag picks the Laplacian spectrum. */
inline GridField sample_field(const CovarianceLaw& law, const RectDomain& dom,
                              const rng::CounterRng& rng_, bool use_discrete_eigs = false) {
  return sample_field(covariance_eigs(law, dom, use_discrete_eigs), dom, rng_);
}

/** Applies the covariance: DST, multiply by eigenvalues, inverse DST. */
inline GridField apply_covariance(const SpectralOperator& cov, const GridField& w) {
  const SineBasis& basis = detail::sine_basis_of(cov, "apply_covariance");
  if (basis.m != w.domain.m || basis.n != w.domain.n)
    throw ShapeMismatch("apply_covariance: basis and field grids differ");
  Eigen::MatrixXd coeffs = dst2_forward(w);
  for (int k = 1; k <= basis.m; ++k)
    for (int l = 1; l <= basis.n; ++l)
      coeffs(k - 1, l - 1) *=
          cov.eigenvalues[static_cast<Eigen::Index>(k - 1) * basis.n + (l - 1)];
  return dst2_inverse(coeffs, w.domain);
}

/**
 * Partial sums of an eigenvalue series in diagonal order, recorded after
 * every completed diagonal. The verdict is always the analytic one:
 * numeric partial sums are reported but never prove convergence.
 */
struct PartialSumReport {
  std::vector<long> counts;   // modes included at each checkpoint
  std::vector<double> sums;   // partial sum at each checkpoint
  bool converges = false;     // analytic verdict
  double tail_ratio = 0;      // last increment / last sum, diagnostic only

  std::string verdict() const { return converges ? "converges" : "diverges"; }
};

namespace detail {

inline PartialSumReport diagonal_partial_sums(const RectDomain& dom, long K,
                                              const std::function<double(int, int, long)>& term) {
  PartialSumReport report;
  long count = 0;
  double sum = 0;
  double prev_sum = 0;
  int current_diag = 2;
  auto flush = [&]() {
    report.counts.push_back(count);
    report.sums.push_back(sum);
  };
  for (const auto& [k, l] : diagonal_modes(dom)) {
    if (count >= K) break;
    if (k + l != current_diag) {
      prev_sum = sum;
      flush();
      current_diag = k + l;
    }
    ++count;
    sum += term(k, l, count);
  }
  flush();
  const double last_increment = sum - prev_sum;
  report.tail_ratio = sum > 0 ? last_increment / sum : 0.0;
  return report;
}

}  // namespace detail

/**
 * Partial sums of the covariance eigenvalues (the trace series) with the
 * analytic convergence verdict: InversePower converges iff alpha > 1,
 * HeatKernel always, Sequence only for the inverse-square rule.
 */
inline PartialSumReport trace_partial_sums(const CovarianceLaw& law, const RectDomain& dom,
                                           long K) {
  if (K < 2) throw Error("trace_partial_sums: K must be >= 2");
  PartialSumReport report = detail::diagonal_partial_sums(
      dom, std::min<long>(K, dom.modes()), [&](int k, int l, long pos) {
        switch (law.kind) {
          case CovarianceLaw::Kind::InversePower:
            return std::pow(continuous_eigenvalue(k, l, dom), -law.alpha);
          case CovarianceLaw::Kind::HeatKernel:
            return std::exp(-law.T * continuous_eigenvalue(k, l, dom));
          case CovarianceLaw::Kind::Sequence:
            return detail::sequence_value(law.rule, pos);
        }
        return 0.0;
      });
  switch (law.kind) {
    case CovarianceLaw::Kind::InversePower:
      report.converges = law.alpha > 1.0;
      break;
    case CovarianceLaw::Kind::HeatKernel:
      report.converges = true;
      break;
    case CovarianceLaw::Kind::Sequence:
      report.converges = law.rule == CovarianceLaw::SequenceRule::InverseNSquared;
      break;
  }
  return report;
}

/**
 * Analytic upper bound on everything the trace series omits beyond the
 * complete diagonal s (that is, the sum over modes with k+l > s, or with
 * flattened position > count for Sequence laws). Infinite for divergent
 * laws and whenever the bound's monotonicity hypothesis fails.
 */
inline double trace_tail_bound(const CovarianceLaw& law, const RectDomain& dom, int s,
                               long count) {
  const double inf = std::numeric_limits<double>::infinity();
  const double pi = M_PI;
  const double c = std::min(pi / dom.a, pi / dom.b);
  const double c2 = c * c;  // lambda_kl >= c2 (k^2 + l^2) >= c2 s^2 / 2
  switch (law.kind) {
    case CovarianceLaw::Kind::InversePower: {
      if (!(law.alpha > 1.0)) return inf;
      // Diagonal s' contributes at most s' * (c2 s'^2 / 2)^{-alpha}.
      const double factor = std::pow(2.0 / c2, law.alpha);
      return factor * std::pow(double(s), 2.0 - 2.0 * law.alpha) / (2.0 * law.alpha - 2.0);
    }
    case CovarianceLaw::Kind::HeatKernel: {
      const double beta = law.T * c2 / 2.0;
      if (!(beta > 0)) return inf;
      if (double(s) < 1.0 / std::sqrt(2.0 * beta)) return inf;  // integrand not yet decreasing
      const double e = std::exp(-beta * double(s) * double(s));
      return e * (1.0 + 1.0 / double(s)) / (2.0 * beta);
    }
    case CovarianceLaw::Kind::Sequence:
      if (law.rule != CovarianceLaw::SequenceRule::InverseNSquared) return inf;
      return count > 0 ? 1.0 / double(count) : inf;
  }
  return inf;
}

/**
 * Sobolev-energy partial sums: sum over modes of
 * (sum_{p+q=s} k^{2p} l^{2q}) * lambda_kl^{-alpha}, finite iff
 * alpha > 1 + s. InversePower only.
 */
inline PartialSumReport sobolev_energy(const CovarianceLaw& law, int s, const RectDomain& dom,
                                       long K) {
  if (law.kind != CovarianceLaw::Kind::InversePower)
    throw UnsupportedLaw("sobolev_energy: only inverse_power laws have a Sobolev criterion");
  if (s < 0) throw Error("sobolev_energy: order must be >= 0");
  if (K < 2) throw Error("sobolev_energy: K must be >= 2");
  PartialSumReport report = detail::diagonal_partial_sums(
      dom, std::min<long>(K, dom.modes()), [&](int k, int l, long) {
        double weight = 0;
        for (int p = 0; p <= s; ++p)
          weight += std::pow(double(k), 2.0 * p) * std::pow(double(l), 2.0 * (s - p));
        return weight * std::pow(continuous_eigenvalue(k, l, dom), -law.alpha);
      });
  report.converges = law.alpha > 1.0 + s;
  return report;
}

}  // namespace hilbertda::rect_field
