#pragma once

// Limit objects of the centered current: Psi, the covariance kernel Gamma in
// closed and integral form, the Z-conditional covariance, the fBM(1/4) case,
// and moments of the Gaussian variance mixture.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rwre/numeric.hpp"
#include "rwre/rng.hpp"

namespace rwre {

struct LimitParams {
  double mu = 1.0;
  double sigma0_sq = 0.0;
  double sigma1_sq = 1.0;
  double sigma2_sq = 0.0;

  void validate() const {
    if (!(sigma1_sq > 0)) throw std::invalid_argument("sigma1_sq must be positive");
    if (!(mu >= 0 && sigma0_sq >= 0 && sigma2_sq >= 0)) throw std::invalid_argument("negative limit parameter");
  }
};

/// A time-space point (t, r) of the two-parameter current.
struct SpaceTime {
  double t = 1.0;
  double r = 0.0;
};

/// alpha^2 phi_{alpha^2}(x) - x Phi_{alpha^2}(-x); the negative part of x at alpha^2 = 0.
inline double Psi(double alpha_sq, double x) {
  if (alpha_sq < 0) throw std::invalid_argument("Psi needs alpha_sq >= 0");
  if (alpha_sq == 0.0) return x < 0 ? -x : 0.0;
  return alpha_sq * normal::pdf(x, alpha_sq) - x * normal::cdf(-x, alpha_sq);
}

inline double Gamma_closed(const LimitParams& p, SpaceTime a, SpaceTime b) {
  const double s = a.t, q = a.r, t = b.t, r = b.r;
  if (s < 0 || t < 0) throw std::invalid_argument("Gamma needs nonnegative times");
  const double s1 = p.sigma1_sq;
  return p.mu * (Psi(s1 * (s + t), q - r) - Psi(s1 * std::abs(s - t), q - r)) +
         p.sigma0_sq * (Psi(s1 * s, -q) + Psi(s1 * t, r) - Psi(s1 * (s + t), r - q));
}

namespace detail {

/// P(B_{var_s} <= a, B_{var_t} > b) for one Brownian path, var_s <= var_t.
inline double bm_le_gt(double var_s, double a, double var_t, double b) {
  if (var_s <= 0.0) return a >= 0.0 ? normal::sf(b, var_t) : 0.0;
  const double ss = std::sqrt(var_s), st = std::sqrt(var_t);
  const double corr = std::min(1.0, ss / st);
  // P(X <= a', Y > b') = P(-X > -a', Y > b'), corr(-X, Y) = -corr
  return normal::bvn_upper(-a / ss, b / st, -corr);
}

/// P(B at s <= a, B at t > b) with Var B_u = sigma1_sq u, any order of s, t.
inline double bm_joint(double sigma1_sq, double s, double a, double t, double b) {
  if (s <= t) return bm_le_gt(sigma1_sq * s, a, sigma1_sq * t, b);
  // P(B_s <= a, B_t > b) = P(B_s <= a) - P(B_s <= a, B_t <= b), earlier time t
  const double le_le = normal::cdf(b, sigma1_sq * t) - bm_le_gt(sigma1_sq * t, b, sigma1_sq * s, a);
  return normal::cdf(a, sigma1_sq * s) - le_le;
}

}  // namespace detail

struct QuadratureResult {
  double value = 0;
  double error = 0;
};

namespace detail {

/// Bisecting Gauss-Kronrod with an absolute error target; integrands here
/// may vanish identically, where a relative target never converges.
template <class F>
QuadratureResult adaptive_gk(F&& f, double a, double b, double abs_tol, int depth) {
  double err = 0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &err);
  if (err <= abs_tol || depth == 0 || !(b - a > 1e-12)) return {v, err};
  const double mid = 0.5 * (a + b);
  const auto l = adaptive_gk(f, a, mid, abs_tol / 2, depth - 1);
  const auto r = adaptive_gk(f, mid, b, abs_tol / 2, depth - 1);
  return {l.value + r.value, l.error + r.error};
}

}  // namespace detail

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian-tail cutoff for the integral form.
inline double default_gamma_cutoff(const LimitParams& p, SpaceTime a, SpaceTime b) {
  return std::max(std::abs(a.r), std::abs(b.r)) + 8.0 * std::sqrt(p.sigma1_sq * std::max(a.t, b.t)) + 1.0;
}

/// Gamma from its representation as integrals of Brownian probabilities,
/// truncated to [-cutoff, cutoff]. A finite cutoff reproduces the
/// finite-range quadratic form used at finite n.
inline QuadratureResult Gamma_integral(const LimitParams& p, SpaceTime a, SpaceTime b,
                                       double cutoff = std::numeric_limits<double>::quiet_NaN(),
                                       double tol = 1e-10) {
  if (a.t < 0 || b.t < 0) throw std::invalid_argument("Gamma needs nonnegative times");
  if (std::isnan(cutoff)) cutoff = default_gamma_cutoff(p, a, b);
  const double s1 = p.sigma1_sq;
  const double s = a.t, q = a.r, t = b.t, r = b.r;

  auto mu_part = [&](double x) {
    const double ps = normal::cdf(q - x, s1 * s);
    const double pt = normal::sf(r - x, s1 * t);
    return ps * pt - detail::bm_joint(s1, s, q - x, t, r - x);
  };
  auto right_part = [&](double x) { return normal::cdf(q - x, s1 * s) * normal::cdf(r - x, s1 * t); };
  auto left_part = [&](double x) { return normal::sf(q - x, s1 * s) * normal::sf(r - x, s1 * t); };

  // Split at the kinks of the degenerate (zero-time) indicators.
  auto integrate = [&](auto&& f, double lo, double hi) {
    QuadratureResult res;
    if (!(hi > lo)) return res;
    std::vector<double> cuts{lo, hi};
    for (double c : {q, r, 0.0})
      if (c > lo && c < hi) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const auto piece = detail::adaptive_gk(f, cuts[i], cuts[i + 1], tol * (cuts[i + 1] - cuts[i]) / (hi - lo), 40);
      res.value += piece.value;
      res.error += piece.error;
    }
    return res;
  };

  QuadratureResult out;
  if (p.mu != 0.0) {
    const auto m = integrate(mu_part, -cutoff, cutoff);
    out.value += p.mu * m.value;
    out.error += p.mu * m.error;
  }
  if (p.sigma0_sq != 0.0) {
    const auto rp = integrate(right_part, 0.0, cutoff);
    const auto lp = integrate(left_part, -cutoff, 0.0);
    out.value += p.sigma0_sq * (rp.value + lp.value);
    out.error += p.sigma0_sq * (rp.error + lp.error);
  }
  if (!std::isfinite(out.value) || out.error > 1e3 * tol)
    throw QuadratureError("Gamma quadrature did not converge: value " + std::to_string(out.value) + ", error " +
                          std::to_string(out.error));
  return out;
}

/// Row-major Gamma matrix over a set of points.
inline std::vector<double> gamma_matrix(const LimitParams& p, const std::vector<SpaceTime>& pts) {
  const std::size_t k = pts.size();
  std::vector<double> m(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) m[i * k + j] = m[j * k + i] = Gamma_closed(p, pts[i], pts[j]);
  return m;
}

/// Covariance of V given Z: Gamma at spatial arguments shifted by Z(t).
inline std::vector<double> conditional_cov_V(const LimitParams& p, const std::vector<double>& Z,
                                             const std::vector<SpaceTime>& pts) {
  if (Z.size() != pts.size()) throw std::invalid_argument("one Z value per point is required");
  std::vector<SpaceTime> shifted(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) shifted[i].r += Z[i];
  return gamma_matrix(p, shifted);
}

/// Averaged covariance when mu = sigma0^2.
inline double averaged_cov_fBM(const LimitParams& p, double s, double t, double rel_tol = 1e-12) {
  if (std::abs(p.mu - p.sigma0_sq) > rel_tol * std::max(1.0, p.mu))
    throw std::invalid_argument("fBM covariance needs mu == sigma0_sq");
  if (s < 0 || t < 0) throw std::invalid_argument("negative time");
  return p.mu * std::sqrt(p.sigma1_sq + p.sigma2_sq) / std::sqrt(2.0 * std::numbers::pi) *
         (std::sqrt(s) + std::sqrt(t) - std::sqrt(std::abs(s - t)));
}

/// Z(t) = sigma2 W(t) at sorted times, from independent Brownian increments.
struct ZPathSample {
  std::vector<double> times;
  std::vector<double> values;
};

inline ZPathSample sample_Z_path(double sigma2_sq, const std::vector<double>& times, Stream& rng) {
  if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0))
    throw std::invalid_argument("Z path times must be sorted and nonnegative");
  std::normal_distribution<double> g;
  ZPathSample z{times, {}};
  double prev_t = 0.0, cur = 0.0;
  for (double t : times) {
    cur += std::sqrt(sigma2_sq * (t - prev_t)) * g(rng);
    z.values.push_back(t == 0.0 ? 0.0 : cur);
    prev_t = t;
  }
  return z;
}

struct MixtureMoments {
  double variance = 0;
  double variance_se = 0;
  /// Excess kurtosis of directly sampled V.
  double excess_kurtosis = 0;
  double excess_kurtosis_se = 0;
  /// Same quantity from the conditional variances alone: 3 Var(S) / E(S)^2.
  double conditional_excess_kurtosis = 0;
  double conditional_excess_kurtosis_se = 0;
  std::int64_t draws = 0;
};

namespace detail {

/// Delete-one jackknife SE of a smooth function of per-draw moment sums,
/// computed by grouping draws into `groups` blocks.
template <class Stat>
double grouped_jackknife_se(const std::vector<std::vector<double>>& block_sums, const std::vector<double>& block_n,
                            Stat&& stat) {
  const std::size_t g = block_n.size();
  const std::size_t d = block_sums.front().size();
  std::vector<double> tot(d, 0.0);
  double ntot = 0;
  for (std::size_t b = 0; b < g; ++b) {
    for (std::size_t i = 0; i < d; ++i) tot[i] += block_sums[b][i];
    ntot += block_n[b];
  }
  std::vector<double> reps(g);
  double mean = 0;
  for (std::size_t b = 0; b < g; ++b) {
    std::vector<double> m(d);
    for (std::size_t i = 0; i < d; ++i) m[i] = (tot[i] - block_sums[b][i]) / (ntot - block_n[b]);
    reps[b] = stat(m);
    mean += reps[b];
  }
  mean /= static_cast<double>(g);
  double ss = 0;
  for (double x : reps) ss += (x - mean) * (x - mean);
  return std::sqrt(ss * static_cast<double>(g - 1) / static_cast<double>(g));
}

}  // namespace detail

/// Moments of the limiting V(t, r): given Z(t) ~ N(0, sigma2^2 t), V is a
/// centered Gaussian with variance Gamma((t, r + Z), (t, r + Z)).
inline MixtureMoments mixture_moments_V(const LimitParams& p, double t, double r, std::int64_t draws,
                                        std::uint64_t seed) {
  if (draws < 10000) throw std::invalid_argument("mixture moments need at least 1e4 draws");
  p.validate();
  constexpr std::size_t groups = 100;
  std::vector<std::vector<double>> raw(groups, std::vector<double>(2, 0.0));
  std::vector<std::vector<double>> cond(groups, std::vector<double>(2, 0.0));
  std::vector<double> gn(groups, 0.0);
  std::normal_distribution<double> g;
  for (std::int64_t i = 0; i < draws; ++i) {
    Stream rng(seed, StreamTag::synthetic, {static_cast<std::uint64_t>(i)});
    const double z = std::sqrt(p.sigma2_sq * t) * g(rng);
    const SpaceTime pt{t, r + z};
    const double S = Gamma_closed(p, pt, pt);
    const double v = std::sqrt(std::max(S, 0.0)) * g(rng);
    const auto b = static_cast<std::size_t>(i) % groups;
    raw[b][0] += v * v;
    raw[b][1] += v * v * v * v;
    cond[b][0] += S;
    cond[b][1] += S * S;
    gn[b] += 1.0;
  }
  auto kurt_raw = [](const std::vector<double>& m) { return m[1] / (m[0] * m[0]) - 3.0; };
  auto kurt_cond = [](const std::vector<double>& m) { return 3.0 * (m[1] - m[0] * m[0]) / (m[0] * m[0]); };
  auto second = [](const std::vector<double>& m) { return m[0]; };

  std::vector<double> tr(2, 0.0), tc(2, 0.0);
  for (std::size_t b = 0; b < groups; ++b)
    for (int i = 0; i < 2; ++i) tr[i] += raw[b][i], tc[i] += cond[b][i];
  const auto nd = static_cast<double>(draws);
  for (int i = 0; i < 2; ++i) tr[i] /= nd, tc[i] /= nd;

  MixtureMoments out;
  out.draws = draws;
  out.variance = tr[0];
  out.variance_se = detail::grouped_jackknife_se(raw, gn, second);
  out.excess_kurtosis = kurt_raw(tr);
  out.excess_kurtosis_se = detail::grouped_jackknife_se(raw, gn, kurt_raw);
  out.conditional_excess_kurtosis = kurt_cond(tc);
  out.conditional_excess_kurtosis_se = detail::grouped_jackknife_se(cond, gn, kurt_cond);
  return out;
}

}  // namespace rwre
