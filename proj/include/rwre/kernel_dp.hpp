#pragma once

// Exact quenched computations by repeated application of the one-step
// transition operator of a fixed environment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwre/env_model.hpp"
#include "rwre/numeric.hpp"

namespace rwre {

/// A function on Z stored explicitly on [lo, lo + values.size() - 1] and
/// constant outside: `left_fill` below the band, `right_fill` above it.
struct SiteField {
  std::int64_t lo = 0;
  std::vector<double> values;
  double left_fill = 0.0;
  double right_fill = 0.0;
  /// Total |value - fill| discarded when trimming near-constant ends.
  double trimmed = 0.0;

  std::int64_t hi() const noexcept { return lo + static_cast<std::int64_t>(values.size()) - 1; }
  Window band() const noexcept { return {lo, hi()}; }
  double at(std::int64_t x) const noexcept {
    if (x < lo) return left_fill;
    if (x > hi()) return right_fill;
    return values[static_cast<std::size_t>(x - lo)];
  }
};

inline constexpr double kTrimTolerance = 1e-20;

/// Trim threshold next to a fill value: `tol`, or a few ulps of the fill
/// when that is coarser (values next to a fill of 1 cannot resolve 1e-20).
inline double fill_tolerance(double fill, double tol) {
  return std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(fill));
}

/// Drops band entries at either end that agree with the fill to within
/// the trim threshold; keeps exact values otherwise.
inline void trim(SiteField& g, double tol = kTrimTolerance) {
  std::size_t b = 0, e = g.values.size();
  const double tl = fill_tolerance(g.left_fill, tol), tr = fill_tolerance(g.right_fill, tol);
  while (b < e && std::abs(g.values[b] - g.left_fill) <= tl) g.trimmed += std::abs(g.values[b++] - g.left_fill);
  while (e > b && std::abs(g.values[e - 1] - g.right_fill) <= tr) {
    --e;
    g.trimmed += std::abs(g.values[e] - g.right_fill);
  }
  if (b == 0 && e == g.values.size()) return;
  g.values = std::vector<double>(g.values.begin() + static_cast<std::ptrdiff_t>(b),
                                 g.values.begin() + static_cast<std::ptrdiff_t>(e));
  g.lo += static_cast<std::int64_t>(b);
}

/// (Pg)(x) = omega_x g(x+1) + (1 - omega_x) g(x-1).
inline SiteField backward_step(const Environment& env, const SiteField& g, double tol = kTrimTolerance) {
  SiteField out;
  out.left_fill = g.left_fill;
  out.right_fill = g.right_fill;
  out.trimmed = g.trimmed;
  out.lo = g.lo - 1;
  const std::int64_t hi = g.hi() + 1;
  if (!env.window().contains(Window{out.lo, hi}))
    throw WindowError("backward step needs sites " + to_string(Window{out.lo, hi}) + " beyond environment window " +
                      to_string(env.window()));
  out.values.resize(static_cast<std::size_t>(hi - out.lo + 1));
  const double* om = env.omega().data() + (out.lo - env.window().lo);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto x = out.lo + static_cast<std::int64_t>(i);
    out.values[i] = om[i] * g.at(x + 1) + (1.0 - om[i]) * g.at(x - 1);
  }
  trim(out, tol);
  return out;
}

/// `steps` applications of backward_step, reusing two buffers.
inline SiteField backward(const Environment& env, SiteField g, std::int64_t steps, double tol = kTrimTolerance) {
  if (steps < 0) throw std::invalid_argument("negative step count");
  std::vector<double> pad, next;
  const double lf = g.left_fill, rf = g.right_fill;
  const double tl = fill_tolerance(lf, tol), tr = fill_tolerance(rf, tol);
  for (std::int64_t k = 0; k < steps; ++k) {
    const std::size_t m = g.values.size();
    const std::int64_t lo = g.lo - 1, hi = g.lo + static_cast<std::int64_t>(m);
    if (!env.window().contains(Window{lo, hi}))
      throw WindowError("backward step needs sites " + to_string(Window{lo, hi}) + " beyond environment window " +
                        to_string(env.window()));
    // pad[j] holds g at lo - 1 + j
    pad.resize(m + 4);
    pad[0] = pad[1] = lf;
    std::copy(g.values.begin(), g.values.end(), pad.begin() + 2);
    pad[m + 2] = pad[m + 3] = rf;
    next.resize(m + 2);
    const double* om = env.omega().data() + (lo - env.window().lo);
    for (std::size_t i = 0; i < m + 2; ++i) next[i] = om[i] * pad[i + 2] + (1.0 - om[i]) * pad[i];
    std::size_t b = 0, e = next.size();
    while (b < e && std::abs(next[b] - lf) <= tl) g.trimmed += std::abs(next[b++] - lf);
    while (e > b && std::abs(next[e - 1] - rf) <= tr) {
      --e;
      g.trimmed += std::abs(next[e] - rf);
    }
    g.values.assign(next.begin() + static_cast<std::ptrdiff_t>(b), next.begin() + static_cast<std::ptrdiff_t>(e));
    g.lo = lo + static_cast<std::int64_t>(b);
  }
  return g;
}

enum class TailOp { le, gt };

/// The indicator 1{x <= floor(cutoff)} (or its complement) as a field.
inline SiteField indicator_field(double cutoff, TailOp op = TailOp::le) {
  SiteField g;
  g.lo = lattice_floor(cutoff) + 1;
  g.left_fill = op == TailOp::le ? 1.0 : 0.0;
  g.right_fill = 1.0 - g.left_fill;
  return g;
}

/// m -> P_w(X^m_N <= cutoff), or P_w(X^m_N > cutoff) for TailOp::gt.
inline SiteField tail_field(const Environment& env, std::int64_t N, double cutoff, TailOp op = TailOp::le) {
  if (N < 0) throw std::invalid_argument("negative step count");
  return backward(env, indicator_field(cutoff, op), N);
}

/// m -> P_w(X^m_{N1} <= c1, X^m_{N2} op c2) for N1 <= N2.
inline SiteField joint_tail_field(const Environment& env, std::int64_t N1, double c1, std::int64_t N2, double c2,
                                  TailOp op) {
  if (N1 < 0 || N2 < N1) throw std::invalid_argument("joint tail needs 0 <= N1 <= N2");
  const SiteField inner = tail_field(env, N2 - N1, c2, op);
  const std::int64_t k1 = lattice_floor(c1);
  SiteField masked;
  masked.lo = std::min(inner.lo, k1 + 1);
  masked.left_fill = inner.left_fill;
  masked.right_fill = 0.0;
  masked.trimmed = inner.trimmed;
  for (std::int64_t y = masked.lo; y <= k1; ++y) masked.values.push_back(inner.at(y));
  trim(masked);
  return backward(env, std::move(masked), N1);
}

/// Exact forward push-forward of a probability mass function.
inline SiteField evolve_pmf(const Environment& env, SiteField pmf, std::int64_t steps) {
  if (steps < 0) throw std::invalid_argument("negative step count");
  if (pmf.left_fill != 0.0 || pmf.right_fill != 0.0) throw std::invalid_argument("pmf must vanish outside its band");
  for (std::int64_t k = 0; k < steps; ++k) {
    if (pmf.values.empty()) return pmf;
    if (!env.window().contains(pmf.band()))
      throw WindowError("pmf support " + to_string(pmf.band()) + " leaves environment window " +
                        to_string(env.window()));
    std::vector<double> next(pmf.values.size() + 2, 0.0);
    const double* om = env.omega().data() + (pmf.lo - env.window().lo);
    for (std::size_t i = 0; i < pmf.values.size(); ++i) {
      const double m = pmf.values[i];
      next[i + 2] += om[i] * m;
      next[i] += (1.0 - om[i]) * m;
    }
    pmf.values = std::move(next);
    pmf.lo -= 1;
  }
  return pmf;
}

// ---------------------------------------------------------------------------
// Current moments.

struct GridPoint {
  double t = 1.0;
  double r = 0.0;
};

/// Time step and real cutoff of one observation front.
struct Front {
  std::int64_t steps = 0;
  double cutoff = 0.0;
};

/// Front for Y_n(t, r); `shift` is subtracted from the cutoff (Z_{nt} for
/// the shifted current).
inline Front make_front(std::int64_t n, GridPoint p, double v, double shift = 0.0) {
  if (p.t < 0) throw std::invalid_argument("negative time fraction");
  const double nd = static_cast<double>(n);
  return {lattice_floor(nd * p.t), nd * p.t * v + p.r * std::sqrt(nd) - shift};
}

struct CurrentMoments {
  std::vector<double> mean;
  /// Row-major k x k covariance of n^{-1/4} V_n across fronts.
  std::vector<double> cov;
  std::size_t k = 0;
  double truncation_tail = 0.0;

  double cov_at(std::size_t i, std::size_t j) const { return cov[i * k + j]; }
};

/// Exact E_w Y for one front: sum over m > 0 of mean(m) P(X^m <= c) minus
/// sum over m <= 0 of mean(m) P(X^m > c).
template <class MeanFn>
double quenched_mean_from_tail(const SiteField& tail, MeanFn&& mean) {
  KahanSum acc;
  for (std::int64_t m = 1; m <= tail.hi(); ++m) acc += mean(m) * tail.at(m);
  for (std::int64_t m = tail.lo; m <= 0; ++m) acc -= mean(m) * (1.0 - tail.at(m));
  return acc.value();
}

/// Exact Var_w Y for one front (unscaled): per site, the mean count times
/// q(1 - q) plus the count variance times q^2, with q the probability that a
/// particle from that site is counted.
template <class MeanFn, class VarFn>
double quenched_variance_from_tail(const SiteField& tail, MeanFn&& mean, VarFn&& var) {
  KahanSum acc;
  const std::int64_t lo = std::min<std::int64_t>(tail.lo, 1), hi = std::max<std::int64_t>(tail.hi(), 0);
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double T = tail.at(x);
    const double q = x > 0 ? T : 1.0 - T;
    acc += mean(x) * q * (1.0 - q) + var(x) * q * q;
  }
  return acc.value();
}

template <class MeanFn>
CurrentMoments quenched_mean_current(const Environment& env, MeanFn&& mean, const std::vector<Front>& fronts) {
  CurrentMoments out;
  out.k = fronts.size();
  for (const Front& f : fronts) {
    const SiteField tail = tail_field(env, f.steps, f.cutoff);
    out.mean.push_back(quenched_mean_from_tail(tail, mean));
    out.truncation_tail += tail.trimmed;
  }
  return out;
}

/// Exact quenched means and covariance of n^{-1/4} V_n over the fronts.
/// Sites are independent under P_w, so the covariance is a sum of per-site
/// random-sum covariances.
template <class MeanFn, class VarFn>
CurrentMoments quenched_cov_current(const Environment& env, MeanFn&& mean, VarFn&& var, std::int64_t n,
                                    const std::vector<Front>& fronts) {
  const std::size_t k = fronts.size();
  CurrentMoments out;
  out.k = k;
  out.cov.assign(k * k, 0.0);
  std::vector<SiteField> tails;
  tails.reserve(k);
  for (const Front& f : fronts) {
    tails.push_back(tail_field(env, f.steps, f.cutoff));
    out.mean.push_back(quenched_mean_from_tail(tails.back(), mean));
    out.truncation_tail += tails.back().trimmed;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      // a is the earlier front.
      std::size_t a = i, b = j;
      if (fronts[b].steps < fronts[a].steps) std::swap(a, b);
      const SiteField& Ta = tails[a];
      const SiteField& Tb = tails[b];
      SiteField J;
      if (i == j) {
        J.lo = 0;  // P(X <= c, X > c) = 0
      } else {
        J = joint_tail_field(env, fronts[a].steps, fronts[a].cutoff, fronts[b].steps, fronts[b].cutoff, TailOp::gt);
        out.truncation_tail += J.trimmed;
      }
      std::int64_t lo = std::min({Ta.lo, Tb.lo, i == j ? Ta.lo : J.lo, std::int64_t{1}});
      std::int64_t hi = std::max({Ta.hi(), Tb.hi(), i == j ? Ta.hi() : J.hi(), std::int64_t{0}});
      KahanSum acc;
      for (std::int64_t x = lo; x <= hi; ++x) {
        const double ta = Ta.at(x), tb = Tb.at(x);
        const double cross = ta * (1.0 - tb) - J.at(x);
        const double m = mean(x);
        const double w = var(x);
        double term = m * cross;
        if (w != 0.0) term += w * (x > 0 ? ta * tb : (1.0 - ta) * (1.0 - tb));
        acc += term;
      }
      out.cov[i * k + j] = out.cov[j * k + i] = scale * acc.value();
    }
  }
  return out;
}

}  // namespace rwre
