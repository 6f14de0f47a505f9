#pragma once

// Estimators and tolerance verdicts for replica output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "rwre/numeric.hpp"

namespace rwre {

class InsufficientData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Replicas in rows, variables in columns.
struct ReplicaMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  ReplicaMatrix() = default;
  ReplicaMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct CovEstimate {
  std::size_t k = 0;
  std::size_t replicas = 0;
  std::vector<double> mean;
  std::vector<double> cov;  // row-major, unbiased
  std::vector<double> se;   // delete-one jackknife
  double cov_at(std::size_t i, std::size_t j) const { return cov[i * k + j]; }
  double se_at(std::size_t i, std::size_t j) const { return se[i * k + j]; }
  double corr_at(std::size_t i, std::size_t j) const {
    const double d = std::sqrt(cov_at(i, i) * cov_at(j, j));
    return d > 0 ? cov_at(i, j) / d : 0.0;
  }
};

/// Unbiased sample covariance with delete-one jackknife standard errors.
/// The leave-one-out covariances are updated in closed form, so the cost is
/// O(replicas * k^2).
inline CovEstimate estimate_cov(const ReplicaMatrix& X, std::size_t min_replicas = 30) {
  const std::size_t n = X.rows, k = X.cols;
  if (n < min_replicas) throw InsufficientData("need at least " + std::to_string(min_replicas) + " replicas");
  if (k == 0) throw InsufficientData("no variables");
  for (double v : X.data)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite replica value");
  CovEstimate out;
  out.k = k;
  out.replicas = n;
  out.mean.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    KahanSum s;
    for (std::size_t i = 0; i < n; ++i) s += X(i, j);
    out.mean[j] = s.value() / static_cast<double>(n);
  }
  const auto nd = static_cast<double>(n);
  // Centered cross products.
  std::vector<double> S(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      KahanSum s;
      for (std::size_t i = 0; i < n; ++i) s += (X(i, a) - out.mean[a]) * (X(i, b) - out.mean[b]);
      S[a * k + b] = S[b * k + a] = s.value();
    }
  out.cov.resize(k * k);
  for (std::size_t i = 0; i < k * k; ++i) out.cov[i] = S[i] / (nd - 1.0);

  // Removing replica i: S_{-i} = S - n/(n-1) d_a d_b with d = x_i - mean.
  out.se.assign(k * k, 0.0);
  std::vector<double> loo(n);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      double m = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double da = X(i, a) - out.mean[a], db = X(i, b) - out.mean[b];
        loo[i] = (S[a * k + b] - nd / (nd - 1.0) * da * db) / (nd - 2.0);
        m += loo[i];
      }
      m /= nd;
      double ss = 0;
      for (double v : loo) ss += (v - m) * (v - m);
      out.se[a * k + b] = out.se[b * k + a] = std::sqrt((nd - 1.0) / nd * ss);
    }
  return out;
}

struct CorrEstimate {
  std::size_t replicas = 0;
  double corr = 0;
  double se = 0;
};

/// Sample correlation of columns a and b with its leave-one-out jackknife SE.
inline CorrEstimate estimate_corr(const ReplicaMatrix& X, std::size_t a, std::size_t b,
                                  std::size_t min_replicas = 30) {
  if (X.rows < min_replicas) throw InsufficientData("correlation needs at least " + std::to_string(min_replicas) + " replicas");
  const auto R = static_cast<double>(X.rows);
  KahanSum sx, sy, sxx, syy, sxy;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double x = X(i, a), y = X(i, b);
    sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
  }
  auto corr = [](double m, double Sx, double Sy, double Sxx, double Syy, double Sxy) {
    const double cx = Sxx - Sx * Sx / m, cy = Syy - Sy * Sy / m, cxy = Sxy - Sx * Sy / m;
    return cx > 0 && cy > 0 ? cxy / std::sqrt(cx * cy) : 0.0;
  };
  CorrEstimate out;
  out.replicas = X.rows;
  out.corr = corr(R, sx.value(), sy.value(), sxx.value(), syy.value(), sxy.value());
  std::vector<double> loo(X.rows);
  double mean = 0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double x = X(i, a), y = X(i, b);
    loo[i] = corr(R - 1, sx.value() - x, sy.value() - y, sxx.value() - x * x, syy.value() - y * y,
                  sxy.value() - x * y);
    mean += loo[i];
  }
  mean /= R;
  double ss = 0;
  for (double c : loo) ss += (c - mean) * (c - mean);
  out.se = std::sqrt(ss * (R - 1) / R);
  return out;
}

struct Verdict {
  double estimate = 0;
  double se = 0;
  double target = 0;
  double z = 0;
  double k = 4;
  bool pass = false;
};

/// Pass iff |estimate - target| <= k * se.
inline Verdict tolerance_check(double estimate, double se, double target, double k = 4.0) {
  Verdict v{estimate, se, target, 0.0, k, false};
  const double d = std::abs(estimate - target);
  v.z = se > 0 ? (estimate - target) / se : (d == 0 ? 0.0 : std::copysign(INFINITY, estimate - target));
  v.pass = d <= k * se;
  return v;
}

struct MomentSummary {
  std::size_t n = 0;
  double mean = 0;
  double variance = 0;
  double skewness = 0;
  double excess_kurtosis = 0;
  double skewness_se = 0;
  double kurtosis_se = 0;
  bool normal = false;
};

/// Sample skewness and excess kurtosis with their large-sample Gaussian SEs
/// (sqrt(6/n), sqrt(24/n)); normal iff both are within k SE of 0.
inline MomentSummary moment_normality(const std::vector<double>& xs, double k = 4.0) {
  if (xs.size() < 30) throw InsufficientData("moment test needs at least 30 samples");
  MomentSummary m;
  m.n = xs.size();
  const auto nd = static_cast<double>(m.n);
  KahanSum s;
  for (double x : xs) s += x;
  m.mean = s.value() / nd;
  KahanSum m2, m3, m4;
  for (double x : xs) {
    const double d = x - m.mean, d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double c2 = m2.value() / nd, c3 = m3.value() / nd, c4 = m4.value() / nd;
  m.variance = m2.value() / (nd - 1.0);
  if (c2 > 0) {
    m.skewness = c3 / std::pow(c2, 1.5);
    m.excess_kurtosis = c4 / (c2 * c2) - 3.0;
  }
  m.skewness_se = std::sqrt(6.0 / nd);
  m.kurtosis_se = std::sqrt(24.0 / nd);
  m.normal = std::abs(m.skewness) <= k * m.skewness_se && std::abs(m.excess_kurtosis) <= k * m.kurtosis_se;
  return m;
}

struct ScalingFit {
  std::vector<double> sizes;
  std::vector<double> stats;
  double slope = 0;
  double slope_se = 0;
  double intercept = 0;
};

/// Least-squares fit of log(stat) = intercept + slope log(size).
inline ScalingFit scaling_fit(const std::vector<double>& sizes, const std::vector<double>& stats) {
  if (sizes.size() != stats.size()) throw std::invalid_argument("sizes and statistics differ in length");
  if (sizes.size() < 3) throw InsufficientData("scaling fit needs at least three sizes");
  ScalingFit f{sizes, stats, 0, 0, 0};
  const auto n = static_cast<double>(sizes.size());
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0 && stats[i] > 0)) throw std::invalid_argument("scaling fit needs positive values");
    lx.push_back(std::log(sizes[i]));
    ly.push_back(std::log(stats[i]));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - f.intercept - f.slope * lx[i];
    rss += e * e;
  }
  f.slope_se = n > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  return f;
}

struct GofResult {
  double chi2 = 0;
  int dof = 0;
  double p_value = 1;
  int bins = 0;
  bool pass = false;
};

/// Two-sided 4-sigma normal tail probability, used as the chi-square level.
inline constexpr double kFourSigmaLevel = 6.334248366623996e-05;

/// Pearson chi-square of integer counts against a pmf on {0, 1, 2, ...}.
/// Cells are merged left to right until each has expected count >= 5; the
/// remaining upper tail forms the last cell.
inline GofResult count_gof(const std::vector<std::int64_t>& samples, const std::vector<double>& pmf,
                           double level = kFourSigmaLevel) {
  if (samples.size() < 50) throw InsufficientData("goodness-of-fit needs at least 50 samples");
  if (pmf.empty()) throw std::invalid_argument("empty pmf");
  const auto nd = static_cast<double>(samples.size());
  std::vector<double> observed(pmf.size() + 1, 0.0);
  for (auto c : samples) {
    if (c < 0) throw std::invalid_argument("negative count");
    observed[std::min<std::size_t>(static_cast<std::size_t>(c), pmf.size())] += 1.0;
  }
  std::vector<double> expected(pmf.size() + 1, 0.0);
  double acc = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    expected[i] = nd * pmf[i];
    acc += pmf[i];
  }
  expected.back() = nd * std::max(0.0, 1.0 - acc);

  std::vector<double> eo, ee;
  double co = 0, ce = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    co += observed[i];
    ce += expected[i];
    if (ce >= 5.0) {
      eo.push_back(co);
      ee.push_back(ce);
      co = ce = 0;
    }
  }
  if (ce > 0 || co > 0) {
    if (ee.empty()) {
      eo.push_back(co);
      ee.push_back(ce);
    } else {
      eo.back() += co;
      ee.back() += ce;
    }
  }
  GofResult g;
  g.bins = static_cast<int>(ee.size());
  if (g.bins < 2) throw InsufficientData("fewer than two goodness-of-fit cells");
  for (std::size_t i = 0; i < ee.size(); ++i) g.chi2 += (eo[i] - ee[i]) * (eo[i] - ee[i]) / ee[i];
  g.dof = g.bins - 1;
  g.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(g.dof), g.chi2));
  g.pass = g.p_value >= level;
  return g;
}

/// Poisson(lambda) pmf up to the point where the remaining mass is < tail.
inline std::vector<double> poisson_pmf(double lambda, double tail = 1e-12) {
  std::vector<double> p;
  double term = std::exp(-lambda), acc = 0;
  for (int k = 0; k < 10000; ++k) {
    p.push_back(term);
    acc += term;
    if (1.0 - acc < tail && k > lambda) break;
    term *= lambda / static_cast<double>(k + 1);
  }
  return p;
}

/// Smallest eigenvalue of a symmetric row-major matrix.
inline double min_eigenvalue(const std::vector<double>& m, std::size_t k) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i * k + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace rwre
