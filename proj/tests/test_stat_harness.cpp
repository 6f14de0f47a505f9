#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"
#include "rwre/stat_harness.hpp"

using namespace rwre;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ReplicaMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n;
  ReplicaMatrix X(rows, cols);
  for (double& v : X.data) v = n(g);
  return X;
}

// Plain two-pass covariance of columns a and b, skipping one row.
double cov_without(const ReplicaMatrix& X, std::size_t a, std::size_t b, std::size_t skip) {
  double ma = 0, mb = 0;
  const double m = static_cast<double>(X.rows - 1);
  for (std::size_t i = 0; i < X.rows; ++i)
    if (i != skip) ma += X(i, a), mb += X(i, b);
  ma /= m, mb /= m;
  double s = 0;
  for (std::size_t i = 0; i < X.rows; ++i)
    if (i != skip) s += (X(i, a) - ma) * (X(i, b) - mb);
  return s / (m - 1);
}

}  // namespace

TEST_CASE("covariance of independent columns") {
  const ReplicaMatrix X = gaussian_matrix(10000, 3, 1);
  const CovEstimate c = estimate_cov(X);
  CHECK(c.k == 3);
  CHECK(c.replicas == 10000);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(c.cov_at(i, i) - 1) < 4 * c.se_at(i, i));
    CHECK_THAT(c.se_at(i, i), WithinRel(std::sqrt(2.0 / 10000), 0.2));
    for (std::size_t j = i + 1; j < 3; ++j) {
      CHECK(std::abs(c.cov_at(i, j)) < 4 * c.se_at(i, j));
      CHECK_THAT(c.se_at(i, j), WithinRel(std::sqrt(1.0 / 10000), 0.2));
      CHECK(c.cov_at(i, j) == c.cov_at(j, i));
    }
  }
}

TEST_CASE("jackknife matches explicit leave-one-out") {
  const ReplicaMatrix X = gaussian_matrix(40, 2, 7);
  const CovEstimate c = estimate_cov(X);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = a; b < 2; ++b) {
      std::vector<double> loo;
      double m = 0;
      for (std::size_t i = 0; i < X.rows; ++i) {
        loo.push_back(cov_without(X, a, b, i));
        m += loo.back();
      }
      m /= 40;
      double ss = 0;
      for (double v : loo) ss += (v - m) * (v - m);
      CHECK_THAT(c.se_at(a, b), WithinRel(std::sqrt(39.0 / 40 * ss), 1e-9));
    }
}

TEST_CASE("degenerate columns") {
  ReplicaMatrix X = gaussian_matrix(200, 3, 2);
  for (std::size_t i = 0; i < X.rows; ++i) X(i, 1) = X(i, 0), X(i, 2) = 4.5;
  const CovEstimate c = estimate_cov(X);
  CHECK_THAT(c.corr_at(0, 1), WithinAbs(1.0, 1e-12));
  CHECK(c.cov_at(2, 2) == 0.0);
  CHECK(c.corr_at(0, 2) == 0.0);
  CHECK_THROWS_AS(estimate_cov(gaussian_matrix(10, 2, 1)), InsufficientData);
  X(3, 0) = NAN;
  CHECK_THROWS(estimate_cov(X));
}

TEST_CASE("correlation estimate") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> n;
  ReplicaMatrix X(5000, 2);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double a = n(g), b = n(g);
    X(i, 0) = a;
    X(i, 1) = 0.6 * a + 0.8 * b;
  }
  const CorrEstimate c = estimate_corr(X, 0, 1);
  // Large-sample SE of a Pearson correlation: (1 - rho^2) / sqrt(n).
  CHECK_THAT(c.se, WithinRel(0.64 / std::sqrt(5000.0), 0.2));
  CHECK(std::abs(c.corr - 0.6) < 4 * c.se);
  CHECK_THAT(c.corr, WithinAbs(estimate_cov(X).corr_at(0, 1), 1e-12));
  CHECK_THROWS_AS(estimate_corr(gaussian_matrix(5, 2, 1), 0, 1), InsufficientData);
}

TEST_CASE("tolerance check") {
  const Verdict v = tolerance_check(1.3, 0.1, 1.0);
  CHECK_THAT(v.z, WithinAbs(3.0, 1e-12));
  CHECK(v.pass);
  CHECK_FALSE(tolerance_check(1.5, 0.1, 1.0).pass);
  CHECK(tolerance_check(1.5, 0.1, 1.0, 6.0).pass);
  CHECK(tolerance_check(2.0, 0.0, 2.0).pass);
  CHECK_FALSE(tolerance_check(2.0, 0.0, 2.5).pass);
}

TEST_CASE("moment normality") {
  std::mt19937_64 g(9);
  std::normal_distribution<double> n;
  std::exponential_distribution<double> e;
  std::vector<double> xs, ys;
  for (int i = 0; i < 10000; ++i) xs.push_back(n(g)), ys.push_back(e(g));
  const MomentSummary m = moment_normality(xs);
  CHECK(m.normal);
  CHECK_THAT(m.kurtosis_se, WithinAbs(std::sqrt(24.0 / 10000), 1e-15));
  const MomentSummary s = moment_normality(ys);
  CHECK_FALSE(s.normal);
  CHECK_THAT(s.skewness, WithinAbs(2.0, 0.3));
  CHECK_THROWS_AS(moment_normality({1.0, 2.0}), InsufficientData);
}

TEST_CASE("scaling fit") {
  const std::vector<double> n = {100, 400, 1600, 6400};
  std::vector<double> y;
  for (double x : n) y.push_back(3.0 * std::pow(x, 0.25));
  const ScalingFit f = scaling_fit(n, y);
  CHECK_THAT(f.slope, WithinAbs(0.25, 1e-12));
  CHECK_THAT(f.intercept, WithinAbs(std::log(3.0), 1e-12));
  CHECK_THAT(f.slope_se, WithinAbs(0.0, 1e-12));
  CHECK_THROWS(scaling_fit({1, 2}, {1, 2}));
  CHECK_THROWS(scaling_fit({1, 2, 3}, {1, -2, 3}));
}

TEST_CASE("Poisson goodness of fit") {
  const std::vector<double> pmf = poisson_pmf(2.5);
  double tot = 0;
  for (double p : pmf) tot += p;
  CHECK_THAT(tot, WithinAbs(1.0, 1e-11));
  CHECK_THAT(pmf[3], WithinAbs(std::exp(-2.5) * 2.5 * 2.5 * 2.5 / 6, 1e-15));

  std::mt19937_64 g(3);
  std::poisson_distribution<std::int64_t> pois(2.5), off(3.0);
  std::vector<std::int64_t> good, bad;
  for (int i = 0; i < 20000; ++i) good.push_back(pois(g)), bad.push_back(off(g));
  const GofResult r = count_gof(good, pmf);
  CHECK(r.pass);
  CHECK(r.dof == r.bins - 1);
  CHECK_FALSE(count_gof(bad, pmf).pass);
  CHECK_THROWS_AS(count_gof({1, 2, 3}, pmf), InsufficientData);
}

TEST_CASE("minimum eigenvalue") {
  CHECK_THAT(min_eigenvalue({2, 1, 1, 2}, 2), WithinAbs(1.0, 1e-12));
  CHECK_THAT(min_eigenvalue({1, 2, 2, 1}, 2), WithinAbs(-1.0, 1e-12));
}
