#include <cmath>
#include <numbers>
#include <random>

#include "catch_amalgamated.hpp"
#include "rwre/limit_theory.hpp"
#include "rwre/stat_harness.hpp"

using namespace rwre;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Psi values") {
  CHECK(Psi(0.0, -2.0) == 2.0);
  CHECK(Psi(0.0, 3.0) == 0.0);
  CHECK_THAT(Psi(1.0, 0.0), WithinAbs(1.0 / std::sqrt(2 * std::numbers::pi), 1e-15));
  CHECK_THROWS(Psi(-1.0, 0.0));
}

TEST_CASE("Psi identities") {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> ua(0.01, 5), ux(-6, 6);
  for (int i = 0; i < 200; ++i) {
    const double a = ua(g), x = ux(g);
    CHECK_THAT(Psi(a, x) - Psi(a, -x), WithinAbs(-x, 1e-12));
    const double h = 1e-5;
    const double d = (Psi(a, x + h) - Psi(a, x - h)) / (2 * h);
    CHECK_THAT(d, WithinAbs(-normal::cdf(-x / std::sqrt(a)), 1e-7));
    CHECK(Psi(a * 1.1, x) >= Psi(a, x) - 1e-14);
    CHECK(Psi(a, x) >= std::max(-x, 0.0) - 1e-14);
  }
}

TEST_CASE("Gamma closed form") {
  const LimitParams p{1.0, 0.0, 1.0, 0.0};
  CHECK_THAT(Gamma_closed(p, {1, 0}, {1, 0}), WithinAbs(1 / std::sqrt(std::numbers::pi), 1e-15));
  CHECK(Gamma_closed(p, {0, 0.3}, {1, -0.2}) == 0.0);
  const LimitParams q{1.3, 0.7, 0.8, 0.0};
  CHECK_THAT(Gamma_closed(q, {0.5, 0.2}, {1.5, -1.0}), WithinAbs(Gamma_closed(q, {1.5, -1.0}, {0.5, 0.2}), 1e-15));
  CHECK_THROWS(Gamma_closed(q, {-1, 0}, {1, 0}));
}

TEST_CASE("Gamma is linear in the densities") {
  const LimitParams a{1.0, 0.0, 0.8, 0.0}, b{0.0, 1.0, 0.8, 0.0}, c{1.7, 0.4, 0.8, 0.0};
  for (SpaceTime s : {SpaceTime{0.5, -1}, SpaceTime{1, 0.3}})
    for (SpaceTime t : {SpaceTime{1, 0}, SpaceTime{2, 0.5}})
      CHECK_THAT(Gamma_closed(c, s, t), WithinAbs(1.7 * Gamma_closed(a, s, t) + 0.4 * Gamma_closed(b, s, t), 1e-14));
}

TEST_CASE("Gamma integral matches closed form") {
  const LimitParams p{1.2, 0.9, 0.75, 0.0};
  const std::vector<SpaceTime> pts = {{0.5, 0}, {1, 0}, {1, 0.5}, {2, -1}, {0.25, 1.5}};
  for (auto s : pts)
    for (auto t : pts) CHECK_THAT(Gamma_integral(p, s, t).value, WithinAbs(Gamma_closed(p, s, t), 1e-8));
}

TEST_CASE("Gamma matrices are positive semidefinite") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> ut(0.05, 3), ur(-2, 2), up(0.1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const LimitParams p{up(g), up(g), up(g), 0.0};
    std::vector<SpaceTime> pts;
    const int k = 2 + trial % 7;
    for (int i = 0; i < k; ++i) pts.push_back({ut(g), ur(g)});
    CHECK(min_eigenvalue(gamma_matrix(p, pts), pts.size()) >= -1e-12);
  }
}

TEST_CASE("conditional covariance shifts the spatial arguments") {
  const LimitParams p{1.0, 1.0, 0.75, 0.5};
  const std::vector<SpaceTime> pts = {{1, 0}, {2, 0.5}};
  CHECK(conditional_cov_V(p, {0.0, 0.0}, pts) == gamma_matrix(p, pts));
  const auto m = conditional_cov_V(p, {0.3, -0.4}, pts);
  CHECK(m[1] == Gamma_closed(p, {1, 0.3}, {2, 0.1}));
  CHECK_THROWS(conditional_cov_V(p, {0.0}, pts));
  // Without initial fluctuations the equal-time variance ignores Z.
  const LimitParams q{1.0, 0.0, 0.75, 0.5};
  CHECK_THAT(conditional_cov_V(q, {1.7}, {{1, 0}})[0], WithinAbs(Gamma_closed(q, {1, 0}, {1, 0}), 1e-15));
}

TEST_CASE("fBM covariance") {
  const LimitParams p{1.0, 1.0, 1.0, 0.0};
  CHECK_THAT(averaged_cov_fBM(p, 1, 1), WithinAbs(2 / std::sqrt(2 * std::numbers::pi), 1e-15));
  CHECK_THAT(averaged_cov_fBM(p, 1, 1), WithinAbs(Gamma_closed(p, {1, 0}, {1, 0}), 1e-15));
  CHECK_THROWS(averaged_cov_fBM({1.0, 0.5, 1.0, 0.0}, 1, 1));

  SECTION("average of the conditional covariance over Z paths") {
    const LimitParams q{1.0, 1.0, 0.75, 0.45};
    const std::vector<SpaceTime> pts = {{1, 0}, {2, 0}};
    const int R = 100000;
    std::vector<std::vector<double>> vals(3);
    for (int i = 0; i < R; ++i) {
      Stream rng(11, StreamTag::brownian, {static_cast<std::uint64_t>(i)});
      const ZPathSample z = sample_Z_path(q.sigma2_sq, {1.0, 2.0}, rng);
      const auto m = conditional_cov_V(q, z.values, pts);
      vals[0].push_back(m[0]);
      vals[1].push_back(m[1]);
      vals[2].push_back(m[3]);
    }
    const double target[3] = {averaged_cov_fBM(q, 1, 1), averaged_cov_fBM(q, 1, 2), averaged_cov_fBM(q, 2, 2)};
    for (int j = 0; j < 3; ++j) {
      double s = 0, ss = 0;
      for (double v : vals[j]) s += v, ss += v * v;
      const double mean = s / R, se = std::sqrt((ss / R - mean * mean) / R);
      CHECK(std::abs(mean - target[j]) < 4 * se);
    }
  }
}

TEST_CASE("Z paths") {
  const int R = 20000;
  std::vector<double> z1, dz;
  for (int i = 0; i < R; ++i) {
    Stream rng(5, StreamTag::brownian, {static_cast<std::uint64_t>(i)});
    const ZPathSample z = sample_Z_path(0.5, {0.0, 1.0, 3.0}, rng);
    CHECK(z.values[0] == 0.0);
    z1.push_back(z.values[1]);
    dz.push_back(z.values[2] - z.values[1]);
  }
  auto var = [](const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x * x;
    return s / static_cast<double>(xs.size());
  };
  CHECK_THAT(var(z1), WithinRel(0.5, 4 * std::sqrt(2.0 / R)));
  CHECK_THAT(var(dz), WithinRel(1.0, 4 * std::sqrt(2.0 / R)));
  double cross = 0;
  for (int i = 0; i < R; ++i) cross += z1[static_cast<std::size_t>(i)] * dz[static_cast<std::size_t>(i)];
  CHECK(std::abs(cross / R) < 4 * std::sqrt(0.5 / R));
  Stream rng(1);
  CHECK_THROWS(sample_Z_path(1.0, {2.0, 1.0}, rng));
}

TEST_CASE("mixture moments") {
  SECTION("no environment noise gives a Gaussian") {
    const MixtureMoments m = mixture_moments_V({1.0, 1.0, 0.75, 0.0}, 1.0, 0.0, 100000, 3);
    CHECK_THAT(m.conditional_excess_kurtosis, WithinAbs(0.0, 1e-12));
    CHECK(std::abs(m.excess_kurtosis) < 4 * m.excess_kurtosis_se);
    CHECK_THAT(m.variance, WithinRel(Gamma_closed({1.0, 1.0, 0.75, 0.0}, {1, 0}, {1, 0}), 0.02));
  }
  SECTION("no initial fluctuations at r = 0") {
    const MixtureMoments m = mixture_moments_V({1.0, 0.0, 0.75, 0.5}, 1.0, 0.0, 20000, 3);
    CHECK_THAT(m.conditional_excess_kurtosis, WithinAbs(0.0, 1e-10));
  }
  SECTION("heavy tails with both noise sources") {
    const MixtureMoments m = mixture_moments_V({1.0, 1.0, 1.0139, 0.20736}, 1.0, 0.0, 200000, 3);
    CHECK(m.conditional_excess_kurtosis > 4 * m.conditional_excess_kurtosis_se);
  }
  CHECK_THROWS(mixture_moments_V({1.0, 1.0, 1.0, 0.0}, 1.0, 0.0, 100, 1));
}

TEST_CASE("bivariate normal upper orthant") {
  CHECK_THAT(normal::bvn_upper(0.3, -0.2, 0.0), WithinAbs(normal::sf(0.3) * normal::sf(-0.2), 1e-15));
  for (double r : {-0.9, -0.6, -0.2, 0.1, 0.5, 0.8, 0.95})
    CHECK_THAT(normal::bvn_upper(0, 0, r), WithinAbs(0.25 + std::asin(r) / (2 * std::numbers::pi), 1e-14));
  CHECK_THAT(normal::bvn_upper(0.4, 1.1, 0.6), WithinAbs(normal::bvn_upper(1.1, 0.4, 0.6), 1e-15));
  // Complement: P(X > h, Y > k) + P(X > h, Y <= k) = P(X > h).
  CHECK_THAT(normal::bvn_upper(0.4, 1.1, 0.6) + normal::bvn_upper(0.4, -1.1, -0.6), WithinAbs(normal::sf(0.4), 1e-14));
}
