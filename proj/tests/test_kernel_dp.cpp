#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"
#include "rwre/kernel_dp.hpp"
#include "rwre/limit_theory.hpp"
#include "rwre/stat_harness.hpp"

using namespace rwre;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Environment constant_env(double p, Window w) { return sample_environment(EnvSpec::point_mass(p), w, 1); }

// Sum over all 2^N paths of the path probability times the indicator.
template <class Accept>
double paths(const Environment& env, std::int64_t m, int N, Accept&& accept) {
  double total = 0;
  std::vector<std::int64_t> trace(static_cast<std::size_t>(N) + 1);
  for (std::uint32_t bits = 0; bits < (1u << N); ++bits) {
    double p = 1;
    std::int64_t x = m;
    trace[0] = x;
    for (int s = 0; s < N; ++s) {
      const double w = env.omega(x);
      const bool right = bits >> s & 1u;
      p *= right ? w : 1 - w;
      x += right ? 1 : -1;
      trace[static_cast<std::size_t>(s) + 1] = x;
    }
    if (accept(trace)) total += p;
  }
  return total;
}

}  // namespace

TEST_CASE("evolve_pmf") {
  const Environment env = constant_env(0.75, {-2000, 2000});
  SiteField delta;
  delta.lo = 0;
  delta.values = {1.0};
  const SiteField two = evolve_pmf(env, delta, 2);
  CHECK_THAT(two.at(-2), WithinAbs(0.0625, 1e-15));
  CHECK_THAT(two.at(0), WithinAbs(0.375, 1e-15));
  CHECK_THAT(two.at(2), WithinAbs(0.5625, 1e-15));
  CHECK(two.at(1) == 0.0);
  CHECK(evolve_pmf(env, delta, 0).values == delta.values);

  const Environment rnd = sample_environment(EnvSpec::two_point(0.9, 0.6), {-1100, 1100}, 4);
  const SiteField far = evolve_pmf(rnd, delta, 1000);
  KahanSum mass;
  for (double v : far.values) mass += v;
  CHECK_THAT(mass.value(), WithinAbs(1.0, 1e-12));
  CHECK_THROWS_AS(evolve_pmf(rnd, delta, 1200), WindowError);
}

TEST_CASE("tail_field examples") {
  const Environment env = constant_env(0.75, {-50, 50});
  CHECK_THAT(tail_field(env, 2, 0.0).at(0), WithinAbs(0.4375, 1e-15));
  const SiteField sharp = tail_field(env, 0, 2.5);
  for (std::int64_t m = -5; m <= 5; ++m) CHECK(sharp.at(m) == (m <= 2 ? 1.0 : 0.0));
  const SiteField t = tail_field(env, 10, 1.3);
  for (std::int64_t m = -20; m <= -9; ++m) CHECK(t.at(m) == 1.0);
  for (std::int64_t m = 12; m <= 20; ++m) CHECK(t.at(m) == 0.0);
  CHECK_THROWS_AS(tail_field(env, 60, 0.0), WindowError);
}

TEST_CASE("tail_field is nonincreasing in the start") {
  const Environment env = sample_environment(EnvSpec::two_point(0.9, 0.6), {-400, 400}, 9);
  const SiteField t = tail_field(env, 200, 50.0);
  // Starts of equal parity are coupled monotonically.
  for (std::int64_t m = -300; m <= 300; ++m) CHECK(t.at(m + 2) <= t.at(m));
  for (double v : t.values) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("joint_tail_field examples") {
  const Environment env = constant_env(0.75, {-50, 50});
  CHECK(joint_tail_field(env, 1, 0.0, 2, 0.0, TailOp::gt).at(0) == 0.0);
  CHECK_THAT(joint_tail_field(env, 1, 1.0, 2, 0.0, TailOp::gt).at(0), WithinAbs(0.5625, 1e-15));
  const Environment rnd = sample_environment(EnvSpec::uniform(0.5, 0.95), {-80, 80}, 3);
  const SiteField j = joint_tail_field(rnd, 15, 2.0, 15, -1.5, TailOp::le);
  const SiteField t = tail_field(rnd, 15, -1.5);
  for (std::int64_t m = -30; m <= 30; ++m) CHECK_THAT(j.at(m), WithinAbs(t.at(m), 1e-15));
}

TEST_CASE("fields against path enumeration") {
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> u(-5, 5);
  const EnvSpec specs[] = {EnvSpec::two_point(0.9, 0.6), EnvSpec::uniform(0.5, 0.95),
                           EnvSpec::discrete({0.45, 0.7, 0.95}, {0.2, 0.5, 0.3})};
  for (int e = 0; e < 9; ++e) {
    const Environment env = sample_environment(specs[e % 3], {-30, 30}, g());
    const int N = 4 + e;
    const double c = u(g), c1 = u(g), c2 = u(g);
    const int N1 = e % (N + 1);
    const auto k = lattice_floor(c), k1 = lattice_floor(c1), k2 = lattice_floor(c2);
    const SiteField t = tail_field(env, N, c);
    const SiteField jg = joint_tail_field(env, N1, c1, N, c2, TailOp::gt);
    const SiteField jl = joint_tail_field(env, N1, c1, N, c2, TailOp::le);
    for (std::int64_t m = -12; m <= 12; ++m) {
      const auto n1 = static_cast<std::size_t>(N1), n = static_cast<std::size_t>(N);
      CHECK_THAT(t.at(m), WithinAbs(paths(env, m, N, [&](auto& tr) { return tr[n] <= k; }), 1e-14));
      CHECK_THAT(jg.at(m),
                 WithinAbs(paths(env, m, N, [&](auto& tr) { return tr[n1] <= k1 && tr[n] > k2; }), 1e-14));
      CHECK_THAT(jl.at(m),
                 WithinAbs(paths(env, m, N, [&](auto& tr) { return tr[n1] <= k1 && tr[n] <= k2; }), 1e-14));
    }
  }
}

TEST_CASE("forward and backward evolution are dual") {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 5; ++trial) {
    const Environment env = sample_environment(EnvSpec::two_point(0.9, 0.6), {-200, 250}, g());
    SiteField pmf, fn;
    pmf.lo = fn.lo = 0;
    double tot = 0;
    for (int i = 0; i < 50; ++i) {
      pmf.values.push_back(u(g));
      tot += pmf.values.back();
      fn.values.push_back(u(g));
    }
    for (double& v : pmf.values) v /= tot;
    const std::int64_t steps = 60;
    const SiteField fwd = evolve_pmf(env, pmf, steps);
    const SiteField bwd = backward(env, fn, steps, 0.0);
    KahanSum a, b;
    for (std::int64_t x = fwd.lo; x <= fwd.hi(); ++x) a += fwd.at(x) * fn.at(x);
    for (std::int64_t x = 0; x < 50; ++x) b += pmf.at(x) * bwd.at(x);
    CHECK_THAT(a.value(), WithinAbs(b.value(), 1e-12));
  }
}

TEST_CASE("quenched mean current") {
  auto one = [](std::int64_t) { return 1.0; };
  const Environment env = constant_env(0.75, {-400, 400});
  const Front f = make_front(100, {0.0, 0.5}, 0.5);
  CHECK(quenched_mean_from_tail(tail_field(env, f.steps, f.cutoff), one) == 5.0);
  const Front g = make_front(100, {0.0, -0.5}, 0.5);
  CHECK(quenched_mean_from_tail(tail_field(env, g.steps, g.cutoff), one) == -5.0);

  SECTION("constant environment: E Y stays within one of r sqrt(n)") {
    for (std::int64_t n : {400, 1600, 6400}) {
      const Environment big = constant_env(0.75, {-3 * n, 3 * n});
      for (double r : {-1.0, -0.37, 0.0, 0.81})
        for (double t : {0.5, 1.0}) {
          const Front fr = make_front(n, {t, r}, 0.5);
          const double m = quenched_mean_from_tail(tail_field(big, fr.steps, fr.cutoff), one);
          CHECK(std::abs(m - r * std::sqrt(static_cast<double>(n))) <= 1.0);
        }
    }
  }
}

TEST_CASE("quenched covariance") {
  SECTION("deterministic occupation reduces to binomial variances") {
    const Environment env = sample_environment(EnvSpec::two_point(0.9, 0.6), {-1500, 1500}, 21);
    const std::int64_t n = 400;
    const Front f = make_front(n, {1.0, 0.3}, 0.44);
    auto one = [](std::int64_t) { return 1.0; };
    auto zero = [](std::int64_t) { return 0.0; };
    const CurrentMoments cm = quenched_cov_current(env, one, zero, n, {f});
    const SiteField t = tail_field(env, f.steps, f.cutoff, TailOp::le);
    KahanSum s;
    for (std::int64_t m = -1000; m <= 1000; ++m) s += t.at(m) * (1 - t.at(m));
    CHECK_THAT(cm.cov_at(0, 0), WithinRel(s.value() / std::sqrt(static_cast<double>(n)), 1e-12));
  }
  SECTION("constant environment diagonal near the limit") {
    const std::int64_t n = 2500;
    const Environment env = constant_env(0.75, {-3 * n, 3 * n});
    auto one = [](std::int64_t) { return 1.0; };
    auto zero = [](std::int64_t) { return 0.0; };
    const CurrentMoments cm = quenched_cov_current(env, one, zero, n, {make_front(n, {1.0, 0.0}, 0.5)});
    const LimitParams lp{1.0, 0.0, 0.75, 0.0};
    CHECK_THAT(cm.cov_at(0, 0), WithinRel(Gamma_closed(lp, {1, 0}, {1, 0}), 0.05));
  }
  SECTION("symmetric positive semidefinite") {
    const Environment env = sample_environment(EnvSpec::two_point(0.9, 0.6), {-3000, 3000}, 8);
    const std::int64_t n = 900;
    std::vector<Front> fronts;
    for (GridPoint g : {GridPoint{0.25, -1}, GridPoint{0.5, 0}, GridPoint{1, 0.5}, GridPoint{1, -0.5},
                        GridPoint{2, 0}})
      fronts.push_back(make_front(n, g, 0.44));
    auto mu = [](std::int64_t x) { return 1.0 + 0.5 * std::sin(static_cast<double>(x)); };
    const CurrentMoments cm = quenched_cov_current(env, mu, mu, n, fronts);
    for (std::size_t i = 0; i < cm.k; ++i)
      for (std::size_t j = 0; j < cm.k; ++j) CHECK(cm.cov_at(i, j) == cm.cov_at(j, i));
    CHECK(min_eigenvalue(cm.cov, cm.k) >= -1e-9);
  }
}

TEST_CASE("fronts use floors") {
  const Front f = make_front(100, {0.255, 0.0}, 0.44);
  CHECK(f.steps == 25);
  CHECK_THAT(f.cutoff, WithinAbs(100 * 0.255 * 0.44, 1e-12));
  const Front z = make_front(400, {1.0, 0.0}, 0.5, 3.0);
  CHECK_THAT(z.cutoff, WithinAbs(197.0, 1e-12));
  CHECK_THROWS(make_front(100, {-1.0, 0.0}, 0.5));
}
