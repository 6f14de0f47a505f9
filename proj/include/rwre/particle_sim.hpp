#pragma once

// Initial configurations, independent walkers in a fixed environment, and the
// current observables measured on a (t, r) grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwre/env_model.hpp"
#include "rwre/kernel_dp.hpp"
#include "rwre/numeric.hpp"
#include "rwre/rng.hpp"

namespace rwre {

struct InitialConfig {
  InitSpec init;
  Window window;
  std::vector<std::uint32_t> counts;

  std::uint32_t count(std::int64_t x) const {
    if (!window.contains(x)) throw WindowError("site " + std::to_string(x) + " outside configuration window");
    return counts[static_cast<std::size_t>(x - window.lo)];
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline std::uint32_t sample_count(const OccupationProfile& occ, std::int64_t x, std::uint64_t seed,
                                  std::uint64_t replica) {
  if (occ.init().mode == InitMode::deterministic) return static_cast<std::uint32_t>(occ.init().mu);
  const double m = occ.mean(x);
  if (m <= 0.0) return 0;
  Stream rng(seed, StreamTag::initial_config, {replica, site_id(x)});
  std::poisson_distribution<std::uint32_t> pois(m);
  return pois(rng);
}

/// Occupation counts on `window`; site x uses its own keyed stream, so any
/// sub-window of a configuration is reproduced by sampling that sub-window.
inline InitialConfig sample_initial(const OccupationProfile& occ, Window window, std::uint64_t seed,
                                    std::uint64_t replica = 0) {
  InitialConfig c{occ.init(), window, {}};
  c.counts.resize(static_cast<std::size_t>(window.size()));
  for (std::int64_t x = window.lo; x <= window.hi; ++x)
    c.counts[static_cast<std::size_t>(x - window.lo)] = sample_count(occ, x, seed, replica);
  return c;
}

/// One particle's path of `steps` steps from `x`. The environment must cover
/// [x - steps, x + steps].
inline std::int64_t walk(const Environment& env, std::int64_t x, std::int64_t steps, Stream& rng) {
  const std::uint64_t* thr = env.thresholds() - env.window().lo;
  for (std::int64_t k = 0; k < steps; ++k) x += 2 * static_cast<std::int64_t>(rng() < thr[x]) - 1;
  return x;
}

inline Stream walk_stream(std::uint64_t seed, std::uint64_t replica, std::int64_t site, std::uint32_t index) {
  return Stream(seed, StreamTag::walk, {replica, site_id(site), index});
}

/// Positions of every particle at each checkpoint, particle-major.
struct Positions {
  std::vector<std::int64_t> checkpoints;
  std::vector<std::int64_t> starts;
  std::vector<std::int64_t> pos;

  std::size_t particles() const noexcept { return starts.size(); }
  std::int64_t at(std::size_t particle, std::size_t checkpoint) const {
    return pos[particle * checkpoints.size() + checkpoint];
  }
};

inline void require_cover(const Environment& env, Window starts, std::int64_t steps) {
  if (starts.empty()) return;
  const Window need{starts.lo - steps, starts.hi + steps};
  if (!env.window().contains(need))
    throw WindowError("walks need sites " + to_string(need) + " beyond environment window " +
                      to_string(env.window()));
}

/// Four independent walks advanced in lockstep; the chains are latency
/// bound, so interleaving them keeps the pipeline busy.
inline void walk4(const Environment& env, std::int64_t* x, std::int64_t steps, Stream* rng) {
  const std::uint64_t* thr = env.thresholds() - env.window().lo;
  std::int64_t x0 = x[0], x1 = x[1], x2 = x[2], x3 = x[3];
  Stream r0 = rng[0], r1 = rng[1], r2 = rng[2], r3 = rng[3];
  for (std::int64_t k = 0; k < steps; ++k) {
    x0 += 2 * static_cast<std::int64_t>(r0() < thr[x0]) - 1;
    x1 += 2 * static_cast<std::int64_t>(r1() < thr[x1]) - 1;
    x2 += 2 * static_cast<std::int64_t>(r2() < thr[x2]) - 1;
    x3 += 2 * static_cast<std::int64_t>(r3() < thr[x3]) - 1;
  }
  x[0] = x0, x[1] = x1, x[2] = x2, x[3] = x3;
  rng[0] = r0, rng[1] = r1, rng[2] = r2, rng[3] = r3;
}

/// Independent walks for every particle of `config`, recorded at the sorted
/// checkpoints. Particle k at site x uses the stream (seed, replica, x, k),
/// so positions do not depend on how particles are batched.
inline Positions simulate_walks(const Environment& env, const InitialConfig& config,
                                const std::vector<std::int64_t>& checkpoints, std::uint64_t seed,
                                std::uint64_t replica = 0) {
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()) || (!checkpoints.empty() && checkpoints.front() < 0))
    throw std::invalid_argument("checkpoints must be sorted and nonnegative");
  const std::int64_t last = checkpoints.empty() ? 0 : checkpoints.back();
  require_cover(env, config.window, last);
  Positions out;
  out.checkpoints = checkpoints;
  const auto total = static_cast<std::size_t>(config.total());
  const std::size_t nc = checkpoints.size();
  out.starts.reserve(total);
  std::vector<Stream> rngs;
  rngs.reserve(total + 3);
  for (std::int64_t x = config.window.lo; x <= config.window.hi; ++x) {
    const auto n = config.counts[static_cast<std::size_t>(x - config.window.lo)];
    for (std::uint32_t k = 0; k < n; ++k) {
      out.starts.push_back(x);
      rngs.push_back(walk_stream(seed, replica, x, k));
    }
  }
  out.pos.resize(total * nc);
  if (total == 0) return out;
  std::vector<std::int64_t> cur(out.starts);
  // Padding lanes repeat the last particle and are discarded.
  while (cur.size() % 4 != 0) {
    cur.push_back(cur.back());
    rngs.push_back(rngs.back());
  }
  for (std::size_t b = 0; b < cur.size(); b += 4) {
    std::int64_t done = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      walk4(env, &cur[b], checkpoints[c] - done, &rngs[b]);
      done = checkpoints[c];
      for (std::size_t l = 0; l < 4 && b + l < total; ++l) out.pos[(b + l) * nc + c] = cur[b + l];
    }
  }
  return out;
}

/// Signed count of crossings of the front at the given checkpoint: particles
/// from m > 0 now at or left of floor(cutoff) count +1, particles from m <= 0
/// now right of it count -1.
inline std::int64_t current_from_positions(const Positions& p, std::size_t checkpoint, double cutoff) {
  const std::int64_t k = lattice_floor(cutoff);
  std::int64_t y = 0;
  for (std::size_t i = 0; i < p.particles(); ++i) {
    const std::int64_t x = p.at(i, checkpoint);
    if (p.starts[i] > 0)
      y += x <= k;
    else
      y -= x > k;
  }
  return y;
}

inline std::size_t checkpoint_index(const Positions& p, std::int64_t steps) {
  const auto it = std::lower_bound(p.checkpoints.begin(), p.checkpoints.end(), steps);
  if (it == p.checkpoints.end() || *it != steps) throw std::invalid_argument("no checkpoint at requested step");
  return static_cast<std::size_t>(it - p.checkpoints.begin());
}

/// Y_n(t, r) from simulated positions.
inline std::int64_t current_Y(const Positions& p, std::int64_t n, GridPoint g, double v) {
  const Front f = make_front(n, g, v);
  return current_from_positions(p, checkpoint_index(p, f.steps), f.cutoff);
}

/// Y^(q)_n(t, r): the front is moved left by Z = Z_{nt}.
inline std::int64_t current_Yq(const Positions& p, std::int64_t n, GridPoint g, double v, double Z) {
  const Front f = make_front(n, g, v, Z);
  return current_from_positions(p, checkpoint_index(p, f.steps), f.cutoff);
}

/// Advances every particle `steps` steps and returns the new occupation on
/// the configuration window widened by `steps`.
inline InitialConfig evolve_config(const Environment& env, const InitialConfig& config, std::int64_t steps,
                                   std::uint64_t seed, std::uint64_t replica = 0) {
  if (steps < 0) throw std::invalid_argument("negative step count");
  const Positions p = simulate_walks(env, config, {steps}, seed, replica);
  InitialConfig out{config.init, {config.window.lo - steps, config.window.hi + steps}, {}};
  out.counts.assign(static_cast<std::size_t>(out.window.size()), 0);
  for (std::size_t i = 0; i < p.particles(); ++i) ++out.counts[static_cast<std::size_t>(p.at(i, 0) - out.window.lo)];
  return out;
}

// ---------------------------------------------------------------------------
// Replica observations on a grid.

/// Fourth cumulant of Y for one front given w (unscaled). Counts from
/// different sites are independent; a site's counted particles are a
/// thinning of its initial count, Poisson(lambda q) or Binomial(k, q).
inline double fourth_cumulant_from_tail(const SiteField& tail, const OccupationProfile& occ) {
  KahanSum acc;
  const std::int64_t lo = std::min<std::int64_t>(tail.lo, 1), hi = std::max<std::int64_t>(tail.hi(), 0);
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double T = tail.at(x);
    const double q = x > 0 ? T : 1.0 - T;
    if (occ.init().mode == InitMode::deterministic) {
      const double pq = q * (1.0 - q);
      acc += occ.init().mu * pq * (1.0 - 6.0 * pq);
    } else {
      acc += occ.mean(x) * q;
    }
  }
  return acc.value();
}

/// Burn-in-free core window large enough for the DP bands, the walks of
/// every possibly active particle, and shifts of the fronts by up to n steps.
inline Window observation_core(std::int64_t n, const std::vector<GridPoint>& grid, double v) {
  std::int64_t N = 0;
  double cmin = 0, cmax = 0;
  for (const GridPoint& g : grid) {
    const Front f = make_front(n, g, v);
    N = std::max(N, f.steps);
    cmin = std::min(cmin, f.cutoff);
    cmax = std::max(cmax, f.cutoff);
  }
  const std::int64_t pad = 3 * N + 16;
  return {lattice_floor(cmin) - pad, lattice_floor(cmax) + 1 + pad};
}

/// Per-environment data shared by all replicas: fronts, exact quenched means
/// and the range of starts whose crossing is not already certain.
struct ObservationPlan {
  std::int64_t n = 0;
  double v = 0;
  std::vector<GridPoint> grid;
  std::vector<Front> fronts;
  std::vector<Front> fronts_q;
  std::vector<double> mean;
  std::vector<double> mean_q;
  /// Exact quenched variance and fourth cumulant of n^{-1/4} (Y - E_w Y),
  /// unshifted then shifted fronts.
  std::vector<double> var;
  std::vector<double> kappa4;
  std::vector<double> Z;  // Z_{nt} per grid point
  std::vector<std::int64_t> checkpoints;
  Window active;  // starts that are simulated
  Window sampled;  // starts whose counts are drawn
  /// Per front (unshifted, then shifted): starts below the split cross
  /// with certainty when outside the active band.
  std::vector<std::int64_t> splits;
  double truncation_tail = 0;
  bool shifted = false;
};

inline ObservationPlan make_plan(const Environment& env, const QuenchedFunctionals& q, const OccupationProfile& occ,
                                 std::int64_t n, const std::vector<GridPoint>& grid, bool shifted) {
  if (n <= 0) throw std::invalid_argument("n must be positive");
  if (grid.empty()) throw std::invalid_argument("empty grid");
  ObservationPlan plan;
  plan.n = n;
  plan.v = q.speed();
  plan.grid = grid;
  plan.shifted = shifted;
  auto mean_fn = [&](std::int64_t x) { return occ.mean(x); };
  auto var_fn = [&](std::int64_t x) { return occ.var(x); };
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  auto absorb = [&](const Front& f, std::vector<double>& means) {
    const SiteField t = tail_field(env, f.steps, f.cutoff);
    means.push_back(quenched_mean_from_tail(t, mean_fn));
    plan.var.push_back(quenched_variance_from_tail(t, mean_fn, var_fn) / std::sqrt(static_cast<double>(n)));
    plan.kappa4.push_back(fourth_cumulant_from_tail(t, occ) / static_cast<double>(n));
    plan.truncation_tail += t.trimmed;
    plan.splits.push_back(t.lo);
    if (!t.values.empty()) {
      lo = std::min(lo, t.lo);
      hi = std::max(hi, t.hi());
    }
  };
  for (const GridPoint& g : grid) {
    plan.fronts.push_back(make_front(n, g, plan.v));
    absorb(plan.fronts.back(), plan.mean);
    plan.checkpoints.push_back(plan.fronts.back().steps);
  }
  for (const GridPoint& g : grid) {
    if (shifted) {
      const double z = q.Z(n, g.t);
      plan.Z.push_back(z);
      plan.fronts_q.push_back(make_front(n, g, plan.v, z));
      absorb(plan.fronts_q.back(), plan.mean_q);
    } else {
      plan.Z.push_back(q.has_h() ? q.Z(n, g.t) : 0.0);
    }
  }
  std::sort(plan.checkpoints.begin(), plan.checkpoints.end());
  plan.checkpoints.erase(std::unique(plan.checkpoints.begin(), plan.checkpoints.end()), plan.checkpoints.end());
  plan.active = lo <= hi ? Window{lo, hi} : Window{1, 0};
  // Outside the active band a start crosses or not with certainty, but
  // starts between the band and the origin still contribute their count.
  std::int64_t slo = 1, shi = 0;
  for (std::int64_t split : plan.splits) {
    slo = std::min(slo, split);
    shi = std::max(shi, split - 1);
  }
  if (!plan.active.empty()) {
    slo = std::min(slo, plan.active.lo);
    shi = std::max(shi, plan.active.hi);
  }
  plan.sampled = {slo, shi};
  return plan;
}

struct CurrentObservation {
  std::uint64_t replica = 0;
  std::uint64_t seed = 0;
  std::vector<GridPoint> grid;
  std::vector<std::int64_t> Y;
  std::vector<double> V;
  std::vector<std::int64_t> Yq;
  std::vector<double> Vq;
  std::vector<double> Z_over_sqrt_n;
};

/// One replica: draw eta_0 on the sampled range, walk the particles of the
/// active band, and add the certain contributions of the rest.
inline CurrentObservation observe_replica(const Environment& env, const OccupationProfile& occ,
                                          const ObservationPlan& plan, std::uint64_t seed, std::uint64_t replica) {
  const InitialConfig cfg = sample_initial(occ, plan.sampled, seed, replica);
  InitialConfig moving{cfg.init, plan.active, {}};
  if (!plan.active.empty())
    for (std::int64_t x = plan.active.lo; x <= plan.active.hi; ++x) moving.counts.push_back(cfg.count(x));
  const Positions pos = simulate_walks(env, moving, plan.checkpoints, seed, replica);

  auto settled = [&](std::int64_t split) {
    std::int64_t y = 0;
    for (std::int64_t x = plan.sampled.lo; x <= plan.sampled.hi; ++x) {
      if (plan.active.contains(x)) continue;
      const bool left = x < split;
      if (x > 0 && left) y += cfg.count(x);
      if (x <= 0 && !left) y -= cfg.count(x);
    }
    return y;
  };

  CurrentObservation obs;
  obs.replica = replica;
  obs.seed = seed;
  obs.grid = plan.grid;
  const double scale = std::pow(static_cast<double>(plan.n), -0.25);
  const double rn = std::sqrt(static_cast<double>(plan.n));
  for (std::size_t i = 0; i < plan.grid.size(); ++i) {
    const Front& f = plan.fronts[i];
    const auto ci = checkpoint_index(pos, f.steps);
    const std::int64_t y = current_from_positions(pos, ci, f.cutoff) + settled(plan.splits[i]);
    obs.Y.push_back(y);
    obs.V.push_back(scale * (static_cast<double>(y) - plan.mean[i]));
    obs.Z_over_sqrt_n.push_back(plan.Z[i] / rn);
    if (plan.shifted) {
      const Front& fq = plan.fronts_q[i];
      const std::int64_t yq = current_from_positions(pos, ci, fq.cutoff) + settled(plan.splits[plan.grid.size() + i]);
      obs.Yq.push_back(yq);
      obs.Vq.push_back(scale * (static_cast<double>(yq) - plan.mean_q[i]));
    }
  }
  return obs;
}

}  // namespace rwre
