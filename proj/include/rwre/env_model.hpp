#pragma once

// Environment laws, realized environments, and the quenched functionals that
// are deterministic given the environment: crossing-time moments, the
// corrector h, the quenched-CLT shift Z, and the stationary density f.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rwre/numeric.hpp"
#include "rwre/rng.hpp"

namespace rwre {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EnvKind { two_point, finite_discrete, uniform_interval };

inline std::string to_string(EnvKind k) {
  switch (k) {
    case EnvKind::two_point: return "two-point";
    case EnvKind::finite_discrete: return "finite-discrete";
    case EnvKind::uniform_interval: return "uniform-interval";
  }
  return "?";
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "two-point") return EnvKind::two_point;
  if (s == "finite-discrete") return EnvKind::finite_discrete;
  if (s == "uniform-interval") return EnvKind::uniform_interval;
  throw SpecError("unknown environment kind '" + s + "'");
}

/// Raw description of an environment law, as read from a config block.
/// For uniform-interval, `atoms` holds the two bounds and `weights` is unused.
/// A NaN kappa means "the largest kappa the atoms allow".
struct SpecParams {
  EnvKind kind = EnvKind::two_point;
  std::vector<double> atoms;
  std::vector<double> weights;
  double kappa = std::numeric_limits<double>::quiet_NaN();
};

/// Law of a single omega_0, validated for uniform ellipticity and E rho^2 < 1.
class EnvSpec {
 public:
  explicit EnvSpec(SpecParams p) : p_(std::move(p)) { validate(); }

  static EnvSpec two_point(double p1, double p2, double w1 = 0.5,
                           double kappa = std::numeric_limits<double>::quiet_NaN()) {
    return EnvSpec({EnvKind::two_point, {p1, p2}, {w1, 1.0 - w1}, kappa});
  }
  static EnvSpec point_mass(double p, double kappa = std::numeric_limits<double>::quiet_NaN()) {
    return EnvSpec({EnvKind::finite_discrete, {p}, {1.0}, kappa});
  }
  static EnvSpec discrete(std::vector<double> atoms, std::vector<double> weights,
                          double kappa = std::numeric_limits<double>::quiet_NaN()) {
    return EnvSpec({EnvKind::finite_discrete, std::move(atoms), std::move(weights), kappa});
  }
  static EnvSpec uniform(double a, double b, double kappa = std::numeric_limits<double>::quiet_NaN()) {
    return EnvSpec({EnvKind::uniform_interval, {a, b}, {}, kappa});
  }

  const SpecParams& params() const noexcept { return p_; }
  EnvKind kind() const noexcept { return p_.kind; }
  double kappa() const noexcept { return p_.kappa; }
  /// E[rho_0]
  double m1() const noexcept { return m1_; }
  /// E[rho_0^2]
  double m2() const noexcept { return m2_; }

  bool is_point_mass() const noexcept {
    if (p_.kind == EnvKind::uniform_interval) return p_.atoms[0] == p_.atoms[1];
    int live = 0;
    double first = 0;
    for (std::size_t i = 0; i < p_.atoms.size(); ++i) {
      if (p_.weights[i] <= 0) continue;
      if (live++ == 0)
        first = p_.atoms[i];
      else if (p_.atoms[i] != first)
        return false;
    }
    return true;
  }

  /// Inverse-cdf draw of omega_0 from a uniform variate in [0,1).
  double draw(double u) const noexcept {
    if (p_.kind == EnvKind::uniform_interval) return p_.atoms[0] + (p_.atoms[1] - p_.atoms[0]) * u;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p_.atoms.size(); ++i) {
      acc += p_.weights[i];
      if (u < acc) return p_.atoms[i];
    }
    return p_.atoms.back();
  }

  double speed() const noexcept { return (1.0 - m1_) / (1.0 + m1_); }

  /// Sites of burn-in excluded at each window edge.
  std::int64_t burn_in_margin() const noexcept {
    const double lm = std::abs(std::log(m1_));
    const double want = lm > 0 ? std::ceil(50.0 / lm) : 200.0;
    return static_cast<std::int64_t>(std::max(200.0, std::min(want, 1e6)));
  }

 private:
  void validate() {
    auto& a = p_.atoms;
    if (p_.kind == EnvKind::uniform_interval) {
      if (a.size() != 2) throw SpecError("uniform-interval needs exactly two bounds");
      if (!(a[0] <= a[1])) throw SpecError("uniform-interval bounds must satisfy lo <= hi");
    } else {
      if (a.empty()) throw SpecError("discrete spec needs at least one atom");
      if (p_.kind == EnvKind::two_point && a.size() != 2) throw SpecError("two-point spec needs two atoms");
      if (p_.weights.size() != a.size()) throw SpecError("atoms and weights differ in length");
      double total = 0;
      for (double w : p_.weights) {
        if (!(w >= 0)) throw SpecError("weights must be nonnegative");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-12) throw SpecError("weights must sum to 1");
    }
    const auto [mn, mx] = std::minmax_element(a.begin(), a.end());
    if (std::isnan(p_.kappa)) p_.kappa = std::min(*mn, 1.0 - *mx);
    if (!(p_.kappa > 0 && p_.kappa < 0.5)) throw SpecError("kappa must lie in (0, 1/2)");
    for (double w : a)
      if (!(w >= p_.kappa - 1e-15 && w <= 1.0 - p_.kappa + 1e-15))
        throw SpecError("atom " + std::to_string(w) + " outside [kappa, 1-kappa]");

    if (p_.kind == EnvKind::uniform_interval && a[0] < a[1]) {
      const double lo = a[0], hi = a[1], len = hi - lo;
      const double inv1 = std::log(hi / lo) / len;  // E[1/omega]
      const double inv2 = 1.0 / (lo * hi);          // E[1/omega^2]
      m1_ = inv1 - 1.0;
      m2_ = inv2 - 2.0 * inv1 + 1.0;
    } else {
      m1_ = m2_ = 0;
      const std::size_t k = p_.kind == EnvKind::uniform_interval ? 1 : a.size();
      for (std::size_t i = 0; i < k; ++i) {
        const double w = p_.kind == EnvKind::uniform_interval ? 1.0 : p_.weights[i];
        const double rho = (1.0 - a[i]) / a[i];
        m1_ += w * rho;
        m2_ += w * rho * rho;
      }
    }
    if (!(m2_ < 1.0))
      throw SpecError("E[rho^2] = " + std::to_string(m2_) + " >= 1: not in the diffusive ballistic regime");
  }

  SpecParams p_;
  double m1_ = 0;
  double m2_ = 0;
};

inline EnvSpec make_spec(const SpecParams& p) { return EnvSpec(p); }

/// Closed-form annealed quantities of the crossing time T_1, all obtained
/// from the recursion E_{theta^x w} T_1 = 1 + rho_x + rho_x E_{theta^{x-1} w} T_1
/// with rho_x independent of the right-hand expectation.
struct AnnealedMoments {
  double v;             // asymptotic speed
  double ET1;           // E_P[E_w T_1] = 1/v
  double ET1_sq;        // E_P[(E_w T_1)^2]
  double var_ET1;       // Var_P(E_w T_1)
  double E_T1_sq;       // E_P[E_w T_1^2]
  double mean_var_T1;   // E_P[Var_w T_1]
};

inline AnnealedMoments annealed_moments(const EnvSpec& spec) noexcept {
  const double m1 = spec.m1(), m2 = spec.m2();
  AnnealedMoments r{};
  r.v = spec.speed();
  r.ET1 = (1.0 + m1) / (1.0 - m1);
  const double A = r.ET1;
  r.ET1_sq = (1.0 + 2.0 * m1 * (1.0 + A) + m2 * (1.0 + 2.0 * A)) / (1.0 - m2);
  r.var_ET1 = r.ET1_sq - A * A;
  r.E_T1_sq = (1.0 + 3.0 * m1 + 2.0 * m2 + 4.0 * (m1 + m2) * A + 2.0 * m2 * r.ET1_sq) / (1.0 - m1);
  r.mean_var_T1 = r.E_T1_sq - r.ET1_sq;
  return r;
}

/// A realized window of omega_x. Site values are a pure function of
/// (spec, seed, x), so overlapping windows with the same seed agree.
class Environment {
 public:
  Environment(EnvSpec spec, Window window, std::uint64_t seed, std::vector<double> omega)
      : spec_(std::move(spec)), window_(window), seed_(seed), omega_(std::move(omega)) {
    if (static_cast<std::int64_t>(omega_.size()) != window_.size())
      throw std::invalid_argument("omega array does not match window");
    thresholds_.resize(omega_.size());
    for (std::size_t i = 0; i < omega_.size(); ++i) {
      const double w = omega_[i];
      if (!(w >= spec_.kappa() - 1e-15 && w <= 1.0 - spec_.kappa() + 1e-15))
        throw SpecError("omega outside [kappa, 1-kappa]");
      thresholds_[i] = static_cast<std::uint64_t>(std::ldexp(w, 64));
    }
  }

  const EnvSpec& spec() const noexcept { return spec_; }
  const Window& window() const noexcept { return window_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<double>& omega() const noexcept { return omega_; }

  double omega(std::int64_t x) const { return omega_[index(x)]; }
  double rho(std::int64_t x) const {
    const double w = omega(x);
    return (1.0 - w) / w;
  }
  /// Right-step threshold on 64-bit uniforms: step right iff bits < threshold.
  const std::uint64_t* thresholds() const noexcept { return thresholds_.data(); }

  std::size_t index(std::int64_t x) const {
    if (!window_.contains(x))
      throw WindowError("site " + std::to_string(x) + " outside environment window " + to_string(window_));
    return static_cast<std::size_t>(x - window_.lo);
  }

 private:
  EnvSpec spec_;
  Window window_;
  std::uint64_t seed_;
  std::vector<double> omega_;
  std::vector<std::uint64_t> thresholds_;
};

inline double site_omega(const EnvSpec& spec, std::uint64_t seed, std::int64_t x) noexcept {
  return spec.draw(to_unit(Stream::derive(seed, StreamTag::environment, {site_id(x)})));
}

inline Environment sample_environment(const EnvSpec& spec, Window window, std::uint64_t seed) {
  if (window.empty()) throw std::invalid_argument("environment window is empty");
  std::vector<double> omega(static_cast<std::size_t>(window.size()));
  for (std::int64_t x = window.lo; x <= window.hi; ++x)
    omega[static_cast<std::size_t>(x - window.lo)] = site_omega(spec, seed, x);
  return Environment(spec, window, seed, std::move(omega));
}

/// Window whose burn-in-trimmed core equals `core`.
inline Window padded_window(const EnvSpec& spec, Window core) {
  const auto b = spec.burn_in_margin();
  return {core.lo - b, core.hi + b};
}

struct BoundaryBias {
  std::int64_t margin = 0;
  /// Bound on |a_x - E_{theta^x w} T_1| over the valid range, from the
  /// contraction of the seeding error by the rho products.
  double seed_error_bound = 0;
  std::int64_t f_truncated_depth = 0;  // f series stopped at the depth cap
  std::int64_t f_truncated_edge = 0;   // f series ran into the window edge
  double f_max_residual = 0;           // largest neglected product
  std::vector<std::string> warnings;
};

struct FunctionalOptions {
  double f_tolerance = 1e-12;
  std::int64_t f_max_depth = 10000;
  bool compute_f = true;
};

/// Per-site crossing-time moments, corrector and density profile of one
/// environment. Values are only readable on the burn-in-trimmed valid range.
class QuenchedFunctionals {
 public:
  const Window& valid() const noexcept { return valid_; }
  const Window& window() const noexcept { return window_; }
  const BoundaryBias& boundary_bias() const noexcept { return bias_; }
  double speed() const noexcept { return v_; }
  double ET1() const noexcept { return ET1_; }

  /// E_{theta^x w} T_1: expected time to step from x to x+1.
  double a(std::int64_t x) const { return a_[at(x)]; }
  /// E_{theta^x w} T_1^2
  double s(std::int64_t x) const { return s_[at(x)]; }
  double var_T1(std::int64_t x) const {
    const auto i = at(x);
    return s_[i] - a_[i] * a_[i];
  }
  double f(std::int64_t x) const {
    if (f_.empty()) throw std::logic_error("density profile f was not computed");
    return f_[at(x)];
  }
  bool has_h() const noexcept { return !h_.empty(); }
  double h(std::int64_t x) const {
    if (h_.empty()) throw WindowError("corrector h needs the origin inside the valid window");
    return h_[at(x)];
  }

  /// Z_{nt}(w) = h(floor(n t v), w)
  double Z(std::int64_t n, double t) const { return h(lattice_floor(static_cast<double>(n) * t * v_)); }

  const std::vector<double>& a_values() const noexcept { return a_; }
  const std::vector<double>& s_values() const noexcept { return s_; }
  const std::vector<double>& h_values() const noexcept { return h_; }
  const std::vector<double>& f_values() const noexcept { return f_; }

 private:
  friend QuenchedFunctionals compute_functionals(const Environment&, const FunctionalOptions&);

  std::size_t at(std::int64_t x) const {
    if (!valid_.contains(x))
      throw WindowError("site " + std::to_string(x) + " outside valid functional range " + to_string(valid_));
    return static_cast<std::size_t>(x - window_.lo);
  }

  Window window_;
  Window valid_;
  double v_ = 0;
  double ET1_ = 0;
  std::vector<double> a_, s_, h_, f_;
  BoundaryBias bias_;
};

inline QuenchedFunctionals compute_functionals(const Environment& env, const FunctionalOptions& opt = {}) {
  const EnvSpec& spec = env.spec();
  const AnnealedMoments am = annealed_moments(spec);
  const Window w = env.window();
  const std::int64_t margin = spec.burn_in_margin();

  QuenchedFunctionals q;
  q.window_ = w;
  q.valid_ = {w.lo + margin, w.hi - margin};
  q.v_ = am.v;
  q.ET1_ = am.ET1;
  q.bias_.margin = margin;
  if (q.valid_.empty()) throw WindowError("window " + to_string(w) + " is narrower than twice the burn-in margin");

  const auto n = static_cast<std::size_t>(w.size());
  const auto& om = env.omega();
  q.a_.resize(n);
  q.s_.resize(n);

  // Crossing of x: one step right with prob omega_x, otherwise one step left,
  // a crossing of x-1, then a fresh crossing of x. Seeded with annealed values.
  double a_prev = am.ET1;
  double s_prev = am.E_T1_sq;
  double contraction = 1.0;
  double max_a = am.ET1;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = (1.0 - om[i]) / om[i];
    const double a = 1.0 + rho + rho * a_prev;
    const double s = (1.0 + rho) + rho * (s_prev + 2.0 * a_prev + 2.0 * a + 2.0 * a_prev * a);
    q.a_[i] = a;
    q.s_[i] = s;
    a_prev = a;
    s_prev = s;
    contraction *= rho;
    max_a = std::max(max_a, a);
    const auto ii = static_cast<std::int64_t>(i);
    if (ii >= margin && ii < static_cast<std::int64_t>(n) - margin)
      worst = std::max(worst, contraction);
    if (!std::isfinite(a) || !std::isfinite(s)) throw std::runtime_error("non-finite crossing-time moment");
  }
  q.bias_.seed_error_bound = worst * (am.ET1 + max_a);
  if (q.bias_.seed_error_bound > 1e-12)
    q.bias_.warnings.push_back("seeding error bound " + std::to_string(q.bias_.seed_error_bound) + " exceeds 1e-12");

  if (q.valid_.contains(0)) {
    q.h_.assign(n, std::numeric_limits<double>::quiet_NaN());
    const auto i0 = static_cast<std::size_t>(-w.lo);
    q.h_[i0] = 0.0;
    KahanSum acc;
    for (std::int64_t x = 0; x < q.valid_.hi; ++x) {
      acc += am.v * (q.a_[static_cast<std::size_t>(x - w.lo)] - am.ET1);
      q.h_[static_cast<std::size_t>(x + 1 - w.lo)] = acc.value();
    }
    KahanSum neg;
    for (std::int64_t x = -1; x >= q.valid_.lo; --x) {
      neg += am.v * (q.a_[static_cast<std::size_t>(x - w.lo)] - am.ET1);
      q.h_[static_cast<std::size_t>(x - w.lo)] = -neg.value();
    }
  }

  if (opt.compute_f) {
    q.f_.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::int64_t x = q.valid_.lo; x <= q.valid_.hi; ++x) {
      double prod = 1.0;
      KahanSum series;
      series += 1.0;
      std::int64_t depth = 0;
      bool converged = false;
      for (std::int64_t y = x + 1; depth < opt.f_max_depth; ++y, ++depth) {
        if (y > w.hi) {
          ++q.bias_.f_truncated_edge;
          q.bias_.f_max_residual = std::max(q.bias_.f_max_residual, prod);
          break;
        }
        const double wy = om[static_cast<std::size_t>(y - w.lo)];
        prod *= (1.0 - wy) / wy;
        series += prod;
        if (prod < opt.f_tolerance * series.value()) {
          converged = true;
          break;
        }
      }
      if (!converged && depth >= opt.f_max_depth) {
        ++q.bias_.f_truncated_depth;
        q.bias_.f_max_residual = std::max(q.bias_.f_max_residual, prod);
      }
      const auto i = static_cast<std::size_t>(x - w.lo);
      q.f_[i] = am.v / om[i] * series.value();
    }
    if (q.bias_.f_truncated_depth > 0)
      q.bias_.warnings.push_back(std::to_string(q.bias_.f_truncated_depth) + " f series hit the depth cap");
    if (q.bias_.f_truncated_edge > 0)
      q.bias_.warnings.push_back(std::to_string(q.bias_.f_truncated_edge) + " f series hit the window edge");
  }
  return q;
}

/// Drift of M_n = X_n - n v + h(X_n) from site x; zero up to boundary bias.
inline double martingale_defect(const Environment& env, const QuenchedFunctionals& q, std::int64_t x) {
  const double w = env.omega(x);
  const double hx = q.h(x);
  const double up = q.h(x + 1) - hx;
  const double down = hx - q.h(x - 1);
  return w * (1.0 + up) + (1.0 - w) * (-1.0 - down) - q.speed();
}

// ---------------------------------------------------------------------------
// Initial occupation laws.

enum class InitMode { deterministic, annealed_poisson, quenched_poisson };

inline std::string to_string(InitMode m) {
  switch (m) {
    case InitMode::deterministic: return "deterministic";
    case InitMode::annealed_poisson: return "annealed-poisson";
    case InitMode::quenched_poisson: return "quenched-poisson";
  }
  return "?";
}

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "deterministic") return InitMode::deterministic;
  if (s == "annealed-poisson") return InitMode::annealed_poisson;
  if (s == "quenched-poisson") return InitMode::quenched_poisson;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

/// For deterministic mode `mu` is the per-site count k and must be an integer.
struct InitSpec {
  InitMode mode = InitMode::deterministic;
  double mu = 1.0;
};

inline void validate(const InitSpec& init) {
  if (!(init.mu >= 0)) throw std::invalid_argument("mean density must be nonnegative");
  if (init.mode == InitMode::deterministic && init.mu != std::floor(init.mu))
    throw std::invalid_argument("deterministic occupation needs an integer count");
}

/// E_w eta_0(x) and Var_w eta_0(x) for a given initial law.
class OccupationProfile {
 public:
  OccupationProfile(InitSpec init, const QuenchedFunctionals* q) : init_(init), q_(q) {
    validate(init_);
    if (init_.mode == InitMode::quenched_poisson && q_ == nullptr)
      throw std::invalid_argument("quenched-Poisson occupation needs the density profile");
  }

  const InitSpec& init() const noexcept { return init_; }

  double mean(std::int64_t x) const {
    return init_.mode == InitMode::quenched_poisson ? init_.mu * q_->f(x) : init_.mu;
  }
  double var(std::int64_t x) const {
    switch (init_.mode) {
      case InitMode::deterministic: return 0.0;
      case InitMode::annealed_poisson: return init_.mu;
      case InitMode::quenched_poisson: return init_.mu * q_->f(x);
    }
    return 0.0;
  }

 private:
  InitSpec init_;
  const QuenchedFunctionals* q_;
};

// ---------------------------------------------------------------------------
// Limit-theory parameters.

struct TheoryParams {
  double v_P = 0;
  double ET1 = 0;
  double mu = 0;          // mean density E_P[E_w eta_0]
  double sigma0_sq = 0;   // E_P[Var_w eta_0]
  double sigma1_sq = 0;   // site-averaged v^3 E_P[Var_w T_1]
  double sigma1_sq_se = 0;
  double sigma2_sq = 0;   // v^2 Var_P(E_w T_1), closed form
  double mean_f = 1.0;    // site average of f
  double mean_f_se = 0;
};

struct TheoryOptions {
  std::int64_t sites = 1000000;
  std::uint64_t seed = 20240101;
  std::int64_t batch = 1000;
};

/// Mean and batch-means standard error of a correlated sequence.
inline std::pair<double, double> batch_mean_se(const std::vector<double>& xs, std::int64_t batch) {
  const auto n = static_cast<std::int64_t>(xs.size());
  KahanSum tot;
  for (double x : xs) tot += x;
  const double mean = tot.value() / static_cast<double>(n);
  const std::int64_t nb = n / batch;
  if (nb < 2) return {mean, 0.0};
  double ss = 0;
  for (std::int64_t b = 0; b < nb; ++b) {
    KahanSum part;
    for (std::int64_t i = b * batch; i < (b + 1) * batch; ++i) part += xs[static_cast<std::size_t>(i)];
    const double d = part.value() / static_cast<double>(batch) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / static_cast<double>(nb - 1) / static_cast<double>(nb))};
}

inline TheoryParams theory_params(const EnvSpec& spec, const InitSpec& init, const TheoryOptions& opt = {}) {
  validate(init);
  const AnnealedMoments am = annealed_moments(spec);
  TheoryParams tp;
  tp.v_P = am.v;
  tp.ET1 = am.ET1;
  tp.sigma2_sq = am.v * am.v * am.var_ET1;
  if (spec.is_point_mass()) tp.sigma2_sq = 0.0;

  const Window core{0, opt.sites - 1};
  const Environment env = sample_environment(spec, padded_window(spec, core), opt.seed);
  const QuenchedFunctionals q = compute_functionals(env, {.compute_f = init.mode == InitMode::quenched_poisson});
  std::vector<double> vars(static_cast<std::size_t>(core.size()));
  for (std::int64_t x = core.lo; x <= core.hi; ++x) vars[static_cast<std::size_t>(x)] = q.var_T1(x);
  const auto [mvar, se_var] = batch_mean_se(vars, opt.batch);
  const double v3 = am.v * am.v * am.v;
  tp.sigma1_sq = v3 * mvar;
  tp.sigma1_sq_se = v3 * se_var;

  if (init.mode == InitMode::quenched_poisson) {
    std::vector<double> fs(static_cast<std::size_t>(core.size()));
    for (std::int64_t x = core.lo; x <= core.hi; ++x) fs[static_cast<std::size_t>(x)] = q.f(x);
    std::tie(tp.mean_f, tp.mean_f_se) = batch_mean_se(fs, opt.batch);
  }
  switch (init.mode) {
    case InitMode::deterministic:
      tp.mu = init.mu;
      tp.sigma0_sq = 0.0;
      break;
    case InitMode::annealed_poisson:
      tp.mu = init.mu;
      tp.sigma0_sq = init.mu;
      break;
    case InitMode::quenched_poisson:
      tp.mu = init.mu * tp.mean_f;
      tp.sigma0_sq = init.mu * tp.mean_f;
      break;
  }
  return tp;
}

}  // namespace rwre
