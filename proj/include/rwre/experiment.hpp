#pragma once

// Experiment configuration, run manifests and the deterministic task pool.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rwre/env_model.hpp"
#include "rwre/io.hpp"
#include "rwre/kernel_dp.hpp"

namespace rwre {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kCodeVersion = "rwre-lab 1.0.0";

/// Names of the acceptance checks, in report order.
inline const std::vector<std::string>& acceptance_ids() {
  static const std::vector<std::string> ids{"AC-1", "AC-2", "AC-3",  "AC-4",  "AC-5",  "AC-6",  "AC-7",
                                            "AC-8", "AC-9", "AC-10", "AC-11", "AC-12", "AC-13", "AC-14"};
  return ids;
}

/// Knobs of the acceptance suite. Defaults are the full-size runs.
struct AcceptanceScale {
  double replica_factor = 1.0;  // scales every replica / environment count
  std::int64_t mixture_draws = 1000000;
  std::int64_t theory_sites = 1000000;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  SpecParams env{EnvKind::two_point, {0.9, 0.6}, {0.5, 0.5}};
  InitSpec init{InitMode::quenched_poisson, 1.0};
  std::vector<std::int64_t> sizes{400};
  std::vector<GridPoint> grid{{1.0, 0.0}};
  std::int64_t environments = 1;
  std::int64_t replicas = 100;
  std::uint64_t seed = 1;
  Window env_window{-1000, 1000};
  std::int64_t theory_sites = 1000000;
  double tolerance_k = 4.0;
  std::vector<std::string> checks = acceptance_ids();
  AcceptanceScale scale;
  std::string out = "out";
  bool shifted = true;
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SpecError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys are errors so that
/// typos cannot silently fall back to defaults.
inline ExperimentConfig config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"version", "env", "init", "sizes", "grid", "environments", "replicas", "seed", "env_window",
                       "theory_sites", "tolerance_k", "checks", "scale", "out", "shifted"},
                      "config");
  ExperimentConfig c;
  c.version = detail::get_or<int>(j, "version", kConfigVersion);
  if (c.version != kConfigVersion) throw SpecError("unsupported config version " + std::to_string(c.version));
  if (j.contains("env")) c.env = spec_params_from_json(j.at("env"));
  EnvSpec spec(c.env);  // validates
  c.env = spec.params();
  if (j.contains("init")) {
    const json& ji = j.at("init");
    reject_unknown_keys(ji, {"mode", "mu"}, "init block");
    c.init.mode = init_mode_from_string(detail::get_or<std::string>(ji, "mode", "quenched-poisson"));
    c.init.mu = detail::get_or<double>(ji, "mu", 1.0);
    try {
      validate(c.init);
    } catch (const std::invalid_argument& e) {
      throw SpecError(std::string("init block: ") + e.what());
    }
  }
  c.sizes = detail::get_or<std::vector<std::int64_t>>(j, "sizes", c.sizes);
  for (auto n : c.sizes)
    if (n <= 0) throw SpecError("sizes must be positive");
  if (j.contains("grid")) {
    c.grid.clear();
    for (const json& g : j.at("grid")) {
      reject_unknown_keys(g, {"t", "r"}, "grid point");
      GridPoint p{detail::get_or<double>(g, "t", 1.0), detail::get_or<double>(g, "r", 0.0)};
      if (p.t < 0) throw SpecError("grid times must be nonnegative");
      c.grid.push_back(p);
    }
    if (c.grid.empty()) throw SpecError("grid must not be empty");
  }
  c.environments = detail::get_or<std::int64_t>(j, "environments", c.environments);
  c.replicas = detail::get_or<std::int64_t>(j, "replicas", c.replicas);
  if (c.environments < 1 || c.replicas < 1) throw SpecError("environment and replica counts must be positive");
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("env_window")) {
    const auto w = j.at("env_window").get<std::vector<std::int64_t>>();
    if (w.size() != 2 || w[0] > w[1]) throw SpecError("env_window must be [lo, hi] with lo <= hi");
    c.env_window = {w[0], w[1]};
  }
  c.theory_sites = detail::get_or<std::int64_t>(j, "theory_sites", c.theory_sites);
  if (c.theory_sites < 1000) throw SpecError("theory_sites must be at least 1000");
  c.tolerance_k = detail::get_or<double>(j, "tolerance_k", c.tolerance_k);
  if (!(c.tolerance_k > 0)) throw SpecError("tolerance_k must be positive");
  c.checks = detail::get_or<std::vector<std::string>>(j, "checks", c.checks);
  for (const auto& id : c.checks)
    if (std::find(acceptance_ids().begin(), acceptance_ids().end(), id) == acceptance_ids().end())
      throw SpecError("unknown acceptance check '" + id + "'");
  if (j.contains("scale")) {
    const json& js = j.at("scale");
    reject_unknown_keys(js, {"replica_factor", "mixture_draws", "theory_sites"}, "scale block");
    c.scale.replica_factor = detail::get_or<double>(js, "replica_factor", 1.0);
    c.scale.mixture_draws = detail::get_or<std::int64_t>(js, "mixture_draws", c.scale.mixture_draws);
    c.scale.theory_sites = detail::get_or<std::int64_t>(js, "theory_sites", c.scale.theory_sites);
    if (!(c.scale.replica_factor > 0 && c.scale.replica_factor <= 1.0))
      throw SpecError("replica_factor must lie in (0, 1]");
    if (c.scale.mixture_draws < 10000) throw SpecError("mixture_draws must be at least 1e4");
    if (c.scale.theory_sites < 10000) throw SpecError("scale.theory_sites must be at least 1e4");
  }
  c.out = detail::get_or<std::string>(j, "out", c.out);
  c.shifted = detail::get_or<bool>(j, "shifted", c.shifted);
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = c.version;
  j["env"] = to_json(c.env);
  j["init"] = {{"mode", to_string(c.init.mode)}, {"mu", c.init.mu}};
  j["sizes"] = c.sizes;
  j["grid"] = grid_json(c.grid);
  j["environments"] = c.environments;
  j["replicas"] = c.replicas;
  j["seed"] = c.seed;
  j["env_window"] = {c.env_window.lo, c.env_window.hi};
  j["theory_sites"] = c.theory_sites;
  j["tolerance_k"] = c.tolerance_k;
  j["checks"] = c.checks;
  j["scale"] = {{"replica_factor", c.scale.replica_factor},
                {"mixture_draws", c.scale.mixture_draws},
                {"theory_sites", c.scale.theory_sites}};
  j["out"] = c.out;
  j["shifted"] = c.shifted;
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the normalized config; the output directory does not enter it.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version = kCodeVersion;
  int workers = 1;
  json seeds = json::object();
  json timings = json::object();
  std::vector<std::string> artifacts;

  json to_json() const {
    return {{"command", command}, {"config_hash", config_hash}, {"code_version", code_version},
            {"workers", workers}, {"seeds", seeds},             {"timings_seconds", timings},
            {"artifacts", artifacts}};
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline constexpr const char* kWorkersEnv = "RWRE_WORKERS";

/// Worker count: explicit flag, then the RWRE_WORKERS variable, then the
/// hardware concurrency.
inline int resolve_workers(std::optional<int> flag) {
  if (flag) {
    if (*flag < 1) throw std::invalid_argument("--workers must be at least 1");
    return *flag;
  }
  if (const char* e = std::getenv(kWorkersEnv); e && *e) {
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw std::invalid_argument(std::string(kWorkersEnv) + " must be a positive integer");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) across workers. Each task must write only
/// its own slot of any shared output, so results do not depend on the
/// schedule. The first exception (lowest task id) is rethrown.
inline void parallel_for(std::int64_t count, int workers, const std::function<void(std::int64_t)>& fn) {
  if (count <= 0) return;
  workers = static_cast<int>(std::min<std::int64_t>(std::max(1, workers), count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::int64_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Seed of task `id` under purpose `tag`.
inline std::uint64_t task_seed(std::uint64_t seed, StreamTag tag, std::uint64_t id) {
  return Stream::derive(seed, tag, {id});
}

}  // namespace rwre
