// rwre_lab: theory tables, environment export, replica simulation and the
// acceptance suite.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rwre/rwre.hpp"

namespace fs = std::filesystem;
using namespace rwre;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : config_from_json(read_json(o.config));
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  return c;
}

RunManifest start_manifest(const std::string& cmd, const ExperimentConfig& c, int workers) {
  RunManifest m;
  m.command = cmd;
  m.config_hash = config_hash(c);
  m.workers = workers;
  m.seeds["root"] = c.seed;
  return m;
}

void finish(RunManifest& m, const ExperimentConfig& c, const Stopwatch& sw) {
  m.timings["total"] = sw.seconds();
  write_json(fs::path(c.out) / "config.json", config_to_json(c));
  write_json(fs::path(c.out) / "manifest.json", m.to_json());
}

int cmd_theory(const CommonOptions& o) {
  Stopwatch sw;
  const ExperimentConfig c = load_config(o);
  const int workers = resolve_workers(o.workers);
  RunManifest man = start_manifest("theory", c, workers);
  const EnvSpec spec(c.env);
  const AnnealedMoments am = annealed_moments(spec);
  TheoryOptions topt;
  topt.sites = c.theory_sites;
  topt.seed = task_seed(c.seed, StreamTag::environment, 0);
  man.seeds["theory_environment"] = topt.seed;
  const TheoryParams tp = theory_params(spec, c.init, topt);
  const LimitParams lp{tp.mu, tp.sigma0_sq, tp.sigma1_sq, tp.sigma2_sq};

  json j;
  j["env"] = to_json(spec.params());
  j["init"] = {{"mode", to_string(c.init.mode)}, {"mu", c.init.mu}};
  j["m1"] = spec.m1();
  j["m2"] = spec.m2();
  j["v_P"] = tp.v_P;
  j["ET1"] = tp.ET1;
  j["ET1_sq"] = am.ET1_sq;
  j["var_ET1"] = am.var_ET1;
  j["mean_var_T1"] = am.mean_var_T1;
  j["mu"] = tp.mu;
  j["sigma0_sq"] = tp.sigma0_sq;
  j["sigma1_sq"] = tp.sigma1_sq;
  j["sigma1_sq_se"] = tp.sigma1_sq_se;
  j["sigma1_sq_closed_form"] = am.v * am.v * am.v * am.mean_var_T1;
  j["sigma2_sq"] = tp.sigma2_sq;
  j["mean_f"] = tp.mean_f;
  j["mean_f_se"] = tp.mean_f_se;
  j["sites"] = c.theory_sites;

  std::vector<SpaceTime> pts;
  for (const auto& g : c.grid) pts.push_back({g.t, g.r});
  const std::vector<double> G = gamma_matrix(lp, pts);
  j["grid"] = grid_json(c.grid);
  j["gamma"] = matrix_json(G, pts.size());
  const fs::path out(c.out);
  write_json(out / "theory.json", j);
  write_matrix_csv(G, pts.size(), out / "gamma.csv");

  CsvWriter psi(out / "psi.csv", {"alpha_sq", "x", "psi"});
  for (double a2 : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0})
    for (int i = 0; i <= 120; ++i) {
      const double x = -3.0 + 0.05 * i;
      psi.row(std::vector<double>{a2, x, Psi(a2, x)});
    }
  man.artifacts = {"theory.json", "gamma.csv", "psi.csv", "config.json", "manifest.json"};
  finish(man, c, sw);
  std::cout << "v_P " << fmt_double(tp.v_P) << "\nET1 " << fmt_double(tp.ET1) << "\nsigma0_sq "
            << fmt_double(tp.sigma0_sq) << "\nsigma1_sq " << fmt_double(tp.sigma1_sq) << " +- "
            << fmt_double(tp.sigma1_sq_se) << "\nsigma2_sq " << fmt_double(tp.sigma2_sq) << "\n";
  return 0;
}

int cmd_env(const CommonOptions& o) {
  Stopwatch sw;
  const ExperimentConfig c = load_config(o);
  const int workers = resolve_workers(o.workers);
  RunManifest man = start_manifest("env", c, workers);
  const EnvSpec spec(c.env);
  const fs::path out(c.out);
  std::vector<std::string> artifacts;
  std::vector<json> summaries(static_cast<std::size_t>(c.environments));
  parallel_for(c.environments, workers, [&](std::int64_t e) {
    const std::uint64_t seed = task_seed(c.seed, StreamTag::replica_env, static_cast<std::uint64_t>(e));
    const Environment env = sample_environment(spec, padded_window(spec, c.env_window), seed);
    const QuenchedFunctionals q = compute_functionals(env, {.compute_f = c.init.mode == InitMode::quenched_poisson});
    const std::string stem = "env_" + std::to_string(e);
    save_environment(env, out / stem);
    CsvWriter csv(out / (stem + "_profiles.csv"), {"site", "omega", "a", "s", "var_T1", "h", "f"});
    const Window w = q.valid();
    for (std::int64_t x = w.lo; x <= w.hi; ++x) {
      csv.row(std::vector<std::string>{std::to_string(x), fmt_double(env.omega(x)), fmt_double(q.a(x)),
                                       fmt_double(q.s(x)), fmt_double(q.var_T1(x)),
                                       q.has_h() ? fmt_double(q.h(x)) : "",
                                       q.f_values().empty() ? "" : fmt_double(q.f(x))});
    }
    json zs = json::array();
    if (q.has_h()) {
      for (auto n : c.sizes)
        for (const auto& g : c.grid) {
          const std::int64_t idx = lattice_floor(static_cast<double>(n) * g.t * q.speed());
          if (w.contains(idx)) zs.push_back({{"n", n}, {"t", g.t}, {"Z", q.Z(n, g.t)}});
        }
    }
    summaries[static_cast<std::size_t>(e)] = {{"environment", e},
                                              {"seed", seed},
                                              {"window", {env.window().lo, env.window().hi}},
                                              {"valid", {w.lo, w.hi}},
                                              {"seed_error_bound", q.boundary_bias().seed_error_bound},
                                              {"f_truncated", q.boundary_bias().f_truncated_depth +
                                                                  q.boundary_bias().f_truncated_edge},
                                              {"Z", zs}};
  });
  json s = json::array();
  for (std::int64_t e = 0; e < c.environments; ++e) {
    s.push_back(summaries[static_cast<std::size_t>(e)]);
    const std::string stem = "env_" + std::to_string(e);
    artifacts.insert(artifacts.end(), {stem + ".bin", stem + ".json", stem + "_profiles.csv"});
    man.seeds[stem] = summaries[static_cast<std::size_t>(e)]["seed"];
  }
  write_json(out / "environments.json", s);
  artifacts.insert(artifacts.end(), {"environments.json", "config.json", "manifest.json"});
  man.artifacts = artifacts;
  finish(man, c, sw);
  std::cout << "wrote " << c.environments << " environment(s) to " << c.out << "\n";
  return 0;
}

int cmd_simulate(const CommonOptions& o) {
  Stopwatch sw;
  const ExperimentConfig c = load_config(o);
  const int workers = resolve_workers(o.workers);
  RunManifest man = start_manifest("simulate", c, workers);
  const EnvSpec spec(c.env);
  const fs::path out(c.out);
  json exact = json::array();
  std::vector<std::string> artifacts;
  for (std::int64_t e = 0; e < c.environments; ++e) {
    const std::uint64_t env_seed = task_seed(c.seed, StreamTag::replica_env, static_cast<std::uint64_t>(e));
    man.seeds["env_" + std::to_string(e)] = env_seed;
    for (auto n : c.sizes) {
      Stopwatch step;
      const Environment env = sample_environment(spec, padded_window(spec, observation_core(n, c.grid, spec.speed())),
                                                 env_seed);
      const QuenchedFunctionals q = compute_functionals(env);
      const OccupationProfile occ(c.init, &q);
      const ObservationPlan plan = make_plan(env, q, occ, n, c.grid, c.shifted);
      const CurrentMoments cm = quenched_cov_current(
          env, [&](std::int64_t x) { return occ.mean(x); }, [&](std::int64_t x) { return occ.var(x); }, n,
          plan.fronts);
      const std::uint64_t rseed = Stream::derive(c.seed, StreamTag::walk, {static_cast<std::uint64_t>(e),
                                                                          static_cast<std::uint64_t>(n)});
      std::vector<CurrentObservation> obs(static_cast<std::size_t>(c.replicas));
      parallel_for(c.replicas, workers, [&](std::int64_t i) {
        obs[static_cast<std::size_t>(i)] = observe_replica(env, occ, plan, rseed, static_cast<std::uint64_t>(i));
      });
      const std::string tag = "env" + std::to_string(e) + "_n" + std::to_string(n);
      JsonlWriter log(out / ("replicas_" + tag + ".jsonl"));
      for (const auto& ob : obs) append_observation(log, ob, static_cast<std::uint64_t>(e), n);
      write_matrix_csv(cm.cov, cm.k, out / ("exact_cov_" + tag + ".csv"));
      artifacts.insert(artifacts.end(), {"replicas_" + tag + ".jsonl", "exact_cov_" + tag + ".csv"});
      json rec{{"environment", e},
               {"n", n},
               {"env_seed", env_seed},
               {"replica_seed", rseed},
               {"grid", grid_json(c.grid)},
               {"exact_mean", cm.mean},
               {"exact_cov", matrix_json(cm.cov, cm.k)},
               {"Z", plan.Z},
               {"truncation_tail", cm.truncation_tail + plan.truncation_tail}};
      if (c.replicas >= 30) {
        ReplicaMatrix M(obs.size(), c.grid.size());
        for (std::size_t i = 0; i < obs.size(); ++i)
          for (std::size_t j = 0; j < c.grid.size(); ++j) M(i, j) = obs[i].V[j];
        const CovEstimate est = estimate_cov(M);
        rec["replica_cov"] = matrix_json(est.cov, est.k);
        rec["replica_cov_se"] = matrix_json(est.se, est.k);
        write_matrix_csv(est.cov, est.k, out / ("replica_cov_" + tag + ".csv"));
        artifacts.push_back("replica_cov_" + tag + ".csv");
      }
      exact.push_back(rec);
      man.timings[tag] = step.seconds();
    }
  }
  write_json(out / "moments.json", exact);
  artifacts.insert(artifacts.end(), {"moments.json", "config.json", "manifest.json"});
  man.artifacts = artifacts;
  finish(man, c, sw);
  std::cout << "simulated " << c.environments << " environment(s) x " << c.sizes.size() << " size(s) x "
            << c.replicas << " replica(s) into " << c.out << "\n";
  return 0;
}

int cmd_verify(const CommonOptions& o) {
  Stopwatch sw;
  const ExperimentConfig c = load_config(o);
  const int workers = resolve_workers(o.workers);
  RunManifest man = start_manifest("verify", c, workers);
  AcceptanceContext ctx;
  ctx.seed = c.seed;
  ctx.workers = workers;
  ctx.k = c.tolerance_k;
  ctx.scale = c.scale;
  const auto results = run_acceptance(ctx, c.checks, [](const CheckResult& r) {
    std::cout << format_result_line(r) << std::endl;
  });
  json rep;
  rep["config_hash"] = man.config_hash;
  rep["code_version"] = kCodeVersion;
  rep["seed"] = c.seed;
  json checks = json::array();
  bool all = true;
  std::string txt;
  for (const auto& r : results) {
    all = all && r.pass;
    checks.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"summary", r.summary}, {"details", r.details}});
    txt += format_result_line(r) + "\n";
    man.timings[r.id] = r.seconds;
  }
  rep["checks"] = checks;
  rep["passed"] = all;
  const fs::path out(c.out);
  write_json(out / "report.json", rep);
  {
    auto f = open_out(out / "report.txt");
    f << txt << (all ? "ALL PASS" : "SOME CHECKS FAILED") << "\n";
  }
  man.artifacts = {"report.json", "report.txt", "config.json", "manifest.json"};
  finish(man, c, sw);
  std::cout << (all ? "ALL PASS" : "SOME CHECKS FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle currents in a one-dimensional random walk in random environment"};
  app.require_subcommand(1);
  CommonOptions opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "root seed (overrides the config)");
    sub->add_option("--workers", opts.workers, "worker threads (else " + std::string(kWorkersEnv) + ", else all cores)");
    sub->add_option("--out", opts.out, "output directory (overrides the config)");
  };
  auto* theory = app.add_subcommand("theory", "limit parameters, Gamma on the grid, Psi table");
  auto* env = app.add_subcommand("env", "sample environments and export omega, a, s, h, f and Z");
  auto* simulate = app.add_subcommand("simulate", "replica currents with exact quenched moments");
  auto* verify = app.add_subcommand("verify", "run the acceptance checks; exit 1 on any failure");
  for (auto* s : {theory, env, simulate, verify}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  try {
    if (*theory) return cmd_theory(opts);
    if (*env) return cmd_env(opts);
    if (*simulate) return cmd_simulate(opts);
    return cmd_verify(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
