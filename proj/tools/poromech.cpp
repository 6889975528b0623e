#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "poromech/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitSolver = 2;

int thread_cap() {
  if (const char* env = std::getenv("POROMECH_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  long seed = -1;
  double eps_final = -1.0;
  double h = -1.0;
  int steps = -1;
  bool quiet = false;
};

poromech::Config load_with_overrides(const CommonFlags& f) {
  poromech::Config c = poromech::load_config_file(f.config_path);
  if (!f.out_override.empty()) c.out_dir = f.out_override;
  if (f.seed >= 0) c.seed = static_cast<unsigned long>(f.seed);
  if (f.eps_final > 0.0)
    poromech::apply_config_entry(c, "eps_final", std::to_string(f.eps_final), 0);
  if (f.h > 0.0) c.controls.h = f.h;
  if (f.steps >= 0) c.n_steps = f.steps;
  return c;
}

int run_one(const poromech::Config& config, bool quiet) {
  using namespace poromech;
  BuiltScenario b = build_scenario(config);
  RunResult res = run_scenario(b, quiet, &std::cerr);
  write_outputs(config.out_dir, *b.mesh, b.sp, res.trajectory, res.manifest,
                config.snapshot_every);
  if (res.trajectory.failed) {
    std::cerr << "run failed at step " << res.trajectory.failed_step << ": "
              << res.trajectory.error << "\n";
    return kExitSolver;
  }
  if (!quiet)
    std::cerr << "completed " << res.manifest.steps_completed << " steps -> "
              << config.out_dir << "\n";
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_run_flags) {
  cmd->set_help_flag("--help", "print help");  // keep --h free for the time step
  cmd->add_option("config", f.config_path, "scenario configuration file")->required();
  if (with_run_flags) {
    cmd->add_option("--out", f.out_override, "output directory override");
    cmd->add_option("--seed", f.seed, "seed override for randomized audits");
    cmd->add_option("--eps-final", f.eps_final, "truncate the eps schedule at this level");
    cmd->add_option("--h", f.h, "time step override");
    cmd->add_option("--steps", f.steps, "number of steps override");
  }
  cmd->add_flag("--quiet", f.quiet, "suppress progress output");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-static two-phase poromechanics simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, check_flags, sweep_flags, audit_flags;
  bool explain = false;
  std::string sweep_param;
  std::vector<std::string> sweep_values;

  auto* cmd_run = app.add_subcommand("run", "run the transient scenario");
  add_common(cmd_run, run_flags, true);
  auto* cmd_check = app.add_subcommand("check", "validate the configuration and "
                                                "estimate the weak-coupling margin");
  add_common(cmd_check, check_flags, false);
  cmd_check->add_flag("--explain", explain, "print the assumption-to-rule mapping");
  auto* cmd_sweep = app.add_subcommand("sweep", "independent runs over one parameter");
  add_common(cmd_sweep, sweep_flags, true);
  cmd_sweep->add_option("--param", sweep_param, "configuration key to vary")->required();
  cmd_sweep->add_option("--values", sweep_values, "values for the varied key")->required();
  auto* cmd_audit = app.add_subcommand("audit", "property-test battery on the scenario");
  add_common(cmd_audit, audit_flags, true);

  CLI11_PARSE(app, argc, argv);

  using namespace poromech;
  try {
    if (cmd_run->parsed()) {
      return run_one(load_with_overrides(run_flags), run_flags.quiet);
    }

    if (cmd_check->parsed()) {
      const Config c = load_config_file(check_flags.config_path);
      if (explain) {
        for (const auto& line : explain_validation()) std::cout << line << "\n";
      }
      const auto violations = validate_config(c);
      if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
        return kExitValidation;
      }
      BuiltScenario b = build_scenario(c);
      const auto rep = weak_coupling_audit(b.sp, b.params, c.audit_samples,
                                           unsigned(c.seed) + 11);
      std::cout << "C1 estimate (lower bound): " << rep.c1_estimate << "\n"
                << "weak coupling margin lambda - M b^2 C1: " << rep.margin
                << (rep.satisfied ? "  (satisfied, advisory)" : "  (VIOLATED, advisory)")
                << "\n";
      if (!rep.satisfied)
        std::cerr << "warning: (H7) weak coupling condition not met by the estimate\n";
      return kExitOk;
    }

    if (cmd_sweep->parsed()) {
      const Config base = load_with_overrides(sweep_flags);
      std::atomic<int> worst{kExitOk};
      std::vector<std::thread> pool;
      const int cap = thread_cap();
      std::atomic<std::size_t> cursor{0};
      auto worker = [&]() {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= sweep_values.size()) return;
          try {
            Config c = base;
            apply_config_entry(c, sweep_param, sweep_values[i], 0);
            c.out_dir = base.out_dir + "/sweep_" + std::to_string(i);
            const int code = run_one(c, true);
            int expect = worst.load();
            while (code > expect && !worst.compare_exchange_weak(expect, code)) {}
          } catch (const std::exception& e) {
            std::cerr << "sweep value '" << sweep_values[i] << "': " << e.what() << "\n";
            int expect = worst.load();
            while (kExitValidation > expect &&
                   !worst.compare_exchange_weak(expect, kExitValidation)) {}
          }
        }
      };
      const int nthreads = std::min<int>(cap, int(sweep_values.size()));
      for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      return worst.load();
    }

    if (cmd_audit->parsed()) {
      const Config c = load_with_overrides(audit_flags);
      BuiltScenario b = build_scenario(c);
      const AuditBattery battery = audit_battery(b);
      for (const auto& line : battery.lines)
        std::cout << (line.pass ? "[ pass ] " : "[ FAIL ] ") << line.name
                  << "  (measure " << line.measure << ")\n";
      return battery.all_pass() ? kExitOk : kExitSolver;
    }
  } catch (const ValidationError& e) {
    for (const auto& v : e.violations) std::cerr << "violation: " << v << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const StepFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}
