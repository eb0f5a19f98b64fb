// nsda: command-line front end for the experiment harness.
//
//   nsda check
//   nsda twin --config configs/twin.cfg --out out/twin
//   nsda constants --config configs/soak.cfg
//
// Without --config each experiment runs its built-in preset. Exit status is
// 0 iff every enabled check passes, 1 if one fails, 2 on configuration
// errors and 3 on solver failures.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nsda/harness/acceptance.hpp"

namespace {

using namespace nsda;
using namespace nsda::harness;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string scheme;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "RNG seed");
  sub->add_option("--scheme", o.scheme, "time scheme")->check(CLI::IsMember({"semi", "full"}));
  sub->add_flag("--quiet", o.quiet, "print only the status line");
}

ExperimentConfig resolve(const std::string& name, const Options& o) {
  ExperimentConfig c;
  if (o.config.empty()) {
    c = preset(name);
  } else {
    auto loaded = load_config(o.config);
    if (!o.quiet)
      for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    c = loaded.config;
  }
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.seed) c.seed = *o.seed;
  if (!o.scheme.empty()) c.scheme = scheme_from_string(o.scheme);
  return c;
}

int finish(const ExperimentReport& r, const Options& o) {
  if (!o.quiet) std::cout << r.report.text() << "\n";
  std::cout << r.report.experiment() << ": " << (r.passed() ? "PASS" : "FAIL") << "  (outputs in " << r.dir.string() << ")\n";
  return r.passed() ? 0 : 1;
}

int run_check(const Options& o) {
  const auto scratch = std::filesystem::path(o.out.empty() ? "out/check" : o.out);
  bool all = true;
  for (int id : {1, 2, 3, 9}) {
    const auto r = run_criterion(id, scratch);
    if (!o.quiet || !r.passed) std::cout << r.line() << "\n";
    all = all && r.passed;
  }
  std::cout << "check: " << (all ? "PASS" : "FAIL") << "\n";
  return all ? 0 : 1;
}

int run_constants(const Options& o) {
  const auto c = resolve("twin", o);
  const auto s = build_setup(c);
  if (!s.forced) throw ConfigError("constants: forcing is zero, the bounds are undefined");
  Report r("constants");
  describe_setup(r, c, s);
  for (const auto& cond : s.conditions.conditions) r.add_check({cond.name, cond.passed, false, cond.statement});
  if (!o.quiet) std::cout << r.text() << "\n";
  const bool ok = s.conditions.core_passed();
  std::cout << "constants: core conditions " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nudging data assimilation for 2D periodic Navier-Stokes"};
  app.require_subcommand(1);
  Options o;
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {{"check", "operator self-tests and oracle comparisons"},
                              {"twin", "twin assimilation experiment"},
                              {"tau-sweep", "first-order accuracy in tau"},
                              {"n-sweep", "Galerkin cutoff sweep with postprocessing"},
                              {"soak", "long-run stability bounds"},
                              {"contraction", "contraction of perturbed trajectories"},
                              {"constants", "print bound constants and admissibility conditions"}};
  for (const auto& cmd : commands) add_common(app.add_subcommand(cmd.name, cmd.help), o);
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "check") return run_check(o);
    if (name == "constants") return run_constants(o);
    const auto c = resolve(name, o);
    if (name == "twin") return finish(run_twin_experiment(c), o);
    if (name == "tau-sweep") return finish(run_tau_sweep(c), o);
    if (name == "n-sweep") return finish(run_n_sweep(c), o);
    if (name == "soak") return finish(run_stability_soak(c), o);
    return finish(run_contraction_test(c), o);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << " (final residual " << e.final_residual() << ")\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
