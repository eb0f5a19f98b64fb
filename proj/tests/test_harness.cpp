#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nsda/harness/acceptance.hpp"

using namespace nsda;
using namespace nsda::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "nsda_test_harness" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kMinimal = R"(# minimal
[physics]
nu = 0.1
grid_size = 16
[scheme]
tau = 0.01
t_end = 2
burn_in = 1
)";

ExperimentConfig small_twin(const fs::path& dir) {
  ExperimentConfig c;
  c.grid_size = 16;
  c.tau = 0.01;
  c.t_end = 3.0;
  c.burn_in = 1.0;
  c.out_dir = dir.string();
  return c;
}

}  // namespace

TEST(Config, RoundTripDefaultsAndNonDefaults) {
  ExperimentConfig c;
  EXPECT_EQ(parse_config(write_config(c)).config, c);

  c.grid_size = 48;
  c.nu = 0.037;
  c.forcing = "power_law";
  c.beta = 12.5;
  c.h = 0.1 / 3.0;
  c.lambda_cut = 49;
  c.c0 = 1.25;
  c.constants.alpha = 0.6;
  c.scheme = Scheme::fully_implicit;
  c.tau = 1.0 / 3.0;
  c.solver.picard_max_iter = 7;
  c.truth = "nse_integrate";
  c.initial = "perturbed_truth";
  c.tau_list = {0.02, 0.01, 1e-3 / 7.0};
  c.lambda_cut_list = {9, 25};
  c.out_dir = "some/dir";
  c.seed = 18446744073709551615ull;
  const auto loaded = parse_config(write_config(c));
  EXPECT_EQ(loaded.config, c);
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST(Config, PresetsRoundTripAndValidate) {
  for (const char* name : {"twin", "tau-sweep", "n-sweep", "soak", "contraction"}) {
    const auto c = preset(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(parse_config(write_config(c)).config, c) << name;
  }
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Config, MissingRequiredKeyIsNamed) {
  try {
    parse_config("[physics]\nnu = 0.1\n[scheme]\ntau = 0.01\nt_end = 1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("physics.grid_size"), std::string::npos);
  }
}

TEST(Config, UnknownKeyWarnsWithLine) {
  const auto loaded = parse_config(std::string(kMinimal) + "[future]\nshiny = yes\n");
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("future.shiny"), std::string::npos);
  EXPECT_NE(loaded.warnings[0].find("line 10"), std::string::npos);
  EXPECT_EQ(loaded.config.grid_size, 16);
}

TEST(Config, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of(std::string(kMinimal) + "garbage\n"), 9);
  EXPECT_EQ(line_of(std::string(kMinimal) + "[broken\n"), 9);
  EXPECT_EQ(line_of("nu = 1\n"), 1);
  EXPECT_EQ(line_of("[physics]\nnu = fast\ngrid_size = 16\n"), 2);
  EXPECT_EQ(line_of("[physics]\nnu = 0.1\nnu = 0.2\n"), 3);
  EXPECT_EQ(line_of(std::string(kMinimal) + "[output]\nseed = -4\n"), 10);
  EXPECT_EQ(line_of(std::string(kMinimal) + "[scheme]\n"), -1);  // reopening a section is fine
  EXPECT_EQ(line_of(std::string(kMinimal) + "[physics]\ninterpolant = splines\n"), 10);
  EXPECT_EQ(line_of(std::string(kMinimal) + "[sweep]\ntau = 0.1, x\n"), 10);
}

TEST(Config, AutoAndValidation) {
  auto c = parse_config(std::string(kMinimal) + "[physics]\nbeta = auto\nh = 0.25\n").config;
  EXPECT_FALSE(c.beta.has_value());
  EXPECT_DOUBLE_EQ(*c.h, 0.25);
  c.burn_in = c.t_end;
  EXPECT_THROW(c.validate(), ConfigError);
  c.burn_in = 0.5;
  c.truth = "oracle";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch("load");
  write_atomic(dir / "x.cfg", kMinimal);
  EXPECT_EQ(load_config((dir / "x.cfg").string()).config.t_end, 2.0);
  EXPECT_THROW(load_config((dir / "missing.cfg").string()), ConfigError);
}

TEST(Report, AtomicWriteLeavesNoTemporaries) {
  const auto dir = scratch("atomic");
  write_atomic(dir / "a" / "b.txt", "hello\n");
  write_atomic(dir / "a" / "b.txt", "again\n");
  EXPECT_EQ(slurp(dir / "a" / "b.txt"), "again\n");
  size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Report, TextAndChecks) {
  Report r("demo");
  r.set("block", "x", 0.1);
  r.set("block", "x", 0.25);
  r.set("block", "flag", true);
  r.add_check({"good", true, false, ""});
  r.add_check({"gated", false, true, "out of hypothesis"});
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.get("block", "x"), "0.25");
  const auto t = r.text();
  EXPECT_NE(t.find("status = pass"), std::string::npos);
  EXPECT_NE(t.find("gated = skipped"), std::string::npos);
  r.add_check({"bad", false, false, ""});
  EXPECT_FALSE(r.passed());
  EXPECT_THROW(r.get("block", "y"), PreconditionError);
}

TEST(Report, SeriesCsvSchema) {
  SeriesRow row;
  row.step = 3;
  row.time = 0.5;
  row.err_H = 0.25;
  const auto csv = series_csv({row});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,time,norm_H,norm_V,norm_DA,err_H,err_V,envelope_H,envelope_V");
  EXPECT_NE(csv.find("3,0.5,nan,nan,nan,0.25,nan,nan,nan"), std::string::npos);
}

TEST(Setup, AutoBetaAndHSatisfyConditions) {
  ExperimentConfig c = small_twin(scratch("setup"));
  const auto s = build_setup(c);
  EXPECT_NEAR(norm_H(s.physics.forcing), c.grashof * c.nu * c.nu, 1e-14);
  EXPECT_NEAR(s.bounds.G, c.grashof, 1e-12);
  EXPECT_NEAR(s.physics.beta, 2.0 * beta_lower_bound(s.physics, s.bounds), 1e-12);
  EXPECT_NEAR(s.constants.c0 * s.physics.beta * std::pow(s.physics.interpolant.h, 2), 0.5 * c.nu, 1e-14);
  EXPECT_TRUE(s.conditions.core_passed());

  c.interpolant = InterpolantKind::volume_average;
  EXPECT_THROW(build_setup(c), ConfigError);
  c.h = 2.0 * std::numbers::pi / 8.0;
  c.c0_trials = 20;
  const auto v = build_setup(c);
  EXPECT_GT(v.constants.c0, 0.0);
}

TEST(Experiments, TwinWritesEverythingAndNudgingBeatsControl) {
  const auto dir = scratch("twin");
  const auto r = run_twin_experiment(small_twin(dir));
  for (const char* f : {"twin.csv", "control.csv", "config.cfg", "report.txt"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto text = slurp(dir / "report.txt");
  for (const char* key : {"seed = 1", "M1 = ", "beta_lower.passed = true", "decay_orders = "})
    EXPECT_NE(text.find(key), std::string::npos) << key;
  EXPECT_GT(std::stod(r.report.get("twin", "decay_orders")), std::stod(r.report.get("control", "decay_orders")) + 2.0);
  EXPECT_EQ(parse_config(slurp(dir / "config.cfg")).config, small_twin(dir));
}

TEST(Experiments, TruthStartInsideCutoffStaysAtTruncationFloor) {
  // Cutoff below the forcing shell: P_N u = 0 and v stays zero, so the error
  // is exactly |Q_N u|.
  auto c = small_twin(scratch("floor"));
  c.lambda_cut = 2.0;
  c.initial = "perturbed_truth";
  c.perturbation = 0.0;
  c.t_end = 1.0;
  c.burn_in = 0.5;
  const auto s = build_setup(c);
  const auto truth = make_truth(c, s, c.t_end);
  const double qn = norm_H(project_high(truth.stream->truth(0.0), s.physics.cutoff));
  ASSERT_GT(qn, 0.0);
  const auto v0 = make_initial(c, s, *truth.stream);
  const auto run = twin_run(c, s, *truth.stream, v0);
  for (double e : run.err_H.values) EXPECT_NEAR(e, qn, 1e-12 * qn);
}

TEST(Experiments, SweepsRejectShortLists) {
  auto c = preset_tau_sweep();
  c.tau_list = {0.01};
  EXPECT_THROW(run_tau_sweep(c), ConfigError);
  auto n = preset_n_sweep();
  n.lambda_cut_list = {9, 25};
  EXPECT_THROW(run_n_sweep(n), ConfigError);
}

TEST(Experiments, ContractionGatingAndZeroPerturbation) {
  auto c = preset_contraction();
  c.grid_size = 16;
  c.steps = 50;
  c.out_dir = scratch("contract_gate").string();
  const auto s = build_setup(c);
  c.tau = 2.0 / s.physics.beta;
  auto r = run_contraction_test(c);
  EXPECT_EQ(r.report.get("contraction", "in_hypothesis"), "false");
  bool skipped = false;
  for (const auto& chk : r.report.checks())
    if (chk.name == "envelope_respected") skipped = chk.skipped;
  EXPECT_TRUE(skipped);
  EXPECT_NE(slurp(fs::path(c.out_dir) / "report.txt").find("envelope_respected = skipped"), std::string::npos);

  c.tau = 0.002;
  c.perturbation = 0.0;
  c.out_dir = scratch("contract_zero").string();
  r = run_contraction_test(c);
  EXPECT_TRUE(r.passed()) << r.report.text();

  c.perturbation = 1e-3;
  c.scheme = Scheme::fully_implicit;
  c.out_dir = scratch("contract_full").string();
  r = run_contraction_test(c);
  EXPECT_TRUE(r.passed()) << r.report.text();
  EXPECT_EQ(r.report.get("contraction", "norm"), "V");
}

TEST(Experiments, ShortSoakPasses) {
  auto c = preset_soak();
  c.grid_size = 16;
  c.steps = 200;
  c.csv_every = 10;
  c.out_dir = scratch("soak").string();
  const auto r = run_stability_soak(c);
  EXPECT_TRUE(r.passed()) << r.report.text();
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "tau_2.csv"));
  EXPECT_LT(std::stod(r.report.get("soak", "tau_0.max_norm_V_over_6M1")), 1.0);
}

TEST(Experiments, SolverFailureFlushesReportAndKeepsEarlierOutputs) {
  const auto dir = scratch("failure");
  write_atomic(dir / "earlier.csv", "step\n1\n");
  auto c = small_twin(dir);
  c.scheme = Scheme::fully_implicit;
  c.solver.picard_max_iter = 1;
  EXPECT_THROW(run_twin_experiment(c), SolverError);
  const auto text = slurp(dir / "report.txt");
  EXPECT_NE(text.find("status = fail"), std::string::npos);
  EXPECT_NE(text.find("final_residual"), std::string::npos);
  EXPECT_EQ(slurp(dir / "earlier.csv"), "step\n1\n");
}

TEST(Experiments, ReproducibleGivenConfigAndSeed) {
  const auto a = scratch("repro_a");
  auto c = small_twin(a);
  c.t_end = 1.5;
  c.burn_in = 0.5;
  run_twin_experiment(c);
  c.out_dir = scratch("repro_b").string();
  run_twin_experiment(c);
  std::string why;
  EXPECT_TRUE(same_csv_outputs(a, c.out_dir, &why)) << why;
  c.seed = 2;
  c.out_dir = scratch("repro_c").string();
  run_twin_experiment(c);
  EXPECT_FALSE(same_csv_outputs(a, c.out_dir));
}
