#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bridgevi_cli/commands.hpp"
#include "bridgevi_cli/config.hpp"
#include "bridgevi_cli/io.hpp"

using namespace bridgevi;
using namespace bridgevi::cli;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("bridgevi_cli_" + std::string(info->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }

  RunConfig simulate_config(const std::string& preset, const std::string& out) const {
    RunConfig c;
    c.command = "simulate";
    apply_preset(c, preset);
    apply_seed(c, 11);
    c.out = dir(out).string();
    return c;
  }

  // A scenario1-style dataset of `n` rows and a quick fit configuration for it.
  RunConfig toy_fit(std::size_t n, const std::string& backend, const std::string& out) {
    RunConfig s = simulate_config("scenario1", "toy_data");
    s.simulate.scenario1.n = n;
    s.simulate.scenario1.replicas = 1;
    std::ostringstream log;
    EXPECT_EQ(cmd_simulate(s, log), 0);
    RunConfig c;
    c.command = "fit";
    apply_preset(c, "scenario1");
    apply_seed(c, 5);
    c.dataset = (dir("toy_data") / "replica_001.csv").string();
    c.backend = backend;
    c.advi.iterations = 300;
    c.mcmc.iterations = 600;
    c.mcmc.burn_in = 100;
    c.mcmc.thin = 1;
    c.draws = 400;
    c.out = dir(out).string();
    return c;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path root_;
};

}  // namespace

TEST(Io, CsvParsingAndErrors) {
  const fs::path p = fs::temp_directory_path() / "bridgevi_io_test.csv";
  {
    std::ofstream o(p);
    o << "y, \"x, quoted\"\n1.5, 2\n-3,4e-1\n";
  }
  const CsvText t = read_csv(p);
  EXPECT_EQ(t.header, (std::vector<std::string>{"y", "x, quoted"}));
  EXPECT_EQ(t.numeric(t.column("x, quoted")), (std::vector<double>{2.0, 0.4}));
  EXPECT_THROW((void)t.column("z"), std::invalid_argument);
  {
    std::ofstream o(p);
    o << "y,x\n1,2,3\n";
  }
  EXPECT_THROW(read_csv(p), std::invalid_argument);
  fs::remove(p);
  EXPECT_ANY_THROW(read_csv(fs::temp_directory_path() / "bridgevi_missing.csv"));
}

TEST(Io, NumberFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(2.0), "2");
}

TEST(Io, TimestampsInHours) {
  EXPECT_EQ(timestamp_to_hours("1970-01-01 00:00:00"), 0.0);
  EXPECT_EQ(timestamp_to_hours("1970-01-02T03:00:00"), 27.0);
  EXPECT_EQ(timestamp_to_hours("2004-12-31 01:00:00") - timestamp_to_hours("2004-12-30 23:00:00"), 2.0);
  EXPECT_ANY_THROW(timestamp_to_hours("yesterday"));
}

TEST(Config, PresetDefaults) {
  RunConfig c;
  apply_preset(c, "scenario1");
  EXPECT_EQ(c.hyper.a_phi, 1.0);
  EXPECT_EQ(c.hyper.b_lambda, 1.0);
  EXPECT_EQ(c.hyper.a_eta, 1.0);
  EXPECT_EQ(c.advi.learning_rate, 0.01);
  EXPECT_EQ(c.advi.mc_samples, 100u);
  EXPECT_EQ(c.advi.batch_size, 0u);
  ASSERT_EQ(c.covariates.size(), 1u);
  EXPECT_EQ(c.covariates[0].knots.size(), 38u);

  apply_preset(c, "scenario2-50000");
  EXPECT_EQ(c.advi.batch_size, 1000u);
  EXPECT_EQ(c.advi.iterations, 5000u);
  EXPECT_EQ(c.simulate.scale_n, 50000u);

  apply_preset(c, "energy-weekly");
  ASSERT_EQ(c.covariates.size(), 2u);
  EXPECT_EQ(c.covariates[0].kind, "fourier");
  EXPECT_EQ(c.covariates[0].period, 168.0);
  EXPECT_FALSE(c.covariates[0].penalized);
  EXPECT_EQ(c.covariates[1].knot_spacing.value_or(0.0), 100.0);

  EXPECT_THROW(apply_preset(c, "scenario9"), std::invalid_argument);
  EXPECT_THROW(apply_preset(c, "scenario2-123"), std::out_of_range);
}

TEST(Config, JsonMergeAndValidation) {
  RunConfig c;
  c.command = "fit";
  apply_json(c, Json::parse(R"({"preset": "scenario3", "advi": {"iterations": 12, "optimizer": "sgd"},
                                "seed": 9, "dataset": "d.csv"})"));
  EXPECT_EQ(c.advi.iterations, 12u);
  EXPECT_EQ(c.advi.optimizer, OptimizerKind::sgd);
  EXPECT_EQ(c.mcmc.seed, 9u);
  EXPECT_EQ(c.covariates.size(), 3u);
  EXPECT_NO_THROW(validate(c));
  EXPECT_THROW(apply_json(c, Json::parse(R"({"advi": {"iterationz": 3}})")), std::invalid_argument);
  EXPECT_THROW(apply_json(c, Json::parse(R"({"mystery": 1})")), std::invalid_argument);
  c.backend = "nuts";
  EXPECT_THROW(validate(c), std::invalid_argument);
  c.backend = "mcmc";
  c.dataset.clear();
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Config, BasisResolution) {
  CovariateConfig cov;
  cov.knot_spacing = 0.25;
  const std::vector<double> x{0.0, 0.4, 1.0};
  const BasisSpec b = resolve_basis(cov, x);
  EXPECT_LE(b.interior_lo(), 0.0);
  EXPECT_GE(b.interior_hi(), 1.0);
  cov.knot_spacing.reset();
  EXPECT_THROW(resolve_basis(cov, x), std::invalid_argument);
  cov.n_knots = 12;
  EXPECT_EQ(resolve_basis(cov, x).knots.size(), 12u);
  EXPECT_EQ(basis_from_json(to_json(b)).knots, b.knots);
}

TEST_F(CliTest, SimulateScenario1WritesReplicasAndIsReproducible) {
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(simulate_config("scenario1", "a"), log), 0);
  ASSERT_EQ(cmd_simulate(simulate_config("scenario1", "b"), log), 0);
  std::size_t replicas = 0;
  for (const auto& e : fs::directory_iterator(dir("a"))) {
    if (e.path().filename().string().starts_with("replica_")) ++replicas;
  }
  EXPECT_EQ(replicas, 100u);
  EXPECT_TRUE(fs::exists(dir("a") / "truth.csv"));
  EXPECT_TRUE(fs::exists(dir("a") / "truth.json"));
  for (const char* f : {"replica_001.csv", "replica_100.csv", "truth.csv", "truth.json"}) {
    EXPECT_EQ(slurp(dir("a") / f), slurp(dir("b") / f)) << f;
  }
  const CsvText r = read_csv(dir("a") / "replica_042.csv");
  EXPECT_EQ(r.header, (std::vector<std::string>{"y", "x"}));
  EXPECT_EQ(r.rows.size(), 100u);
}

TEST_F(CliTest, SimulateScenario3OneFile) {
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(simulate_config("scenario3", "s3"), log), 0);
  const CsvText d = read_csv(dir("s3") / "data.csv");
  EXPECT_EQ(d.header, (std::vector<std::string>{"y", "x1", "x2"}));
  EXPECT_EQ(d.rows.size(), 1000u);
  const CsvText t = read_csv(dir("s3") / "truth.csv");
  EXPECT_EQ(t.header.back(), "curve");
}

TEST_F(CliTest, ToyFitIsFastAndComplete) {
  RunConfig c = toy_fit(10, "advi", "fit");
  apply_preset(c, "scenario1");
  c.dataset = (dir("toy_data") / "replica_001.csv").string();
  c.out = dir("fit").string();
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(cmd_fit(c, log), 0) << log.str();
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
  for (const char* f : {"draws.csv", "summary.json", "trace.csv", "state.json"}) {
    EXPECT_TRUE(fs::exists(dir("fit") / f)) << f;
  }
  const Json s = read_json(dir("fit") / "summary.json");
  EXPECT_EQ(s.at("backend"), "advi");
  EXPECT_EQ(s.at("n"), 10);
  EXPECT_EQ(read_csv(dir("fit") / "draws.csv").rows.size(), c.draws);
}

TEST_F(CliTest, SeededFitsAreByteIdenticalApartFromTiming) {
  for (const char* backend : {"advi", "mcmc"}) {
    RunConfig a = toy_fit(30, backend, std::string("a_") + backend);
    RunConfig b = a;
    b.out = dir(std::string("b_") + backend).string();
    std::ostringstream log;
    ASSERT_EQ(cmd_fit(a, log), 0);
    ASSERT_EQ(cmd_fit(b, log), 0);
    EXPECT_EQ(slurp(fs::path(a.out) / "draws.csv"), slurp(fs::path(b.out) / "draws.csv")) << backend;
  }
}

TEST_F(CliTest, PredictDefaultGridAndEmptyGrid) {
  RunConfig f = toy_fit(25, "mcmc", "fit");
  std::ostringstream log;
  ASSERT_EQ(cmd_fit(f, log), 0);
  RunConfig p;
  p.command = "predict";
  p.fit_dir = f.out;
  p.out = dir("band").string();
  ASSERT_EQ(cmd_predict(p, log), 0);
  const CsvText band = read_csv(dir("band") / "band.csv");
  EXPECT_EQ(band.header, (std::vector<std::string>{"x", "mean", "lower", "upper"}));
  ASSERT_EQ(band.rows.size(), 25u);
  const auto lo = band.numeric(2);
  const auto hi = band.numeric(3);
  for (std::size_t i = 0; i < lo.size(); ++i) EXPECT_GE(hi[i], lo[i]);

  {
    std::ofstream o(dir("empty.csv"));
    o << "x\n";
  }
  p.grid = dir("empty.csv").string();
  p.out = dir("band_empty").string();
  ASSERT_EQ(cmd_predict(p, log), 0);
  const CsvText e = read_csv(dir("band_empty") / "band.csv");
  EXPECT_TRUE(e.rows.empty());
  EXPECT_EQ(e.header.size(), 4u);

  {
    std::ofstream o(dir("wide.csv"));
    o << "x\n-5\n0.5\n";
  }
  p.grid = dir("wide.csv").string();
  p.out = dir("band_wide").string();
  std::ostringstream warn;
  ASSERT_EQ(cmd_predict(p, warn), 0);
  EXPECT_NE(warn.str().find("warning"), std::string::npos);
}

TEST_F(CliTest, CompareIdentityAndMissingTruth) {
  RunConfig f = toy_fit(20, "advi", "fit");
  std::ostringstream log;
  ASSERT_EQ(cmd_fit(f, log), 0);
  RunConfig c;
  c.command = "compare";
  c.fit_a = f.out;
  c.fit_b = f.out;
  c.out = dir("cmp").string();
  ASSERT_EQ(cmd_compare(c, log), 0);
  const Json j = read_json(dir("cmp") / "comparison.json");
  EXPECT_EQ(j.at("rejection_fraction"), 0.0);
  for (const auto& p : j.at("parameters")) EXPECT_EQ(p.at("p_value"), 1.0);
  EXPECT_FALSE(j.at("first").contains("mae"));

  c.truth = (dir("toy_data") / "truth.csv").string();
  ASSERT_EQ(cmd_compare(c, log), 0);
  const Json k = read_json(dir("cmp") / "comparison.json");
  EXPECT_TRUE(k.at("first").contains("mae"));
  EXPECT_TRUE(k.at("second").contains("coverage"));
}

TEST_F(CliTest, CompareRejectsMisalignedFits) {
  RunConfig a = toy_fit(20, "advi", "fa");
  std::ostringstream log;
  ASSERT_EQ(cmd_fit(a, log), 0);
  RunConfig b = a;
  b.covariates[0].knots = {-0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3};
  b.out = dir("fb").string();
  ASSERT_EQ(cmd_fit(b, log), 0);
  RunConfig c;
  c.command = "compare";
  c.fit_a = a.out;
  c.fit_b = b.out;
  c.out = dir("cmp").string();
  EXPECT_THROW(cmd_compare(c, log), std::invalid_argument);
}

TEST_F(CliTest, BenchSingleSizeAndMemoryGuard) {
  RunConfig c;
  c.command = "bench";
  c.bench.sizes = {1000};
  c.bench.iterations = 20;
  c.out = dir("bench").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_bench(c, log), 0);
  const CsvText t = read_csv(dir("bench") / "timing.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"n", "MCMC", "ADVI", "iterations", "batch_size"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "1000");

  c.bench.sizes = {1000, 1000000};
  c.bench.max_bytes = std::size_t{1} << 20;
  EXPECT_THROW(cmd_bench(c, log), std::invalid_argument);
  c.bench.sizes = {777};
  c.bench.max_bytes = std::size_t{2} << 30;
  EXPECT_THROW(cmd_bench(c, log), std::out_of_range);
}

#ifdef BRIDGEVI_TOOL
TEST_F(CliTest, ExitStatuses) {
  const std::string tool = BRIDGEVI_TOOL;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + tool + "\" " + args + " > " + (root_ / "log.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const std::string out = (root_ / "sim").string();
  EXPECT_EQ(run("--preset scenario3 --seed 3 --out " + out + " simulate --n 40"), 0);
  EXPECT_TRUE(fs::exists(root_ / "sim" / "data.csv"));
  EXPECT_NE(run("simulate --scenario nowhere --out " + out), 0);
  EXPECT_NE(run("--backend gibbs fit"), 0);
  EXPECT_NE(run("--preset scenario1 fit --data " + (root_ / "none.csv").string()), 0);
  EXPECT_EQ(run("--out " + (root_ / "b").string() + " bench --sizes 1000,1000000 --max-mib 1"), 1);
  EXPECT_NE(run(""), 0);
}
#endif
