#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bridgevi_cli/commands.hpp"
#include "bridgevi_cli/config.hpp"

using namespace bridgevi::cli;

int main(int argc, char** argv) {
  CLI::App app{"Bayesian bridge regression on B-spline bases with ADVI and MCMC backends"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::string> backend;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "scenario1, scenario2-<n>, scenario3 or energy-weekly");
  app.add_option("--seed", seed, "random seed for simulation and both backends");
  app.add_option("--out", out, "output directory");
  app.add_option("--workers", workers, "threads for independent chains")->check(CLI::PositiveNumber);
  app.add_option("--backend", backend, "advi or mcmc")->check(CLI::IsMember({"advi", "mcmc"}));

  std::optional<std::string> scenario;
  std::optional<std::size_t> sim_n;
  std::optional<std::size_t> replicas;
  auto* simulate = app.add_subcommand("simulate", "write simulated datasets and their truth");
  simulate->add_option("--scenario", scenario, "scenario1, scenario2 or scenario3");
  simulate->add_option("--n", sim_n, "rows per dataset");
  simulate->add_option("--replicas", replicas, "scenario1 replicas");

  std::optional<std::string> data;
  std::optional<std::string> response;
  std::optional<std::size_t> draws;
  std::optional<std::size_t> chains;
  std::optional<std::size_t> iterations;
  auto* fit = app.add_subcommand("fit", "fit a dataset with one backend");
  fit->add_option("--data", data, "CSV with a header; first column is the response")->check(CLI::ExistingFile);
  fit->add_option("--response", response, "response column name");
  fit->add_option("--draws", draws, "posterior draws from the variational approximation");
  fit->add_option("--chains", chains, "independent MCMC chains");
  fit->add_option("--iterations", iterations, "ADVI iterations or MCMC sweeps");

  std::optional<std::string> fit_dir;
  std::optional<std::string> grid;
  std::optional<double> level;
  auto* predict = app.add_subcommand("predict", "credible band of the mean response on a grid");
  predict->add_option("--fit", fit_dir, "directory written by fit")->check(CLI::ExistingDirectory);
  predict->add_option("--grid", grid, "CSV of covariate values (default: training data)")
      ->check(CLI::ExistingFile);
  predict->add_option("--level", level, "band level in [0, 1)");

  std::optional<std::string> fit_a;
  std::optional<std::string> fit_b;
  std::optional<std::string> truth;
  std::optional<double> significance;
  auto* compare = app.add_subcommand("compare", "KS comparison of two fits, optionally against a truth");
  compare->add_option("--a", fit_a, "first fit directory")->check(CLI::ExistingDirectory);
  compare->add_option("--b", fit_b, "second fit directory")->check(CLI::ExistingDirectory);
  compare->add_option("--truth", truth, "CSV with covariate columns and a 'curve' column")
      ->check(CLI::ExistingFile);
  compare->add_option("--significance", significance, "per-parameter test level");
  compare->add_option("--level", level, "band level for coverage");

  std::optional<std::vector<std::size_t>> sizes;
  std::optional<std::size_t> bench_iterations;
  std::optional<std::size_t> repeats;
  std::optional<std::size_t> max_mib;
  auto* bench = app.add_subcommand("bench", "time both backends on simulated data of growing size");
  bench->add_option("--sizes", sizes, "numbers of rows")->delimiter(',');
  bench->add_option("--iterations", bench_iterations, "iterations for both backends (0: size table)");
  bench->add_option("--repeats", repeats, "runs per size; the median is reported");
  bench->add_option("--max-mib", max_mib, "memory guard for the simulated design");

  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  int status = 0;
  try {
    config.command = app.get_subcommands().front()->get_name();
    if (!preset.empty()) apply_preset(config, preset);
    if (!config_path.empty()) apply_json(config, read_json(config_path));
    if (seed) apply_seed(config, *seed);
    if (out) config.out = *out;
    if (workers) config.workers = *workers;
    if (backend) config.backend = *backend;
    if (scenario) config.simulate.scenario = *scenario;
    if (sim_n) {
      config.simulate.scenario1.n = *sim_n;
      config.simulate.scenario3.n = *sim_n;
      config.simulate.scale_n = *sim_n;
    }
    if (replicas) config.simulate.scenario1.replicas = *replicas;
    if (data) config.dataset = *data;
    if (response) config.response = *response;
    if (draws) config.draws = *draws;
    if (chains) config.chains = *chains;
    if (iterations) {
      config.advi.iterations = *iterations;
      config.mcmc.iterations = *iterations;
      config.mcmc.burn_in = std::min(config.mcmc.burn_in, *iterations / 2);
    }
    if (fit_dir) config.fit_dir = *fit_dir;
    if (grid) config.grid = *grid;
    if (level) config.level = *level;
    if (fit_a) config.fit_a = *fit_a;
    if (fit_b) config.fit_b = *fit_b;
    if (truth) config.truth = *truth;
    if (significance) config.significance = *significance;
    if (sizes) config.bench.sizes = *sizes;
    if (bench_iterations) config.bench.iterations = *bench_iterations;
    if (repeats) config.bench.repeats = *repeats;
    if (max_mib) config.bench.max_bytes = *max_mib << 20;
    validate(config);

    const std::string& cmd = config.command;
    if (cmd == "simulate") {
      status = cmd_simulate(config, std::cerr);
    } else if (cmd == "fit") {
      status = cmd_fit(config, std::cerr);
    } else if (cmd == "predict") {
      status = cmd_predict(config, std::cerr);
    } else if (cmd == "compare") {
      status = cmd_compare(config, std::cerr);
    } else {
      status = cmd_bench(config, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return status;
}
