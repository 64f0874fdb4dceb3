#include "bridgevi_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bridgevi/diagnostics.hpp"
#include "bridgevi/mcmc.hpp"
#include "bridgevi/simulate.hpp"

namespace bridgevi::cli {

namespace fs = std::filesystem;

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> column_values(const CsvText& csv, const std::string& column, bool timestamp,
                                  double origin) {
  const std::size_t c = csv.column(column);
  if (!timestamp) return csv.numeric(c);
  std::vector<double> out;
  out.reserve(csv.rows.size());
  for (const auto& row : csv.rows) out.push_back(timestamp_to_hours(row[c]) - origin);
  return out;
}

Json parameter_summary(const PosteriorSamples& s) {
  Json out = Json::array();
  std::vector<double> col(static_cast<std::size_t>(s.draws.rows()));
  for (Eigen::Index c = 0; c < s.draws.cols(); ++c) {
    for (Eigen::Index r = 0; r < s.draws.rows(); ++r) col[static_cast<std::size_t>(r)] = s.draws(r, c);
    std::sort(col.begin(), col.end());
    const Eigen::VectorXd v = s.draws.col(c);
    const double mean = v.mean();
    const double sd = v.size() > 1 ? std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1))
                                   : 0.0;
    out.push_back({{"name", s.names[static_cast<std::size_t>(c)]},
                   {"mean", mean},
                   {"sd", sd},
                   {"q025", quantile_sorted(col, 0.025)},
                   {"q500", quantile_sorted(col, 0.5)},
                   {"q975", quantile_sorted(col, 0.975)}});
  }
  return out;
}

void write_draws(const fs::path& path, const PosteriorSamples& s) {
  write_csv(path, NumericTable{s.names, s.draws});
}

std::string width_padded(std::size_t i, std::size_t total) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(total).size()));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, i);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

ModelSpec single_bspline_spec(const Eigen::VectorXd& x, const BasisSpec& basis, const Hyperparameters& h) {
  ModelSpec ms;
  ms.hyper = h;
  ms.blocks.push_back({build_design({x.data(), static_cast<std::size_t>(x.size())}, basis), true});
  return ms;
}

Json truth_scenario1(const Scenario1Data& data, const RunConfig& config, const std::string& scenario,
                     std::size_t n, std::size_t replicas, double sigma2) {
  Json j;
  j["scenario"] = scenario;
  j["seed"] = config.seed;
  j["n"] = n;
  j["replicas"] = replicas;
  j["sigma2"] = sigma2;
  j["beta"] = std::vector<double>(data.beta.data(), data.beta.data() + data.beta.size());
  j["basis"] = to_json(data.basis);
  return j;
}

}  // namespace

FitArtifacts load_fit(const fs::path& dir) {
  FitArtifacts art;
  art.summary = read_json(dir / "summary.json");
  const CsvText csv = read_csv(dir / "draws.csv");
  art.samples.names = csv.header;
  art.samples.source = art.summary.value("backend", std::string{}) + ":" + dir.string();
  art.samples.draws.resize(static_cast<Eigen::Index>(csv.rows.size()),
                           static_cast<Eigen::Index>(csv.header.size()));
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    const auto v = csv.numeric(c);
    art.samples.draws.col(static_cast<Eigen::Index>(c)) = to_vector(v);
  }
  return art;
}

SparseRowMatrix design_from_summary(const Json& summary, const CsvText& csv, std::ostream& log) {
  const Json& model = summary.at("model");
  ModelSpec spec;
  spec.hyper = hyper_from_json(model.at("hyper"));
  const std::size_t n = csv.rows.size();
  for (const Json& cov : model.at("covariates")) {
    const std::string kind = cov.at("kind").get<std::string>();
    std::vector<double> x;
    if (kind == "intercept") {
      x.assign(n, 1.0);
    } else {
      const std::string column = cov.at("column").get<std::string>();
      x = column_values(csv, column, cov.at("timestamp").get<bool>(), cov.at("time_origin").get<double>());
      const auto range = cov.at("range").get<std::vector<double>>();
      const auto outside = std::count_if(x.begin(), x.end(),
                                         [&](double v) { return v < range[0] || v > range[1]; });
      if (outside > 0) {
        log << "warning: " << outside << " value(s) of '" << column << "' lie outside the training span ["
            << range[0] << ", " << range[1] << "]";
        if (kind == "bspline") log << "; their B-spline rows are zero";
        log << '\n';
      }
    }
    const BasisSpec basis = basis_from_json(cov.at("basis"));
    spec.blocks.push_back({build_design(x, basis), cov.at("penalized").get<bool>()});
  }
  return Model(std::move(spec)).design();
}

int cmd_simulate(const RunConfig& config, std::ostream& log) {
  const fs::path out(config.out);
  ensure_directory(out);
  Rng rng(config.seed);
  const std::string& scenario = config.simulate.scenario;
  if (scenario == "scenario1" || scenario == "scenario2") {
    const Scenario1Spec& spec = config.simulate.scenario1;
    const bool scaled = scenario == "scenario2";
    const Scenario1Data data = scaled ? simulate_scaled(config.simulate.scale_n, spec, rng)
                                      : simulate_scenario1(spec, rng);
    const auto n = static_cast<std::size_t>(data.x.size());
    for (std::size_t r = 0; r < data.y.size(); ++r) {
      NumericTable t{{"y", "x"}, Eigen::MatrixXd(data.x.size(), 2)};
      t.values.col(0) = data.y[r];
      t.values.col(1) = data.x;
      const fs::path file = scaled ? out / "data.csv"
                                   : out / ("replica_" + width_padded(r + 1, data.y.size()) + ".csv");
      write_csv(file, t);
    }
    NumericTable truth{{"x", "curve"}, Eigen::MatrixXd(data.x.size(), 2)};
    truth.values.col(0) = data.x;
    truth.values.col(1) = data.curve;
    write_csv(out / "truth.csv", truth);
    write_json(out / "truth.json",
               truth_scenario1(data, config, scenario, n, data.y.size(), spec.sigma2));
    log << scenario << ": wrote " << data.y.size() << " dataset(s) of " << n << " rows to " << out.string()
        << '\n';
    return 0;
  }
  if (scenario == "scenario3") {
    const Scenario3Spec& spec = config.simulate.scenario3;
    const Scenario3Data data = simulate_scenario3(spec, rng);
    const Eigen::Index n = data.y.size();
    NumericTable t{{"y", "x1", "x2"}, Eigen::MatrixXd(n, 3)};
    t.values.col(0) = data.y;
    t.values.middleCols(1, 2) = data.x;
    write_csv(out / "data.csv", t);
    NumericTable truth{{"x1", "x2", "f1", "f2", "curve"}, Eigen::MatrixXd(n, 5)};
    truth.values.leftCols(2) = data.x;
    truth.values.col(2) = data.f1;
    truth.values.col(3) = data.f2;
    truth.values.col(4) = (data.f1 + data.f2).array() + data.beta0;
    write_csv(out / "truth.csv", truth);
    write_json(out / "truth.json", Json{{"scenario", scenario},
                                        {"seed", config.seed},
                                        {"n", spec.n},
                                        {"beta0", spec.beta0},
                                        {"tau1", spec.tau1},
                                        {"tau2", spec.tau2},
                                        {"sigma2", spec.sigma2},
                                        {"x_range", {spec.x_lo, spec.x_hi}}});
    log << "scenario3: wrote " << n << " rows to " << out.string() << '\n';
    return 0;
  }
  throw std::invalid_argument("simulate: unknown scenario '" + scenario +
                              "' (scenario1, scenario2, scenario3)");
}

int cmd_fit(const RunConfig& config, std::ostream& log) {
  const CsvText csv = read_csv(config.dataset);
  if (csv.rows.empty()) throw std::invalid_argument("fit: " + config.dataset + " has no data rows");
  const std::string response = config.response.empty() ? csv.header.front() : config.response;
  const std::size_t resp_col = csv.column(response);
  std::string first_covariate;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c != resp_col) {
      first_covariate = csv.header[c];
      break;
    }
  }
  const Eigen::VectorXd y = to_vector(csv.numeric(resp_col));
  const std::size_t n = csv.rows.size();

  std::vector<std::string> notes = config.notes;
  ModelSpec spec;
  spec.hyper = config.hyper;
  Json covariates = Json::array();
  for (CovariateConfig cov : config.covariates) {
    std::vector<double> x;
    double origin = 0.0;
    if (cov.kind == "intercept") {
      cov.column.clear();
      x.assign(n, 1.0);
    } else {
      if (cov.column.empty()) {
        if (first_covariate.empty()) throw std::invalid_argument("fit: dataset has no covariate column");
        cov.column = first_covariate;
      }
      if (cov.timestamp) origin = timestamp_to_hours(csv.rows.front()[csv.column(cov.column)]);
      x = column_values(csv, cov.column, cov.timestamp, origin);
    }
    const BasisSpec basis = resolve_basis(cov, x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (basis.kind == BasisKind::bspline && cov.knots.empty()) {
      notes.push_back("covariate '" + cov.column + "': " + std::to_string(basis.knots.size()) + " knots, " +
                      std::to_string(basis.size()) + " basis functions over [" + format_number(*lo) + ", " +
                      format_number(*hi) + "]");
    }
    DesignMatrix design = build_design(x, basis);
    if (design.out_of_range_rows > 0) {
      notes.push_back("covariate '" + cov.column + "': " + std::to_string(design.out_of_range_rows) +
                      " row(s) outside the knot range have zero basis rows");
    }
    Json entry = to_json(cov);
    entry["basis"] = to_json(basis);
    entry["time_origin"] = origin;
    entry["range"] = {*lo, *hi};
    covariates.push_back(entry);
    spec.blocks.push_back({std::move(design), cov.penalized});
  }
  const Model model(std::move(spec));
  for (const auto& note : notes) log << note << '\n';

  const fs::path out(config.out);
  ensure_directory(out);
  Json summary;
  summary["backend"] = config.backend;
  summary["dataset"] = fs::absolute(config.dataset).string();
  summary["response"] = response;
  summary["n"] = n;
  summary["seed"] = config.seed;
  summary["model"] = {{"hyper", to_json(config.hyper)}, {"covariates", covariates}};
  summary["notes"] = notes;

  PosteriorSamples samples;
  bool failed = false;
  std::string message;
  if (config.backend == "advi") {
    FitConfig fc = config.advi;
    if (fc.batch_size > n) {
      log << "batch size " << fc.batch_size << " exceeds " << n << " rows; using the full data\n";
      notes.push_back("batch size reduced to the full data (" + std::to_string(n) + " rows)");
      summary["notes"] = notes;
      fc.batch_size = 0;
    }
    const FitResult result = fit(model, y, fc);
    NumericTable trace{{"iteration", "elbo", "grad_norm", "seconds"},
                       Eigen::MatrixXd(static_cast<Eigen::Index>(result.trace.size()), 4)};
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
      const auto& t = result.trace[i];
      trace.values.row(static_cast<Eigen::Index>(i)) << static_cast<double>(t.iteration), t.elbo, t.grad_norm,
          t.seconds;
    }
    write_csv(out / "trace.csv", trace);
    const Eigen::MatrixXd l = result.state.factor();
    Json factor = Json::array();
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.cols()));
      for (Eigen::Index c = 0; c < l.cols(); ++c) row[static_cast<std::size_t>(c)] = l(r, c);
      factor.push_back(row);
    }
    const auto& mean = result.state.mean();
    write_json(out / "state.json", Json{{"free_indices", model.free_indices()},
                                        {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                                        {"factor", factor}});
    summary["seconds"] = result.seconds;
    summary["advi"] = {{"iterations", config.advi.iterations},
                       {"batch_size", fc.batch_size == 0 ? n : fc.batch_size},
                       {"mc_samples", config.advi.mc_samples},
                       {"learning_rate", config.advi.learning_rate},
                       {"final_elbo", result.trace.empty() ? Json() : Json(result.trace.back().elbo)},
                       {"diverged", result.diverged}};
    if (result.diverged) {
      failed = true;
      message = result.message;
    } else {
      std::seed_seq seq{config.seed, std::uint64_t{1}};
      Rng rng(seq);
      samples = sample_posterior(model, result.state, config.draws, rng);
    }
  } else {
    try {
      const ChainOutput chain = run_chains(model, y, config.mcmc, config.chains, config.workers);
      samples = chain.samples;
      summary["seconds"] = chain.seconds;
      const auto& acc = chain.acceptance_rate;
      const auto& rw = chain.rw_variance;
      summary["mcmc"] = {{"iterations", config.mcmc.iterations},
                         {"burn_in", config.mcmc.burn_in},
                         {"thin", config.mcmc.thin},
                         {"chains", config.chains},
                         {"marginalized_alpha", config.mcmc.marginalized_alpha},
                         {"acceptance_rate", std::vector<double>(acc.data(), acc.data() + acc.size())},
                         {"rw_variance", std::vector<double>(rw.data(), rw.data() + rw.size())}};
      const auto first_hyper = static_cast<Eigen::Index>(model.layout().n_coef());
      const Eigen::Index n_hyper = samples.draws.cols() - first_hyper;
      NumericTable trace;
      trace.header.push_back("draw");
      for (Eigen::Index c = 0; c < n_hyper; ++c) {
        trace.header.push_back(samples.names[static_cast<std::size_t>(first_hyper + c)]);
      }
      trace.values.resize(samples.draws.rows(), n_hyper + 1);
      for (Eigen::Index r = 0; r < samples.draws.rows(); ++r) trace.values(r, 0) = static_cast<double>(r + 1);
      trace.values.rightCols(n_hyper) = samples.draws.rightCols(n_hyper);
      write_csv(out / "trace.csv", trace);
    } catch (const std::runtime_error& e) {
      failed = true;
      message = e.what();
    }
  }
  if (!failed && !samples.draws.allFinite()) {
    failed = true;
    message = "posterior draws contain non-finite values";
  }
  summary["failed"] = failed;
  if (failed) {
    summary["message"] = message;
    write_json(out / "summary.json", summary);
    log << "error: " << message << '\n';
    return kNumericalFailure;
  }
  samples.source = config.backend;
  summary["draws"] = samples.draws.rows();
  summary["parameters"] = parameter_summary(samples);
  write_draws(out / "draws.csv", samples);
  write_json(out / "summary.json", summary);
  log << config.backend << ": " << samples.draws.rows() << " draws of " << samples.draws.cols()
      << " parameters in " << summary["seconds"].get<double>() << " s, written to " << out.string() << '\n';
  return 0;
}

int cmd_predict(const RunConfig& config, std::ostream& log) {
  const FitArtifacts art = load_fit(config.fit_dir);
  const std::string grid = config.grid.empty() ? art.summary.at("dataset").get<std::string>() : config.grid;
  const CsvText csv = read_csv(grid);
  std::vector<std::string> columns;
  std::vector<bool> stamped;
  std::vector<double> origins;
  for (const Json& cov : art.summary.at("model").at("covariates")) {
    if (cov.at("kind").get<std::string>() == "intercept") continue;
    const std::string name = cov.at("column").get<std::string>();
    if (std::find(columns.begin(), columns.end(), name) != columns.end()) continue;
    columns.push_back(name);
    stamped.push_back(cov.at("timestamp").get<bool>());
    origins.push_back(cov.at("time_origin").get<double>());
  }
  NumericTable band_table;
  band_table.header = columns;
  for (const char* c : {"mean", "lower", "upper"}) band_table.header.emplace_back(c);
  const auto m = static_cast<Eigen::Index>(csv.rows.size());
  band_table.values.resize(m, static_cast<Eigen::Index>(band_table.header.size()));
  if (m > 0) {
    const SparseRowMatrix design = design_from_summary(art.summary, csv, log);
    const CredibleBand band = credible_band(art.samples, design, config.level);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      band_table.values.col(static_cast<Eigen::Index>(c)) =
          to_vector(column_values(csv, columns[c], stamped[c], origins[c]));
    }
    const auto k = static_cast<Eigen::Index>(columns.size());
    band_table.values.col(k) = band.mean;
    band_table.values.col(k + 1) = band.lower;
    band_table.values.col(k + 2) = band.upper;
  }
  const fs::path out(config.out);
  write_csv(out / "band.csv", band_table);
  log << "predict: " << m << " grid row(s) at level " << config.level << " written to "
      << (out / "band.csv").string() << '\n';
  return 0;
}

int cmd_compare(const RunConfig& config, std::ostream& log) {
  const FitArtifacts a = load_fit(config.fit_a);
  const FitArtifacts b = load_fit(config.fit_b);
  ComparisonReport report = compare_posteriors(a.samples, b.samples, {}, config.significance);
  if (!config.truth.empty()) {
    const CsvText csv = read_csv(config.truth);
    const Eigen::VectorXd truth = to_vector(csv.numeric(csv.column("curve")));
    const SparseRowMatrix design = design_from_summary(a.summary, csv, log);
    score_against_truth(report, a.samples, b.samples, design, truth, config.level);
  }
  auto method = [](const MethodSummary& s, const Json& summary) {
    Json j{{"label", s.label}};
    if (s.mae) j["mae"] = *s.mae;
    if (s.coverage) j["coverage"] = *s.coverage;
    if (summary.contains("seconds")) j["seconds"] = summary.at("seconds");
    return j;
  };
  Json params = Json::array();
  for (const auto& p : report.parameters) {
    params.push_back({{"name", p.name}, {"statistic", p.statistic}, {"p_value", p.p_value}});
  }
  Json j{{"test", "two-sample Kolmogorov-Smirnov, asymptotic p-values"},
         {"quantiles", "linear interpolation between order statistics"},
         {"significance", report.significance},
         {"rejection_fraction", report.rejection_fraction},
         {"first", method(report.first, a.summary)},
         {"second", method(report.second, b.summary)},
         {"parameters", params}};
  if (!config.truth.empty()) j["band_level"] = config.level;
  const fs::path out = fs::path(config.out) / "comparison.json";
  write_json(out, j);
  log << "compare: " << report.parameters.size() << " parameters, rejection fraction "
      << report.rejection_fraction << " at " << report.significance << ", written to " << out.string()
      << '\n';
  return 0;
}

int cmd_bench(const RunConfig& config, std::ostream& log) {
  const Scenario1Spec spec = config.simulate.scenario1;
  for (std::size_t n : config.bench.sizes) {
    const std::size_t need = design_bytes(n, spec);
    if (need > config.bench.max_bytes) {
      throw std::invalid_argument("bench: n = " + std::to_string(n) + " needs about " +
                                  std::to_string(need >> 20) + " MiB, above the limit of " +
                                  std::to_string(config.bench.max_bytes >> 20) + " MiB");
    }
    (void)scale_setting(n);
  }
  std::vector<TimingRow> rows;
  for (std::size_t n : config.bench.sizes) {
    const ScaleSetting setting = scale_setting(n);
    Rng rng(config.seed);
    const Scenario1Data data = simulate_scaled(n, spec, rng, config.bench.max_bytes);
    const Model model(single_bspline_spec(data.x, data.basis, config.hyper));
    const std::size_t iterations = config.bench.iterations > 0 ? config.bench.iterations : setting.iterations;
    FitConfig fc = config.advi;
    fc.batch_size = setting.batch_size;
    fc.iterations = iterations;
    fc.trace_every = 0;
    ChainConfig cc = config.mcmc;
    cc.iterations = iterations;
    cc.burn_in = iterations / 5;
    cc.thin = 1;
    std::vector<double> advi_s;
    std::vector<double> mcmc_s;
    for (std::size_t r = 0; r < config.bench.repeats; ++r) {
      const FitResult f = fit(model, data.y.front(), fc);
      if (f.diverged) {
        log << "error: ADVI diverged at n = " << n << ": " << f.message << '\n';
        return kNumericalFailure;
      }
      advi_s.push_back(f.seconds);
      try {
        mcmc_s.push_back(run_chain(model, data.y.front(), cc).seconds);
      } catch (const std::runtime_error& e) {
        log << "error: MCMC failed at n = " << n << ": " << e.what() << '\n';
        return kNumericalFailure;
      }
    }
    rows.push_back({n, median(mcmc_s), median(advi_s), iterations, setting.batch_size});
    log << "n = " << n << ": MCMC " << rows.back().mcmc_seconds << " s, ADVI " << rows.back().advi_seconds
        << " s (" << iterations << " iterations, batch " << setting.batch_size << ")\n";
  }
  const fs::path out = fs::path(config.out) / "timing.csv";
  ensure_directory(out.parent_path());
  std::ofstream os(out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + out.string());
  write_timing_report(os, rows);
  return 0;
}

}  // namespace bridgevi::cli
