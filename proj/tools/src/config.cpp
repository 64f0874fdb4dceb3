#include "bridgevi_cli/config.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace bridgevi::cli {

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void take(const Json& j, const char* key, T& target) {
  if (j.contains(key)) {
    try {
      target = j.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw std::invalid_argument(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

template <typename T>
void take(const Json& j, const char* key, std::optional<T>& target) {
  if (j.contains(key)) {
    if (j.at(key).is_null()) {
      target.reset();
    } else {
      T v{};
      take(j, key, v);
      target = v;
    }
  }
}

CovariateConfig covariate_from_json(const Json& j) {
  check_keys(j, "covariates[]", {"column", "timestamp", "kind", "penalized", "degree", "knots",
                                 "knot_spacing", "n_knots", "period", "harmonics"});
  CovariateConfig c;
  take(j, "column", c.column);
  take(j, "timestamp", c.timestamp);
  take(j, "kind", c.kind);
  take(j, "penalized", c.penalized);
  take(j, "degree", c.degree);
  take(j, "knots", c.knots);
  take(j, "knot_spacing", c.knot_spacing);
  take(j, "n_knots", c.n_knots);
  take(j, "period", c.period);
  take(j, "harmonics", c.harmonics);
  return c;
}

std::vector<double> scenario1_knots() { return scenario1_basis(Scenario1Spec{}).knots; }

CovariateConfig scenario1_covariate() {
  CovariateConfig c;
  c.column = "x";
  c.knots = scenario1_knots();
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"scenario1", "scenario2-<n>", "scenario3", "energy-weekly"};
}

void apply_preset(RunConfig& config, const std::string& name) {
  config.preset = name;
  config.hyper = Hyperparameters{};
  if (name == "scenario1") {
    config.simulate.scenario = "scenario1";
    config.covariates = {scenario1_covariate()};
    config.advi.batch_size = 0;
    config.advi.iterations = 5000;
    config.mcmc.iterations = 51000;
    config.mcmc.burn_in = 1000;
    config.mcmc.thin = 10;
    return;
  }
  if (name.starts_with("scenario2-")) {
    const std::string digits = name.substr(10);
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      const double v = std::stod(digits, &used);
      if (used != digits.size() || !(v >= 1.0)) throw std::invalid_argument("");
      n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("preset: cannot read a size from '" + name + "'");
    }
    const ScaleSetting s = scale_setting(n);
    config.simulate.scenario = "scenario2";
    config.simulate.scale_n = n;
    config.covariates = {scenario1_covariate()};
    config.advi.batch_size = s.batch_size;
    config.advi.iterations = s.iterations;
    config.mcmc.iterations = s.iterations;
    config.mcmc.burn_in = s.iterations / 5;
    config.bench.sizes = {n};
    config.bench.iterations = 0;
    return;
  }
  if (name == "scenario3") {
    config.simulate.scenario = "scenario3";
    CovariateConfig intercept;
    intercept.kind = "intercept";
    intercept.penalized = false;
    CovariateConfig x1;
    x1.column = "x1";
    x1.n_knots = 100;
    CovariateConfig x2 = x1;
    x2.column = "x2";
    config.covariates = {intercept, x1, x2};
    config.advi.batch_size = 0;
    config.advi.iterations = 5000;
    config.mcmc.iterations = 6000;
    config.mcmc.burn_in = 1000;
    return;
  }
  if (name == "energy-weekly") {
    CovariateConfig seasonal;
    seasonal.timestamp = true;
    seasonal.kind = "fourier";
    seasonal.penalized = false;
    seasonal.period = 168.0;
    seasonal.harmonics = 84;
    CovariateConfig level;
    level.timestamp = true;
    level.knot_spacing = 100.0;
    config.covariates = {seasonal, level};
    config.advi.batch_size = 10000;
    config.advi.iterations = 2000;
    config.advi.mc_samples = 100;
    config.mcmc.iterations = 2000;
    config.mcmc.burn_in = 500;
    config.notes.push_back(
        "energy-weekly: the B-spline knot count follows the data span at one knot per 100 hours; "
        "the nominal layout has 700 knots");
    return;
  }
  std::string known;
  for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
  throw std::invalid_argument("unknown preset '" + name + "' (known: " + known + ")");
}

void apply_json(RunConfig& config, const Json& j) {
  check_keys(j, "config", {"preset", "dataset", "response", "covariates", "hyper", "backend", "advi",
                           "mcmc", "chains", "draws", "out", "seed", "workers", "simulate",
                           "predict", "compare", "bench"});
  if (j.contains("preset")) apply_preset(config, j.at("preset").get<std::string>());
  take(j, "dataset", config.dataset);
  take(j, "response", config.response);
  if (j.contains("covariates")) {
    if (!j.at("covariates").is_array()) throw std::invalid_argument("config: covariates must be a list");
    config.covariates.clear();
    for (const auto& c : j.at("covariates")) config.covariates.push_back(covariate_from_json(c));
  }
  if (j.contains("hyper")) config.hyper = hyper_from_json(j.at("hyper"));
  take(j, "backend", config.backend);
  if (j.contains("advi")) {
    const Json& a = j.at("advi");
    check_keys(a, "advi", {"learning_rate", "batch_size", "mc_samples", "iterations", "optimizer",
                           "init_scale", "init_ridge", "average_fraction", "trace_every"});
    take(a, "learning_rate", config.advi.learning_rate);
    take(a, "batch_size", config.advi.batch_size);
    take(a, "mc_samples", config.advi.mc_samples);
    take(a, "iterations", config.advi.iterations);
    take(a, "init_scale", config.advi.init_scale);
    take(a, "init_ridge", config.advi.init_ridge);
    take(a, "average_fraction", config.advi.average_fraction);
    take(a, "trace_every", config.advi.trace_every);
    if (a.contains("optimizer")) {
      const auto o = a.at("optimizer").get<std::string>();
      if (o == "adam") {
        config.advi.optimizer = OptimizerKind::adam;
      } else if (o == "sgd") {
        config.advi.optimizer = OptimizerKind::sgd;
      } else {
        throw std::invalid_argument("config: optimizer must be adam or sgd");
      }
    }
  }
  if (j.contains("mcmc")) {
    const Json& m = j.at("mcmc");
    check_keys(m, "mcmc", {"iterations", "burn_in", "thin", "marginalized_alpha", "initial_rw_variance",
                           "adapt", "adapt_window", "refresh_every"});
    take(m, "iterations", config.mcmc.iterations);
    take(m, "burn_in", config.mcmc.burn_in);
    take(m, "thin", config.mcmc.thin);
    take(m, "marginalized_alpha", config.mcmc.marginalized_alpha);
    take(m, "initial_rw_variance", config.mcmc.initial_rw_variance);
    take(m, "adapt", config.mcmc.adapt);
    take(m, "adapt_window", config.mcmc.adapt_window);
    take(m, "refresh_every", config.mcmc.refresh_every);
  }
  take(j, "chains", config.chains);
  take(j, "draws", config.draws);
  take(j, "out", config.out);
  take(j, "workers", config.workers);
  if (j.contains("simulate")) {
    const Json& s = j.at("simulate");
    check_keys(s, "simulate", {"scenario", "n", "replicas", "sigma2", "scale_n", "beta0", "tau1", "tau2",
                               "x_lo", "x_hi", "jitter", "spread_is_variance"});
    take(s, "scenario", config.simulate.scenario);
    take(s, "n", config.simulate.scenario1.n);
    take(s, "replicas", config.simulate.scenario1.replicas);
    take(s, "spread_is_variance", config.simulate.scenario1.spread_is_variance);
    take(s, "scale_n", config.simulate.scale_n);
    if (s.contains("sigma2")) {
      take(s, "sigma2", config.simulate.scenario1.sigma2);
      config.simulate.scenario3.sigma2 = config.simulate.scenario1.sigma2;
    }
    if (s.contains("n") && config.simulate.scenario == "scenario3") {
      config.simulate.scenario3.n = config.simulate.scenario1.n;
    }
    take(s, "beta0", config.simulate.scenario3.beta0);
    take(s, "tau1", config.simulate.scenario3.tau1);
    take(s, "tau2", config.simulate.scenario3.tau2);
    take(s, "x_lo", config.simulate.scenario3.x_lo);
    take(s, "x_hi", config.simulate.scenario3.x_hi);
    take(s, "jitter", config.simulate.scenario3.jitter);
  }
  if (j.contains("predict")) {
    const Json& p = j.at("predict");
    check_keys(p, "predict", {"fit", "grid", "level"});
    take(p, "fit", config.fit_dir);
    take(p, "grid", config.grid);
    take(p, "level", config.level);
  }
  if (j.contains("compare")) {
    const Json& c = j.at("compare");
    check_keys(c, "compare", {"a", "b", "truth", "significance", "level"});
    take(c, "a", config.fit_a);
    take(c, "b", config.fit_b);
    take(c, "truth", config.truth);
    take(c, "significance", config.significance);
    take(c, "level", config.level);
  }
  if (j.contains("bench")) {
    const Json& b = j.at("bench");
    check_keys(b, "bench", {"sizes", "iterations", "repeats", "max_bytes"});
    take(b, "sizes", config.bench.sizes);
    take(b, "iterations", config.bench.iterations);
    take(b, "repeats", config.bench.repeats);
    take(b, "max_bytes", config.bench.max_bytes);
  }
  if (j.contains("seed")) apply_seed(config, j.at("seed").get<std::uint64_t>());
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.advi.seed = seed;
  config.mcmc.seed = seed;
}

void validate(const RunConfig& config) {
  if (config.backend != "advi" && config.backend != "mcmc") {
    throw std::invalid_argument("backend must be advi or mcmc, got '" + config.backend + "'");
  }
  if (config.workers == 0) throw std::invalid_argument("workers must be >= 1");
  const std::string& cmd = config.command;
  if (cmd == "fit") {
    if (config.dataset.empty()) throw std::invalid_argument("fit: no dataset given");
    if (config.covariates.empty()) throw std::invalid_argument("fit: no covariates configured");
    if (config.draws == 0) throw std::invalid_argument("fit: draws must be >= 1");
    if (config.chains == 0) throw std::invalid_argument("fit: chains must be >= 1");
  } else if (cmd == "predict") {
    if (config.fit_dir.empty()) throw std::invalid_argument("predict: no fit directory given");
  } else if (cmd == "compare") {
    if (config.fit_a.empty() || config.fit_b.empty()) {
      throw std::invalid_argument("compare: two fit directories are required");
    }
  } else if (cmd == "bench") {
    if (config.bench.sizes.empty()) throw std::invalid_argument("bench: no sizes configured");
    if (config.bench.repeats == 0) throw std::invalid_argument("bench: repeats must be >= 1");
  }
  if (!(config.level >= 0.0 && config.level < 1.0)) throw std::invalid_argument("level must lie in [0, 1)");
  if (!(config.significance > 0.0 && config.significance < 1.0)) {
    throw std::invalid_argument("significance must lie in (0, 1)");
  }
}

BasisSpec resolve_basis(const CovariateConfig& cov, std::span<const double> x) {
  if (cov.kind == "intercept" || cov.kind == "identity") return BasisSpec::identity();
  if (cov.kind == "fourier") return BasisSpec::fourier(cov.period, cov.harmonics);
  if (cov.kind != "bspline") throw std::invalid_argument("unknown covariate kind '" + cov.kind + "'");
  if (!cov.knots.empty()) return BasisSpec::bspline(cov.knots, cov.degree);
  if (x.empty()) throw std::invalid_argument("bspline covariate '" + cov.column + "' has no data");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(lo < hi)) throw std::invalid_argument("bspline covariate '" + cov.column + "' is constant");
  if (cov.knot_spacing) return bspline_covering(lo, hi, *cov.knot_spacing, cov.degree);
  if (cov.n_knots) return bspline_with_knot_count(lo, hi, *cov.n_knots, cov.degree);
  throw std::invalid_argument("bspline covariate '" + cov.column +
                              "' needs knots, knot_spacing or n_knots");
}

Json to_json(const CovariateConfig& cov) {
  Json j;
  j["column"] = cov.column;
  j["timestamp"] = cov.timestamp;
  j["kind"] = cov.kind;
  j["penalized"] = cov.penalized;
  return j;
}

Json to_json(const BasisSpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind == BasisKind::bspline) {
    j["degree"] = spec.degree;
    j["knots"] = spec.knots;
  } else if (spec.kind == BasisKind::fourier) {
    j["period"] = spec.period;
    j["harmonics"] = spec.n_harmonics;
  }
  return j;
}

BasisSpec basis_from_json(const Json& j) {
  const BasisKind kind = basis_kind_from_string(j.at("kind").get<std::string>());
  switch (kind) {
    case BasisKind::bspline:
      return BasisSpec::bspline(j.at("knots").get<std::vector<double>>(), j.at("degree").get<int>());
    case BasisKind::fourier:
      return BasisSpec::fourier(j.at("period").get<double>(), j.at("harmonics").get<int>());
    case BasisKind::identity:
      break;
  }
  return BasisSpec::identity();
}

Json to_json(const Hyperparameters& h) {
  return Json{{"a_phi", h.a_phi},       {"b_phi", h.b_phi}, {"a_lambda", h.a_lambda},
              {"b_lambda", h.b_lambda}, {"a_eta", h.a_eta}, {"b_eta", h.b_eta},
              {"alpha_max", h.alpha_max}};
}

Hyperparameters hyper_from_json(const Json& j) {
  check_keys(j, "hyper", {"a_phi", "b_phi", "a_lambda", "b_lambda", "a_eta", "b_eta", "alpha_max"});
  Hyperparameters h;
  take(j, "a_phi", h.a_phi);
  take(j, "b_phi", h.b_phi);
  take(j, "a_lambda", h.a_lambda);
  take(j, "b_lambda", h.b_lambda);
  take(j, "a_eta", h.a_eta);
  take(j, "b_eta", h.b_eta);
  take(j, "alpha_max", h.alpha_max);
  return h;
}

}  // namespace bridgevi::cli
