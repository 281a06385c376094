#include "ssnst/config.hpp"

#include <set>

#include <json.hpp>

#include "ssnst/error.hpp"
#include "ssnst/io.hpp"

namespace ssnst {

namespace {

using json = nlohmann::json;

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, where + " must be an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.contains(k)) fail(ErrorCode::ConfigInvalid, "unknown key '" + k + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigInvalid, where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base) {
  std::string s;
  get(j, key, s, "paths");
  if (s.empty()) return {};
  const std::filesystem::path p(s);
  return p.is_absolute() ? p : base / p;
}

Weighting parse_weighting(std::string_view s) {
  if (s == "watershed_area") return Weighting::watershed_area;
  if (s == "equal") return Weighting::equal;
  fail(ErrorCode::ConfigInvalid, "unknown weighting '" + std::string(s) + "'");
}

TemporalSpec parse_temporal(const json& j, const std::string& where, std::vector<std::string>* phi_cov) {
  allow_keys(j, where, {"case", "link", "neighbor_mode", "sitewise_prior", "phi_covariates"});
  TemporalSpec t;
  std::string s;
  if (get(j, "case", s, where), !s.empty()) t.kind = parse_temporal_case(s);
  s.clear();
  if (get(j, "link", s, where), !s.empty()) t.link = parse_link(s);
  s.clear();
  if (get(j, "neighbor_mode", s, where), !s.empty()) t.neighbor_mode = parse_neighbor_mode(s);
  s.clear();
  if (get(j, "sitewise_prior", s, where), !s.empty()) t.sitewise_prior = parse_sitewise_prior(s);
  if (phi_cov) get(j, "phi_covariates", *phi_cov, where);
  return t;
}

SimScenario parse_simulation(const json& j, const std::filesystem::path& base) {
  const std::string where = "simulation";
  allow_keys(j, where,
             {"topology", "network", "sites", "segments", "n_sites", "grid_side", "grid_extent", "weighting",
              "covariance", "temporal", "temporal_params", "phi_covariates", "beta", "T", "missing"});
  SimScenario sc;
  std::string s;
  if (get(j, "topology", s, where), !s.empty()) sc.topology = parse_topology(s);
  sc.network_path = resolve(j, "network", base).string();
  sc.sites_path = resolve(j, "sites", base).string();
  get(j, "segments", sc.segments, where);
  get(j, "n_sites", sc.sites, where);
  get(j, "grid_side", sc.grid_side, where);
  get(j, "grid_extent", sc.grid_extent, where);
  s.clear();
  if (get(j, "weighting", s, where), !s.empty()) sc.weighting = parse_weighting(s);
  if (j.contains("covariance")) {
    const auto& c = j.at("covariance");
    allow_keys(c, "simulation.covariance", {"components", "nugget"});
    get(c, "nugget", sc.covariance.nugget, "simulation.covariance");
    if (c.contains("components"))
      for (const auto& comp : c.at("components")) {
        allow_keys(comp, "simulation.covariance.components", {"family", "form", "sigma2", "alpha"});
        SpatialComponent sp;
        std::string f;
        get(comp, "family", f, "component");
        sp.family = parse_family(f);
        f.clear();
        get(comp, "form", f, "component");
        if (!f.empty()) sp.form = parse_form(f);
        get(comp, "sigma2", sp.sigma2, "component");
        get(comp, "alpha", sp.alpha, "component");
        if (!is_legal(sp.family, sp.form)) fail(ErrorCode::InvalidForm, "illegal family/form pair in simulation");
        if (sp.sigma2 < 0.0 || !(sp.alpha > 0.0)) fail(ErrorCode::ConfigInvalid, "simulation sills and ranges");
        sc.covariance.components.push_back(sp);
      }
    if (sc.covariance.nugget < 0.0) fail(ErrorCode::ConfigInvalid, "simulation nugget must be non-negative");
  }
  if (j.contains("temporal")) sc.temporal = parse_temporal(j.at("temporal"), "simulation.temporal", nullptr);
  get(j, "temporal_params", sc.temporal_params, where);
  get(j, "phi_covariates", sc.phi_covariates, where);
  get(j, "beta", sc.beta, where);
  get(j, "T", sc.T, where);
  if (j.contains("missing")) {
    const auto& m = j.at("missing");
    allow_keys(m, "simulation.missing", {"random_fraction", "block_sites"});
    get(m, "random_fraction", sc.missing.random_fraction, "simulation.missing");
    get(m, "block_sites", sc.missing.block_sites, "simulation.missing");
  }
  return sc;
}

const std::set<std::string>& prior_keys() {
  static const std::set<std::string> keys{"beta_sd",     "sigma0_max", "sigma_max",     "phi_mean",
                                          "phi_sd",      "mu_phi_mean", "mu_phi_sd",    "sigma_phi_max",
                                          "gamma_sd"};
  return keys;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  mcmc.seed = s;
}

void RunConfig::validate() const {
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 0.5))
    fail(ErrorCode::ConfigInvalid, "holdout fraction must lie in [0, 0.5]");
  if (prediction.subsample == 0 || prediction.batch_size == 0)
    fail(ErrorCode::ConfigInvalid, "prediction subsample and batch size must be positive");
  if (!(prediction.hdi_mass > 0.0 && prediction.hdi_mass < 1.0))
    fail(ErrorCode::ConfigInvalid, "hdi mass must lie in (0, 1)");
  for (const auto& c : components)
    if (!is_legal(c.family, c.form))
      fail(ErrorCode::InvalidForm,
           std::string(to_string(c.form)) + " is not defined for " + std::string(to_string(c.family)));
  mcmc.validate();
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  allow_keys(j, "config", {"seed", "paths", "model", "priors", "mcmc", "prediction", "holdout", "simulation"});
  RunConfig c;
  c.source_text = text;
  std::uint64_t seed = 1;
  get(j, "seed", seed, "config");

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    allow_keys(p, "paths", {"network", "sites", "observations", "prediction_sites", "truth", "output"});
    c.paths.network = resolve(p, "network", base);
    c.paths.sites = resolve(p, "sites", base);
    c.paths.observations = resolve(p, "observations", base);
    c.paths.prediction_sites = resolve(p, "prediction_sites", base);
    c.paths.truth = resolve(p, "truth", base);
    c.paths.output = resolve(p, "output", base);
  }
  if (c.paths.output.empty()) c.paths.output = base / "out";

  if (j.contains("model")) {
    const auto& m = j.at("model");
    allow_keys(m, "model", {"components", "temporal", "formula", "standardize", "method", "weighting"});
    if (m.contains("components"))
      for (const auto& comp : m.at("components")) {
        allow_keys(comp, "model.components", {"family", "form"});
        ComponentSpec cs;
        std::string f;
        get(comp, "family", f, "model.components");
        cs.family = parse_family(f);
        f.clear();
        get(comp, "form", f, "model.components");
        if (!f.empty()) cs.form = parse_form(f);
        c.components.push_back(cs);
      }
    if (m.contains("temporal")) c.temporal = parse_temporal(m.at("temporal"), "model.temporal", &c.phi_covariates);
    get(m, "formula", c.formula.terms, "model");
    get(m, "standardize", c.formula.standardize, "model");
    std::string s;
    if (get(m, "method", s, "model"), !s.empty()) {
      if (s == "var")
        c.method = LikelihoodMethod::var;
      else if (s == "separable")
        c.method = LikelihoodMethod::separable;
      else
        fail(ErrorCode::ConfigInvalid, "unknown likelihood method '" + s + "'");
    }
    s.clear();
    if (get(m, "weighting", s, "model"), !s.empty()) c.weighting = parse_weighting(s);
  }
  if (c.components.empty()) fail(ErrorCode::ConfigInvalid, "model.components must list at least one component");

  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    if (!p.is_object()) fail(ErrorCode::ConfigInvalid, "priors must be an object");
    for (const auto& [k, v] : p.items()) {
      if (k == "alpha_max") {
        get(p, "alpha_max", c.alpha_max, "priors");
      } else if (prior_keys().contains(k)) {
        if (!v.is_number()) fail(ErrorCode::ConfigInvalid, "priors." + k + " must be a number");
        c.prior_overrides[k] = v.get<double>();
      } else {
        fail(ErrorCode::ConfigInvalid, "unknown key '" + k + "' in priors");
      }
    }
  }

  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    allow_keys(m, "mcmc",
               {"chains", "iterations", "warmup", "target_accept", "thin", "initial_scale", "init_jitter", "fixed",
                "checkpoint_every", "threads"});
    get(m, "chains", c.mcmc.chains, "mcmc");
    get(m, "iterations", c.mcmc.iterations, "mcmc");
    get(m, "warmup", c.mcmc.warmup, "mcmc");
    get(m, "target_accept", c.mcmc.target_accept, "mcmc");
    get(m, "thin", c.mcmc.thin, "mcmc");
    get(m, "initial_scale", c.mcmc.initial_scale, "mcmc");
    get(m, "init_jitter", c.mcmc.init_jitter, "mcmc");
    get(m, "fixed", c.mcmc.fixed, "mcmc");
    get(m, "checkpoint_every", c.mcmc.checkpoint_every, "mcmc");
    get(m, "threads", c.mcmc.threads, "mcmc");
  }

  if (j.contains("prediction")) {
    const auto& p = j.at("prediction");
    allow_keys(p, "prediction", {"subsample", "batch_size", "thresholds", "hdi_mass", "method", "joint_noise"});
    get(p, "subsample", c.prediction.subsample, "prediction");
    get(p, "batch_size", c.prediction.batch_size, "prediction");
    get(p, "thresholds", c.prediction.thresholds, "prediction");
    get(p, "hdi_mass", c.prediction.hdi_mass, "prediction");
    get(p, "joint_noise", c.prediction.joint_noise, "prediction");
    std::string s;
    if (get(p, "method", s, "prediction"), !s.empty()) {
      if (s == "auto")
        c.prediction.method = PredictionMethod::automatic;
      else if (s == "separable")
        c.prediction.method = PredictionMethod::separable;
      else if (s == "recursion")
        c.prediction.method = PredictionMethod::recursion;
      else
        fail(ErrorCode::ConfigInvalid, "unknown prediction method '" + s + "'");
    }
  }

  if (j.contains("holdout")) {
    const auto& h = j.at("holdout");
    allow_keys(h, "holdout", {"fraction", "seed"});
    get(h, "fraction", c.holdout_fraction, "holdout");
    if (h.contains("seed") && !h.at("seed").is_null()) {
      std::uint64_t s = 0;
      get(h, "seed", s, "holdout");
      c.holdout_seed = s;
    }
  }

  if (j.contains("simulation")) c.simulation = parse_simulation(j.at("simulation"), base);

  c.set_seed(seed);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "config file not found: " + path.string());
  return parse_config(read_text(path.string()), path.parent_path());
}

PriorConfig apply_prior_overrides(PriorConfig priors, const RunConfig& config) {
  for (const auto& [k, v] : config.prior_overrides) {
    if (k == "beta_sd") priors.beta_sd = v;
    else if (k == "sigma0_max") priors.sigma0_max = v;
    else if (k == "sigma_max") priors.sigma_max = v;
    else if (k == "phi_mean") priors.phi_mean = v;
    else if (k == "phi_sd") priors.phi_sd = v;
    else if (k == "mu_phi_mean") priors.mu_phi_mean = v;
    else if (k == "mu_phi_sd") priors.mu_phi_sd = v;
    else if (k == "sigma_phi_max") priors.sigma_phi_max = v;
    else if (k == "gamma_sd") priors.gamma_sd = v;
  }
  if (!config.alpha_max.empty()) {
    if (config.alpha_max.size() != priors.alpha_max.size())
      fail(ErrorCode::ConfigInvalid, "priors.alpha_max needs one bound per component");
    priors.alpha_max = config.alpha_max;
  }
  return priors;
}

}  // namespace ssnst
