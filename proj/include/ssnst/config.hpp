#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssnst/model.hpp"
#include "ssnst/sampler.hpp"
#include "ssnst/simulate.hpp"

namespace ssnst {

enum class PredictionMethod { automatic, separable, recursion };

/// Everything one pipeline run needs, read from a JSON file. Relative paths
/// are resolved against the directory of that file.
struct RunConfig {
  struct Paths {
    std::filesystem::path network;  // empty: Euclidean-only model
    std::filesystem::path sites;
    std::filesystem::path observations;
    std::filesystem::path prediction_sites;
    std::filesystem::path truth;
    std::filesystem::path output;
  } paths;

  std::vector<ComponentSpec> components;
  TemporalSpec temporal;
  std::vector<std::string> phi_covariates;
  DesignFormula formula;
  LikelihoodMethod method = LikelihoodMethod::var;
  Weighting weighting = Weighting::watershed_area;

  std::map<std::string, double> prior_overrides;  // PriorConfig scalar fields
  std::vector<double> alpha_max;                  // empty: data-driven default

  McmcConfig mcmc;

  struct Prediction {
    std::size_t subsample = 1000;
    std::size_t batch_size = 500;
    std::vector<double> thresholds;
    double hdi_mass = 0.95;
    PredictionMethod method = PredictionMethod::automatic;
    bool joint_noise = false;
  } prediction;

  double holdout_fraction = 0.0;
  std::optional<std::uint64_t> holdout_seed;  // defaults to seed

  std::optional<SimScenario> simulation;
  std::uint64_t seed = 1;
  std::string source_text;  // raw JSON, for the manifest hash

  /// Propagates the run seed into the MCMC configuration and checks ranges.
  void set_seed(std::uint64_t s);
  std::uint64_t effective_holdout_seed() const noexcept { return holdout_seed.value_or(seed); }
  void validate() const;
};

/// Throws ConfigInvalid on unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

PriorConfig apply_prior_overrides(PriorConfig priors, const RunConfig& config);

}  // namespace ssnst
