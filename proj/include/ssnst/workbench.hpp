#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/config.hpp"
#include "ssnst/io.hpp"
#include "ssnst/metrics.hpp"
#include "ssnst/predictor.hpp"
#include "ssnst/sampler.hpp"

namespace ssnst {

/// Validated inputs of one run: network, sites in panel order, the training
/// panel (split hold-out cells marked missing) and the model built on it.
/// Hands out references into itself, so keep it in place once built.
struct Workspace {
  RunConfig config;
  std::optional<StreamNetwork> network;
  std::vector<Site> sites;
  ObservationTable table;  // every observation, panel row order
  BoolMatrix heldout;      // observed cells withheld from the fit
  ObservationPanel panel;
  Design design;
  ModelSpec spec;
  DistanceBundle bundle;
  PriorConfig priors;
  std::optional<ParameterLayout> layout;
  std::optional<PredictionSites> prediction_sites;

  SamplerProblem problem() const { return {panel, bundle, *layout, priors}; }
  FittedContext context() const { return {panel, sites, network ? &*network : nullptr, *layout, {}}; }
};

Workspace make_workspace(const RunConfig& config, std::vector<Segment> segments, std::vector<Site> sites,
                         ObservationTable table, std::optional<PredictionSites> prediction_sites);
/// Reads the files named in the configuration.
Workspace load_workspace(const RunConfig& config);

/// Writes the scenario to the configured input paths (network only for
/// tree topologies, prediction sites only when sites are held out).
SimResult run_simulation(const RunConfig& config);

struct TruthRecord {
  std::map<std::pair<int, int>, double> y;  // (site_id, t)
  std::vector<std::pair<int, int>> heldout;  // cells of fully held-out sites
};
void write_truth_csv(const std::string& path, const SimResult& sim);
TruthRecord read_truth_csv(const std::string& path);

PosteriorDraws run_fit(const Workspace& ws);
void write_fit(const Workspace& ws, const PosteriorDraws& draws, const std::filesystem::path& outdir);
/// Rebuilds the draws written by write_fit; diagnostics are recomputed.
PosteriorDraws read_fit(const Workspace& ws, const std::filesystem::path& outdir);
void write_diagnostics_csv(const std::string& path, std::span<const ParamDiagnostics> diags);
std::string format_diagnostics_table(std::span<const ParamDiagnostics> diags);

PredictionTask prediction_task(const Workspace& ws);
KrigingMethod kriging_method(const Workspace& ws);
PredictionResult run_prediction(const Workspace& ws, const PosteriorDraws& draws);
void write_predictions(const Workspace& ws, const PredictionResult& pred, const std::filesystem::path& outdir);
/// Rebuilds the per-draw predictive draws and summary columns.
PredictionResult read_predictions(const Workspace& ws, const std::filesystem::path& outdir);

/// Scored cells of one prediction method.
struct ScoredCells {
  std::vector<int> site_ids;
  std::vector<int> times;
  std::vector<double> truth;
  std::vector<double> mean;
  std::vector<double> lower;  // NaN without enough draws
  std::vector<double> upper;
  Eigen::MatrixXd draws;  // draws x cells
};

/// Imputation scores every cell missing from the training panel whose truth
/// is known: split hold-out cells and the recorded held-out series.
ScoredCells imputation_cells(const Workspace& ws, const PosteriorDraws& draws, const TruthRecord* truth);
ScoredCells kriging_cells(const Workspace& ws, const PredictionResult& pred, const TruthRecord* truth);

struct MethodScores {
  double rmspe = 0.0;
  double crps = 0.0;
  std::optional<CoverageResult> coverage;
  std::size_t cells = 0;
};
MethodScores score(const ScoredCells& cells, double nominal);

/// metrics.json content: rmspe, crps, coverage, waic, se_rank and a kriging
/// section when predictions are given.
std::string evaluation_json(const Workspace& ws, const PosteriorDraws& draws, const PredictionResult* pred,
                            const TruthRecord* truth);

// Plot-ready tables.
void write_predicted_vs_observed_csv(const std::string& path, std::span<const std::pair<std::string, ScoredCells>> sets);
void write_exceedance_csv(const std::string& path, const PredictionResult& pred, std::span<const int> times,
                          std::span<const double> thresholds);
/// One row per (draw, time, threshold). length_above_km is the proportion
/// times the network length, empty without a network.
void write_proportion_above_csv(const std::string& path, const PredictionResult& pred, std::span<const int> times,
                                std::span<const double> thresholds, std::optional<double> network_length_m);
double length_above_km(double proportion, double network_length_m) noexcept;
void write_posterior_hist_csv(const std::string& path, const PosteriorDraws& draws, int bins = 30);

struct PlotInputs {
  const PosteriorDraws* draws = nullptr;
  const PredictionResult* prediction = nullptr;
  std::vector<std::pair<std::string, ScoredCells>> scored;
  std::vector<int> times;
  std::vector<double> thresholds;
  std::optional<double> network_length_m;
};
/// Writes every table whose inputs are present.
void emit_plot_tables(const PlotInputs& in, const std::filesystem::path& outdir);

}  // namespace ssnst
