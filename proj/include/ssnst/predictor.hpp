#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/model.hpp"
#include "ssnst/network.hpp"
#include "ssnst/sampler.hpp"

namespace ssnst {

struct PredictionTask {
  std::vector<Site> sites;
  std::vector<Eigen::MatrixXd> X;  // per time, P x p with the fit's columns
  Eigen::MatrixXd phi_covariates;  // P x J, var_covariate only
  std::size_t subsample = 1000;
  std::size_t batch_size = 500;
  std::vector<double> thresholds;
  double hdi_mass = 0.95;
  /// Draw noise from the full conditional covariance of each batch (at most
  /// 200 sites) instead of independently per site. Results then depend on
  /// the batch partition.
  bool joint_noise = false;
  std::uint64_t seed = 1;
};

/// The fitted state kriging conditions on.
struct FittedContext {
  const ObservationPanel& panel;
  std::span<const Site> sites;  // panel row order
  const StreamNetwork* network = nullptr;  // null for Euclidean-only models
  const ParameterLayout& layout;
  std::vector<std::size_t> observed_rows;  // empty: rows with an observation
};

/// Per-draw kriging output for a set of prediction sites.
struct KrigingDraw {
  Eigen::MatrixXd mean;      // P x T
  Eigen::MatrixXd variance;  // P x T, marginal conditional variance
  Eigen::VectorXd innovation;  // per site, conditional variance of one innovation
  Eigen::VectorXd phi;         // per site autoregressive coefficient
  double kappa1 = 1.0;
};

enum class KrigingMethod { separable, recursion };

/// Simple kriging of one draw through the separable space-time precision.
/// Common-phi models only (UnsupportedCase otherwise).
KrigingDraw krige_draw(const FittedContext& ctx, const PredictionTask& task, std::span<const std::size_t> pred_idx,
                       const ModelParams& params, const Eigen::MatrixXd& y_completed);

/// Slice-by-slice kriging of VAR innovations with the prediction sites'
/// own autoregression. Rejects var_sitewise (Case2aUnsupported) and
/// var_2nn (UnsupportedCase).
KrigingDraw krige_recursion_draw(const FittedContext& ctx, const PredictionTask& task,
                                 std::span<const std::size_t> pred_idx, const ModelParams& params,
                                 const Eigen::MatrixXd& y_completed);

struct PredictionResult {
  std::vector<int> site_ids;
  std::vector<std::size_t> draw_index;  // stacked-draw index of every used draw
  std::vector<Eigen::MatrixXd> mean_draws;  // per draw, P x T kriging means
  std::vector<Eigen::MatrixXd> draws;       // per draw, P x T predictive draws
  Eigen::MatrixXd mean;   // average kriging mean
  Eigen::MatrixXd sd;     // sd of predictive draws
  Eigen::MatrixXd lower;  // HDI bounds, NaN when fewer than 50 draws
  Eigen::MatrixXd upper;
  std::vector<Eigen::MatrixXd> exceed;      // per threshold, P x T
  std::vector<Eigen::MatrixXd> proportion;  // per threshold, draws x T
};

/// The response panel with missing cells taken from stacked draw `row`.
Eigen::MatrixXd completed_panel(const ObservationPanel& panel, const PosteriorDraws& draws, Eigen::Index row);

/// Seeded subsample of stacked-draw indices, ascending.
std::vector<std::size_t> subsample_draws(std::size_t total, std::size_t wanted, std::uint64_t seed);

PredictionResult predict(const FittedContext& ctx, const PosteriorDraws& draws, const PredictionTask& task,
                         KrigingMethod method);
inline PredictionResult krige(const FittedContext& ctx, const PosteriorDraws& draws, const PredictionTask& task) {
  return predict(ctx, draws, task, KrigingMethod::separable);
}
inline PredictionResult krige_var_recursion(const FittedContext& ctx, const PosteriorDraws& draws,
                                            const PredictionTask& task) {
  return predict(ctx, draws, task, KrigingMethod::recursion);
}

/// Fraction of draws above `threshold` per cell.
Eigen::MatrixXd exceedance(std::span<const Eigen::MatrixXd> draws, double threshold);
/// Per draw and time, fraction of sites above `threshold` (draws x T).
Eigen::MatrixXd proportion_above(std::span<const Eigen::MatrixXd> draws, double threshold);
/// Shortest interval covering ceil(mass * n) sorted draws. Needs n >= 50.
std::pair<double, double> hdi(std::span<const double> sample, double mass = 0.95);

}  // namespace ssnst
