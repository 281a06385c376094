#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/model.hpp"

namespace ssnst {

struct McmcConfig {
  int chains = 4;
  int iterations = 3000;  // including warmup
  int warmup = 1500;
  std::uint64_t seed = 20240101;
  double target_accept = 0.234;
  int thin = 1;
  double initial_scale = 0.1;  // 0 freezes every block
  double init_jitter = 0.0;    // sd of noise added to the unconstrained start
  /// Constrained values held fixed for the whole run, keyed by parameter name.
  std::map<std::string, double> fixed;
  /// Start from these parameters instead of the OLS-based initial state.
  std::optional<ModelParams> initial;

  std::string checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 500;
  bool resume = false;
  int halt_after = -1;  // stop after this many iterations (checkpoint tests)
  int threads = 0;      // 0: SSNST_THREADS or hardware concurrency

  void validate() const;
};

struct ChainDraws {
  Eigen::MatrixXd params;   // retained x P, constrained scale, layout order
  Eigen::MatrixXd imputed;  // retained x M, missing cells in panel order
  Eigen::MatrixXd loglik;   // retained x T, per-slice conditional density
  std::vector<double> acceptance;  // per block, post-warmup
  std::vector<double> scales;      // final proposal scale per block
  int completed_iterations = 0;
};

struct ParamDiagnostics {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  double mcse = 0.0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> missing_cells;
  std::vector<ChainDraws> chains;
  std::vector<ParamDiagnostics> diagnostics;
  std::vector<std::string> warnings;
  bool halted = false;

  std::size_t draws_per_chain() const noexcept {
    return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().params.rows());
  }
  Eigen::MatrixXd stacked_params() const;
  Eigen::MatrixXd stacked_imputed() const;
  Eigen::MatrixXd stacked_loglik() const;
  Eigen::Index column(const std::string& name) const;
};

/// Everything one chain needs that does not change between iterations.
struct SamplerProblem {
  const ObservationPanel& panel;
  const DistanceBundle& bundle;
  const ParameterLayout& layout;
  const PriorConfig& priors;
};

struct ChainState {
  Eigen::VectorXd theta;  // unconstrained
  Eigen::MatrixXd y;      // completed panel
};

/// OLS regression start, variance split from residuals, ranges at a quarter
/// of their bound, temporal terms at 0.5, and per-site linear interpolation
/// of missing responses.
ChainState initial_state(const SamplerProblem& problem, const McmcConfig& config, std::mt19937_64& rng);

/// Per-site linear interpolation over time with endpoints carried; sites
/// without any observation are filled with `fallback`.
Eigen::MatrixXd interpolate_missing(const ObservationPanel& panel, const Eigen::MatrixXd& fallback);

/// Mean and precision of the full conditional of slice t's residuals given
/// the neighbouring slices, before conditioning on observed entries.
struct SliceConditional {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;  // precision * mean
};
SliceConditional slice_conditional(Eigen::Index t, const Eigen::MatrixXd& resid, const ModelFactors& factors,
                                   const Eigen::MatrixXd& v_inv);

/// Conditional mean and covariance of the missing residuals of slice t.
struct MissingConditional {
  std::vector<Eigen::Index> rows;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
MissingConditional missing_conditional(Eigen::Index t, const Eigen::MatrixXd& resid, const BoolMatrix& observed,
                                       const ModelFactors& factors, const Eigen::MatrixXd& v_inv);

/// Redraws the missing entries of slice t of `y` from their exact full
/// conditional.
void impute_missing_slice(Eigen::Index t, Eigen::MatrixXd& y, const ObservationPanel& panel,
                          const Eigen::VectorXd& beta, const ModelFactors& factors, const Eigen::MatrixXd& v_inv,
                          std::mt19937_64& rng, std::normal_distribution<double>& normal);

PosteriorDraws run_mcmc(const SamplerProblem& problem, const McmcConfig& config);

// Convergence diagnostics over chains of equal length.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
double ess_bulk(const std::vector<Eigen::VectorXd>& chains);
ParamDiagnostics diagnose_parameter(const std::string& name, const std::vector<Eigen::VectorXd>& chains);
std::vector<ParamDiagnostics> diagnostics(const PosteriorDraws& draws);

}  // namespace ssnst
