#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/sampler.hpp"

namespace ssnst {

double rmspe(std::span<const double> pred, std::span<const double> truth);

/// Sample CRPS of one cell: mean |X - y| - mean over ordered pairs |X - X'| / 2.
double crps_cell(std::span<const double> draws, double truth);
/// Mean CRPS over cells; `draws` is n_draws x cells.
double crps_sample(const Eigen::MatrixXd& draws, std::span<const double> truth);

enum class CoverageCategory { consistent, borderline, inconsistent };
std::string_view to_string(CoverageCategory c) noexcept;

struct CoverageResult {
  double proportion = 0.0;
  std::size_t covered = 0;
  std::size_t n = 0;
  double p_value = 1.0;
  CoverageCategory category = CoverageCategory::consistent;
};

/// Two-sided exact binomial p-value, min(1, 2 min(P(X >= k), P(X <= k))).
double binomial_two_sided_p(std::size_t k, std::size_t n, double p);
/// p >= 0.10 consistent, 0.05 <= p < 0.10 borderline, below inconsistent.
CoverageCategory coverage_category(double p_value) noexcept;
CoverageResult coverage(std::span<const double> lower, std::span<const double> upper, std::span<const double> truth,
                        double nominal = 0.95);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  Eigen::VectorXd pointwise;  // -2 (lppd_i - p_i)
  bool degenerate = false;    // a single draw, p_waic is 0
};
/// `loglik` is draws x points.
WaicResult waic(const Eigen::MatrixXd& loglik);

struct McseRanking {
  std::vector<std::string> names;
  std::vector<double> mcse;
  std::vector<int> rank;  // 1 = smallest MCSE
  double mean_rank = 0.0;
};
/// Ranks ascending by MCSE, ties broken lexically by name.
McseRanking mcse_rank(std::span<const std::string> names, std::span<const double> mcse);
/// MCSE ranking of the regression coefficients of a fit.
McseRanking mcse_rank(const PosteriorDraws& draws);

}  // namespace ssnst
