#include "ssnst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>

#include "ssnst/error.hpp"

namespace ssnst {

double rmspe(std::span<const double> pred, std::span<const double> truth) {
  if (pred.empty()) fail(ErrorCode::EmptyHoldout, "no held-out cells to score");
  if (pred.size() != truth.size()) fail(ErrorCode::DimensionMismatch, "prediction and truth lengths differ");
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) ss += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

double crps_cell(std::span<const double> draws, double truth) {
  const auto n = draws.size();
  if (n < 2) fail(ErrorCode::TooFewDraws, "CRPS needs at least two draws per cell");
  const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
  // A degenerate ensemble is a point forecast: CRPS is its absolute error.
  if (*lo == *hi) return std::abs(*lo - truth);
  double abs_err = 0.0;
  for (double x : draws) abs_err += std::abs(x - truth);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) spread += std::abs(draws[i] - draws[j]);
  const double nd = static_cast<double>(n);
  return abs_err / nd - 0.5 * spread / (nd * (nd - 1.0));
}

double crps_sample(const Eigen::MatrixXd& draws, std::span<const double> truth) {
  if (truth.empty()) fail(ErrorCode::EmptyHoldout, "no held-out cells to score");
  if (static_cast<std::size_t>(draws.cols()) != truth.size())
    fail(ErrorCode::DimensionMismatch, "draw matrix must have one column per cell");
  double total = 0.0;
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    Eigen::Map<Eigen::VectorXd>(col.data(), draws.rows()) = draws.col(c);
    total += crps_cell(col, truth[static_cast<std::size_t>(c)]);
  }
  return total / static_cast<double>(truth.size());
}

std::string_view to_string(CoverageCategory c) noexcept {
  switch (c) {
    case CoverageCategory::consistent: return "consistent";
    case CoverageCategory::borderline: return "borderline";
    case CoverageCategory::inconsistent: return "inconsistent";
  }
  return "?";
}

double binomial_two_sided_p(std::size_t k, std::size_t n, double p) {
  if (n == 0) fail(ErrorCode::EmptyHoldout, "binomial test on zero trials");
  if (k > n) fail(ErrorCode::DimensionMismatch, "more successes than trials");
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  const double kd = static_cast<double>(k);
  const double le = boost::math::cdf(dist, kd);
  const double ge = k == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, kd - 1.0));
  return std::min(1.0, 2.0 * std::min(le, ge));
}

CoverageCategory coverage_category(double p_value) noexcept {
  if (p_value >= 0.10) return CoverageCategory::consistent;
  if (p_value >= 0.05) return CoverageCategory::borderline;
  return CoverageCategory::inconsistent;
}

CoverageResult coverage(std::span<const double> lower, std::span<const double> upper, std::span<const double> truth,
                        double nominal) {
  if (truth.empty()) fail(ErrorCode::EmptyHoldout, "no held-out cells to score");
  if (lower.size() != truth.size() || upper.size() != truth.size())
    fail(ErrorCode::DimensionMismatch, "interval and truth lengths differ");
  if (!(nominal > 0.0 && nominal < 1.0)) fail(ErrorCode::ConfigInvalid, "nominal coverage must lie in (0, 1)");
  CoverageResult r;
  r.n = truth.size();
  for (std::size_t i = 0; i < r.n; ++i)
    if (truth[i] >= lower[i] && truth[i] <= upper[i]) ++r.covered;
  r.proportion = static_cast<double>(r.covered) / static_cast<double>(r.n);
  r.p_value = binomial_two_sided_p(r.covered, r.n, nominal);
  r.category = coverage_category(r.p_value);
  return r;
}

WaicResult waic(const Eigen::MatrixXd& loglik) {
  if (loglik.rows() == 0 || loglik.cols() == 0) fail(ErrorCode::InsufficientDraws, "empty log-likelihood matrix");
  const double n = static_cast<double>(loglik.rows());
  WaicResult r;
  r.degenerate = loglik.rows() == 1;
  r.pointwise.resize(loglik.cols());
  for (Eigen::Index i = 0; i < loglik.cols(); ++i) {
    const auto col = loglik.col(i).array();
    const double mx = col.maxCoeff();
    const double lppd_i = mx + std::log((col - mx).exp().sum()) - std::log(n);
    const double mean = col.mean();
    const double p_i = (col - mean).square().sum() / n;
    r.lppd += lppd_i;
    r.p_waic += p_i;
    r.pointwise(i) = -2.0 * (lppd_i - p_i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

McseRanking mcse_rank(std::span<const std::string> names, std::span<const double> mcse) {
  if (names.size() != mcse.size()) fail(ErrorCode::DimensionMismatch, "one MCSE per name is required");
  McseRanking r;
  r.names.assign(names.begin(), names.end());
  r.mcse.assign(mcse.begin(), mcse.end());
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mcse[a] != mcse[b]) return mcse[a] < mcse[b];
    return names[a] < names[b];
  });
  r.rank.assign(names.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) r.rank[order[i]] = static_cast<int>(i + 1);
  if (!r.rank.empty())
    r.mean_rank = std::accumulate(r.rank.begin(), r.rank.end(), 0.0) / static_cast<double>(r.rank.size());
  return r;
}

McseRanking mcse_rank(const PosteriorDraws& draws) {
  const auto diag = draws.diagnostics.empty() ? diagnostics(draws) : draws.diagnostics;
  std::vector<std::string> names;
  std::vector<double> mcse;
  for (const auto& d : diag)
    if (d.name.rfind("beta[", 0) == 0) {
      names.push_back(d.name);
      mcse.push_back(d.mcse);
    }
  return mcse_rank(names, mcse);
}

}  // namespace ssnst
