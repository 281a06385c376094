#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "ssnst/error.hpp"
#include "ssnst/sampler.hpp"

namespace ssnst {

namespace {

using Chains = std::vector<Eigen::VectorXd>;

void check_chains(const Chains& chains) {
  if (chains.empty()) fail(ErrorCode::InsufficientDraws, "no chains");
  const auto n = chains.front().size();
  if (n < 4) fail(ErrorCode::InsufficientDraws, "need at least 4 draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) fail(ErrorCode::InsufficientDraws, "chains have unequal lengths");
}

Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const auto h = c.size() / 2;
    out.emplace_back(c.head(h));
    out.emplace_back(c.tail(h));
  }
  return out;
}

// Normal scores of the pooled ranks (average ranks for ties).
Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < chains[c].size(); ++i)
      pooled.emplace_back(chains[c](i), c * static_cast<std::size_t>(chains[c].size()) + static_cast<std::size_t>(i));
  std::sort(pooled.begin(), pooled.end());
  const double N = static_cast<double>(pooled.size());
  std::vector<double> score(pooled.size());
  const boost::math::normal_distribution<double> std_normal;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    const double z = boost::math::quantile(std_normal, (rank - 0.375) / (N + 0.25));
    for (std::size_t k = i; k < j; ++k) score[pooled[k].second] = z;
    i = j;
  }
  Chains out;
  std::size_t k = 0;
  for (const auto& c : chains) {
    Eigen::VectorXd v(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) v(i) = score[k++];
    out.push_back(std::move(v));
  }
  return out;
}

double variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

double rhat_raw(const Chains& chains) {
  const double n = static_cast<double>(chains.front().size());
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double W = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    W += variance(chains[c]);
  }
  W /= static_cast<double>(chains.size());
  const double B = n * variance(means);
  if (W <= 0.0) return B > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double ess_raw(const Chains& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = chains.front().size();
  const double nd = static_cast<double>(n);
  Chains centered;
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double W = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    centered.emplace_back(chains[c].array() - chains[c].mean());
    W += variance(chains[c]);
  }
  W /= m;
  const double var_plus = (nd - 1.0) / nd * W + (chains.size() > 1 ? variance(means) : 0.0);
  if (!(var_plus > 0.0)) return m * nd;

  auto acov = [&](Eigen::Index lag) {
    double s = 0.0;
    for (const auto& c : centered) s += c.head(n - lag).dot(c.tail(n - lag)) / nd;
    return s / m;
  };
  auto rho = [&](Eigen::Index lag) { return 1.0 - (W - acov(lag)) / var_plus; };

  // Geyer's initial monotone positive sequence over paired autocorrelations.
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(std::max(m * nd, 10.0)));
  return m * nd / tau;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains);
  return rhat_raw(rank_normalize(split(chains)));
}

double ess_bulk(const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains);
  return ess_raw(rank_normalize(split(chains)));
}

ParamDiagnostics diagnose_parameter(const std::string& name, const std::vector<Eigen::VectorXd>& chains) {
  check_chains(chains);
  ParamDiagnostics d;
  d.name = name;
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.size();
  Eigen::VectorXd pooled(total);
  Eigen::Index k = 0;
  for (const auto& c : chains) {
    pooled.segment(k, c.size()) = c;
    k += c.size();
  }
  d.mean = pooled.mean();
  d.sd = std::sqrt(variance(pooled));
  d.rhat = split_rhat(chains);
  d.ess_bulk = ess_bulk(chains);
  d.mcse = d.sd > 0.0 ? d.sd / std::sqrt(d.ess_bulk) : 0.0;
  return d;
}

std::vector<ParamDiagnostics> diagnostics(const PosteriorDraws& draws) {
  std::vector<ParamDiagnostics> out;
  for (std::size_t j = 0; j < draws.names.size(); ++j) {
    std::vector<Eigen::VectorXd> chains;
    for (const auto& c : draws.chains) chains.emplace_back(c.params.col(static_cast<Eigen::Index>(j)));
    out.push_back(diagnose_parameter(draws.names[j], chains));
  }
  return out;
}

}  // namespace ssnst
