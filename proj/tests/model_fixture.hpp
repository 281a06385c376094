#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ssnst/model.hpp"

namespace fixture {

// Euclidean sites in a 2 x 2 square, random covariates, one exponential
// component.
struct Instance {
  std::vector<ssnst::Site> sites;
  ssnst::DistanceBundle bundle;
  ssnst::ObservationPanel panel;
  ssnst::ModelSpec spec;
  ssnst::PriorConfig priors;
};

inline Instance make_instance(int S, int T, int p, std::mt19937_64& rng,
                              ssnst::TemporalCase kind = ssnst::TemporalCase::ar) {
  using namespace ssnst;
  Instance in;
  std::uniform_real_distribution<double> xy(0.0, 2.0);
  std::normal_distribution<double> z;
  for (int s = 0; s < S; ++s) in.sites.push_back({s + 1, 1, 0.0, xy(rng), xy(rng)});
  in.bundle = make_euclidean_bundle(in.sites, in.sites);
  auto& P = in.panel;
  for (int s = 0; s < S; ++s) P.site_ids.push_back(s + 1);
  for (int t = 0; t < T; ++t) P.times.push_back(t + 1);
  P.y.resize(S, T);
  P.observed = BoolMatrix::Constant(S, T, true);
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd X(S, p);
    X.col(0).setOnes();
    for (int j = 1; j < p; ++j)
      for (int s = 0; s < S; ++s) X(s, j) = z(rng);
    P.X.push_back(X);
    for (int s = 0; s < S; ++s) P.y(s, t) = z(rng);
  }
  for (int j = 0; j < p; ++j) P.covariate_names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
  in.spec.components = {{Family::euclidean, Form::exponential}};
  in.spec.temporal.kind = kind;
  in.spec.phi_context.sites = static_cast<std::size_t>(S);
  in.spec.phi_context.site_ids = P.site_ids;
  if (kind == TemporalCase::var_covariate) {
    in.spec.phi_context.covariates = Eigen::MatrixXd(S, 1);
    for (int s = 0; s < S; ++s) in.spec.phi_context.covariates(s, 0) = z(rng);
  }
  if (kind == TemporalCase::var_2nn) {
    in.spec.phi_context.neighbors.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s)
      in.spec.phi_context.neighbors[static_cast<std::size_t>(s)] = {static_cast<std::size_t>((s + 1) % S),
                                                                   static_cast<std::size_t>((s + 2) % S)};
  }
  in.priors = default_priors(in.spec, in.bundle);
  return in;
}

inline ssnst::ModelParams random_params(const Instance& in, std::mt19937_64& rng, double phi_bound = 0.9) {
  using namespace ssnst;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams m;
  m.beta = Eigen::VectorXd::Random(in.panel.covariates());
  m.sigma0 = 0.2 + u(rng);
  m.sigma = {0.3 + u(rng)};
  m.alpha = {0.2 + 2.0 * u(rng)};
  const auto n = phi_param_count(in.spec.temporal, in.spec.phi_context);
  const double b = in.spec.temporal.kind == TemporalCase::var_2nn ? 0.3 : phi_bound;
  for (std::size_t i = 0; i < n; ++i) m.temporal.push_back(b * (2.0 * u(rng) - 1.0));
  return m;
}

inline Eigen::VectorXd stacked_mean(const ssnst::ObservationPanel& P, const Eigen::VectorXd& beta) {
  Eigen::MatrixXd mu(P.sites(), P.steps());
  for (Eigen::Index t = 0; t < P.steps(); ++t) mu.col(t) = P.X[static_cast<std::size_t>(t)] * beta;
  return mu.reshaped();
}

inline Eigen::MatrixXd dense_v(const ssnst::ModelParams& m, const Instance& in) {
  Eigen::MatrixXd V = ssnst::cov_mixture(ssnst::covariance_spec(m, in.spec), in.bundle);
  V.diagonal().array() += m.sigma0 * m.sigma0;
  return V;
}

// Joint covariance of the stacked residuals, time-major.
inline Eigen::MatrixXd joint_covariance(const ssnst::ModelParams& m, const Instance& in, int T) {
  const auto Phi = ssnst::build_phi(in.spec.temporal, m.temporal, in.spec.phi_context);
  const double k1 =
      in.spec.temporal.kind == ssnst::TemporalCase::ar ? 1.0 / (1.0 - m.temporal[0] * m.temporal[0]) : 1.0;
  return oracle::var_joint_covariance(dense_v(m, in), Phi, k1, T);
}

// Replaces y with a draw from the model at `m`.
inline void simulate_into(Instance& in, const ssnst::ModelParams& m, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  const auto T = static_cast<int>(in.panel.steps());
  const Eigen::MatrixXd L = joint_covariance(m, in, T).llt().matrixL();
  const Eigen::VectorXd e = Eigen::VectorXd::NullaryExpr(L.rows(), [&] { return z(rng); });
  const Eigen::VectorXd y = stacked_mean(in.panel, m.beta) + L * e;
  in.panel.y = y.reshaped(in.panel.sites(), in.panel.steps());
}

inline void mark_missing(Instance& in, Eigen::Index s, Eigen::Index t) {
  in.panel.observed(s, t) = false;
  in.panel.y(s, t) = std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fixture
