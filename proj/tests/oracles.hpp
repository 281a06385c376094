#pragma once

// Reference implementations for the tests. Everything here is written from
// the model definitions with plain loops and dense linear algebra, and does
// not call into the library's covariance, temporal or kriging code.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double normal_logpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const Eigen::VectorXd r = x - mu;
  const double quad = r.dot(lu.solve(r));
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + std::log(lu.determinant()) + quad);
}

/// Joint covariance of (r_1, ..., r_T) for r_1 ~ N(0, k1 V), r_t = Phi r_{t-1} + e_t,
/// built by propagating the recursion. Time-major blocks.
inline Eigen::MatrixXd var_joint_covariance(const Eigen::MatrixXd& V, const Eigen::MatrixXd& Phi, double k1, int T) {
  const auto S = V.rows();
  std::vector<Eigen::MatrixXd> marg(static_cast<std::size_t>(T));
  marg[0] = k1 * V;
  for (int t = 1; t < T; ++t) marg[t] = Phi * marg[t - 1] * Phi.transpose() + V;
  Eigen::MatrixXd C(S * T, S * T);
  for (int u = 0; u < T; ++u) {
    Eigen::MatrixXd block = marg[u];  // Cov(r_t, r_u) for t >= u
    for (int t = u; t < T; ++t) {
      C.block(t * S, u * S, S, S) = block;
      C.block(u * S, t * S, S, S) = block.transpose();
      block = Phi * block;
    }
  }
  return C;
}

struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Distribution of the entries flagged `want` given the others at `x`.
inline Conditional gaussian_conditional(const Eigen::VectorXd& mu, const Eigen::MatrixXd& C, const std::vector<bool>& want,
                                        const Eigen::VectorXd& x) {
  std::vector<int> a, b;
  for (int i = 0; i < static_cast<int>(want.size()); ++i) (want[i] ? a : b).push_back(i);
  Eigen::MatrixXd Caa(a.size(), a.size()), Cab(a.size(), b.size()), Cbb(b.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) Caa(i, j) = C(a[i], a[j]);
    for (std::size_t j = 0; j < b.size(); ++j) Cab(i, j) = C(a[i], b[j]);
  }
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) Cbb(i, j) = C(b[i], b[j]);
  Eigen::VectorXd rb(b.size()), ma(a.size());
  for (std::size_t i = 0; i < b.size(); ++i) rb(i) = x(b[i]) - mu(b[i]);
  for (std::size_t i = 0; i < a.size(); ++i) ma(i) = mu(a[i]);
  const Eigen::MatrixXd K = Cab * Cbb.inverse();
  return {ma + K * rb, Caa - K * Cab.transpose()};
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < A.size(); ++i) A.data()[i] = z(rng);
  return A * A.transpose() / n + ridge * Eigen::MatrixXd::Identity(n, n);
}

/// log C(n, k) p^k (1-p)^(n-k).
inline double binom_logpmf(int k, int n, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
         (n - k) * std::log1p(-p);
}

inline double binom_two_sided(int k, int n, double p) {
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i <= k; ++i) lo += std::exp(binom_logpmf(i, n, p));
  for (int i = k; i <= n; ++i) hi += std::exp(binom_logpmf(i, n, p));
  return std::min(1.0, 2.0 * std::min(lo, hi));
}

/// CRPS of N(mu, sd^2) at y.
inline double gaussian_crps(double mu, double sd, double y) {
  const double z = (y - mu) / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
}

/// Composite Simpson on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace oracle
