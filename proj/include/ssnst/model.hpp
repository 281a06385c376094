#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/kernels.hpp"
#include "ssnst/network.hpp"
#include "ssnst/temporal.hpp"

namespace ssnst {

/// S x T panel of responses with a missingness mask and per-time design
/// matrices. Column 0 of every X_t is the intercept.
struct ObservationPanel {
  std::vector<int> site_ids;
  std::vector<int> times;
  Eigen::MatrixXd y;  // NaN where missing
  BoolMatrix observed;
  std::vector<Eigen::MatrixXd> X;  // one S x p matrix per time
  std::vector<std::string> covariate_names;

  Eigen::Index sites() const noexcept { return y.rows(); }
  Eigen::Index steps() const noexcept { return y.cols(); }
  Eigen::Index covariates() const noexcept { return X.empty() ? 0 : X.front().cols(); }
  std::size_t missing_count() const;
  /// (site row, time column) of every missing cell, column-major order.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> missing_cells() const;
  void validate() const;
};

/// (sin(2 pi t / m), cos(2 pi t / m)).
std::pair<double, double> fourier_pair(double t, double m = 365.0);

/// Named S x T covariate columns (site-constant columns are broadcast).
struct CovariateTable {
  std::vector<int> site_ids;
  std::vector<int> times;
  std::map<std::string, Eigen::MatrixXd> columns;
};

/// Terms are column names or `fourier(m)`; the intercept is implicit.
struct DesignFormula {
  std::vector<std::string> terms;
  bool standardize = false;
};

struct Standardization {
  std::vector<double> center;  // per design column (intercept: 0)
  std::vector<double> scale;   // per design column (intercept: 1)
};

struct Design {
  std::vector<Eigen::MatrixXd> X;
  std::vector<std::string> names;
  Standardization transform;
};

/// Builds X_t for every time. When `reuse` is given its centering and
/// scaling are applied instead of statistics of this table.
Design build_design(const CovariateTable& table, const DesignFormula& formula,
                    const Standardization* reuse = nullptr);

/// Coefficients of a standardized design mapped back to raw covariates.
Eigen::VectorXd destandardize_beta(const Eigen::VectorXd& beta, const Standardization& transform);

enum class LikelihoodMethod { var, separable };

struct ComponentSpec {
  Family family = Family::euclidean;
  Form form = Form::exponential;
};

struct ModelSpec {
  std::vector<ComponentSpec> components;
  TemporalSpec temporal;
  PhiContext phi_context;
  std::vector<std::string> phi_covariate_names;  // var_covariate
  LikelihoodMethod method = LikelihoodMethod::var;

  void validate() const;
};

struct PriorConfig {
  double beta_sd = 10.0;
  double sigma0_max = 50.0;
  double sigma_max = 100.0;
  std::vector<double> alpha_max;  // per component
  double phi_mean = 0.5;          // var_sitewise truncated normal
  double phi_sd = 0.2;
  double mu_phi_mean = 0.5;  // hierarchical var_sitewise
  double mu_phi_sd = 0.2;
  double sigma_phi_max = 2.0;
  double gamma_sd = 10.0;
};

/// alpha_max = 4 max(H) for stream components and 4 max(D) for Euclidean.
PriorConfig default_priors(const ModelSpec& spec, const DistanceBundle& bundle);

/// Parameters on their natural (constrained) scale. `sigma` holds standard
/// deviations, so partial sills are sigma^2.
struct ModelParams {
  Eigen::VectorXd beta;
  double sigma0 = 1.0;
  std::vector<double> sigma;
  std::vector<double> alpha;
  std::vector<double> temporal;  // phi, per-site phi, gamma, or 2NN entries
  double mu_phi = 0.5;           // hierarchical var_sitewise only
  double sigma_phi = 0.2;
};

CovarianceSpec covariance_spec(const ModelParams& params, const ModelSpec& spec);

enum class Block { beta = 0, scale = 1, range = 2, temporal = 3 };

/// Bijection between the unconstrained sampling vector and ModelParams.
/// Layout: [beta | log sigma0, log sigma_k | logit(alpha_k / alpha_max_k) |
/// temporal], temporal entries use atanh for (-1, 1) values and the raw
/// value for gamma coefficients.
class ParameterLayout {
 public:
  struct Range {
    std::size_t begin = 0;
    std::size_t count = 0;
  };

  ParameterLayout(std::vector<std::string> beta_names, const ModelSpec& spec, const PriorConfig& priors);

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t beta_count() const noexcept { return p_; }
  Range block(Block b) const noexcept { return blocks_[static_cast<std::size_t>(b)]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const ModelSpec& spec() const noexcept { return spec_; }

  ModelParams to_constrained(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd to_unconstrained(const ModelParams& params) const;
  double log_jacobian(const Eigen::VectorXd& theta) const;

  /// Flat constrained vector in names() order, and its inverse.
  Eigen::VectorXd flatten(const ModelParams& params) const;
  ModelParams unflatten(const Eigen::VectorXd& flat) const;

 private:
  std::size_t p_ = 0;
  ModelSpec spec_;
  std::vector<double> alpha_max_;
  double sigma_phi_max_ = 2.0;
  std::size_t n_temporal_ = 0;
  bool hierarchical_ = false;
  std::vector<std::string> names_;
  Range blocks_[4];
};

struct PriorTerms {
  double beta = 0.0;
  double sigma0 = 0.0;
  double sigmas = 0.0;
  double alphas = 0.0;
  double temporal = 0.0;

  double total() const noexcept { return beta + sigma0 + sigmas + alphas + temporal; }
};

/// Log prior densities on the constrained scale; -inf outside the support.
PriorTerms log_prior_terms(const ModelParams& params, const PriorConfig& priors, const ModelSpec& spec);
double log_prior(const ModelParams& params, const PriorConfig& priors, const ModelSpec& spec);

/// Mass of Normal(mean, sd) on [-1, 1].
double truncation_mass(double mean, double sd);
double normal_logpdf(double x, double mean, double sd) noexcept;

/// Quantities shared by every slice: transition matrix and the Cholesky
/// factor of V = Sigma + sigma0^2 I.
struct ModelFactors {
  Eigen::MatrixXd phi;
  CholeskyFactor v;
  bool scalar_phi = false;
  double phi_scalar = 0.0;
  double kappa1 = 1.0;  // variance inflation of the first slice
};

/// Throws UnstablePhi / NotPositiveDefinite.
ModelFactors assemble_factors(const ModelParams& params, const DistanceBundle& bundle, const ModelSpec& spec);

/// y - X beta as an S x T matrix.
Eigen::MatrixXd residuals(const Eigen::VectorXd& beta, const Eigen::MatrixXd& y, const ObservationPanel& panel);

struct LogLik {
  double total = 0.0;
  Eigen::VectorXd pointwise;  // one entry per time slice
};

/// Conditional (VAR) likelihood of a completed panel `y`.
LogLik loglik_var(const ModelFactors& factors, const Eigen::VectorXd& beta, const Eigen::MatrixXd& y,
                  const ObservationPanel& panel);
LogLik loglik_var(const ModelParams& params, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                  const DistanceBundle& bundle, const ModelSpec& spec);

/// Joint separable likelihood, Sigma_ar1(phi) (x) V. Case 1 only.
double loglik_separable(const ModelFactors& factors, const Eigen::VectorXd& beta, const Eigen::MatrixXd& y,
                        const ObservationPanel& panel);
double loglik_separable(const ModelParams& params, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                        const DistanceBundle& bundle, const ModelSpec& spec);

/// log prior + log Jacobian + log likelihood at unconstrained `theta`.
/// Returns -inf outside the prior support or for an unstable transition
/// matrix.
double log_posterior(const Eigen::VectorXd& theta, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                     const DistanceBundle& bundle, const ParameterLayout& layout, const PriorConfig& priors);

}  // namespace ssnst
