#include "ssnst/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "ssnst/error.hpp"

namespace ssnst {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

// log s(z) + log(1 - s(z)) without cancellation.
double log_sigmoid_jacobian(double z) {
  const double a = std::abs(z);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

// log(1 - tanh(z)^2)
double log_tanh_jacobian(double z) {
  const double a = std::abs(z);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double uniform_logpdf(double x, double lo, double hi) {
  return (x > lo && x < hi) ? -std::log(hi - lo) : kNegInf;
}

bool is_atanh_temporal(TemporalCase c) { return c != TemporalCase::var_covariate; }

}  // namespace

std::size_t ObservationPanel::missing_count() const {
  return static_cast<std::size_t>(observed.size() - observed.count());
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> ObservationPanel::missing_cells() const {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (Eigen::Index t = 0; t < observed.cols(); ++t)
    for (Eigen::Index s = 0; s < observed.rows(); ++s)
      if (!observed(s, t)) out.emplace_back(s, t);
  return out;
}

void ObservationPanel::validate() const {
  const auto S = y.rows(), T = y.cols();
  if (static_cast<Eigen::Index>(site_ids.size()) != S || static_cast<Eigen::Index>(times.size()) != T)
    fail(ErrorCode::DimensionMismatch, "panel labels do not match the response shape");
  if (observed.rows() != S || observed.cols() != T)
    fail(ErrorCode::DimensionMismatch, "missingness mask does not match the response shape");
  if (static_cast<Eigen::Index>(X.size()) != T)
    fail(ErrorCode::DimensionMismatch, "need one design matrix per time");
  for (const auto& Xt : X) {
    if (Xt.rows() != S || Xt.cols() != X.front().cols())
      fail(ErrorCode::DimensionMismatch, "design matrices have inconsistent shapes");
    if (!Xt.allFinite()) fail(ErrorCode::CovariateMissing, "covariates must be complete at every cell");
  }
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s)
      if (observed(s, t) && !std::isfinite(y(s, t)))
        fail(ErrorCode::SchemaError, "observed response is not finite");
}

std::pair<double, double> fourier_pair(double t, double m) {
  const double w = 2.0 * std::numbers::pi * t / m;
  return {std::sin(w), std::cos(w)};
}

Design build_design(const CovariateTable& table, const DesignFormula& formula, const Standardization* reuse) {
  const auto S = static_cast<Eigen::Index>(table.site_ids.size());
  const auto T = static_cast<Eigen::Index>(table.times.size());
  std::vector<Eigen::MatrixXd> cols;  // each S x T
  std::vector<std::string> names{"intercept"};
  cols.push_back(Eigen::MatrixXd::Ones(S, T));

  for (const auto& term : formula.terms) {
    if (term.rfind("fourier(", 0) == 0 && term.back() == ')') {
      const double m = std::stod(term.substr(8, term.size() - 9));
      if (!(m > 0.0)) fail(ErrorCode::ConfigInvalid, "fourier period must be positive");
      Eigen::MatrixXd sn(S, T), cs(S, T);
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto [a, b] = fourier_pair(table.times[static_cast<std::size_t>(t)], m);
        sn.col(t).setConstant(a);
        cs.col(t).setConstant(b);
      }
      const std::string tag = term.substr(8, term.size() - 9);
      names.push_back("sin" + tag);
      cols.push_back(std::move(sn));
      names.push_back("cos" + tag);
      cols.push_back(std::move(cs));
      continue;
    }
    auto it = table.columns.find(term);
    if (it == table.columns.end()) fail(ErrorCode::UnknownColumn, "no covariate column named '" + term + "'");
    if (it->second.rows() != S || it->second.cols() != T)
      fail(ErrorCode::DimensionMismatch, "covariate column '" + term + "' has the wrong shape");
    names.push_back(term);
    cols.push_back(it->second);
  }

  const std::size_t p = cols.size();
  Design d;
  d.names = names;
  d.transform.center.assign(p, 0.0);
  d.transform.scale.assign(p, 1.0);
  if (reuse) {
    if (reuse->center.size() != p || reuse->scale.size() != p)
      fail(ErrorCode::DimensionMismatch, "stored standardization does not match the formula");
    d.transform = *reuse;
  } else if (formula.standardize) {
    for (std::size_t j = 1; j < p; ++j) {
      const double mean = cols[j].mean();
      const double n = static_cast<double>(cols[j].size());
      const double var = n > 1 ? (cols[j].array() - mean).square().sum() / (n - 1.0) : 0.0;
      d.transform.center[j] = mean;
      d.transform.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  for (std::size_t j = 0; j < p; ++j)
    cols[j] = (cols[j].array() - d.transform.center[j]) / d.transform.scale[j];

  d.X.assign(static_cast<std::size_t>(T), Eigen::MatrixXd(S, static_cast<Eigen::Index>(p)));
  for (Eigen::Index t = 0; t < T; ++t)
    for (std::size_t j = 0; j < p; ++j) d.X[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(j)) = cols[j].col(t);
  return d;
}

Eigen::VectorXd destandardize_beta(const Eigen::VectorXd& beta, const Standardization& transform) {
  if (static_cast<std::size_t>(beta.size()) != transform.scale.size())
    fail(ErrorCode::DimensionMismatch, "coefficient vector does not match the standardization");
  Eigen::VectorXd raw = beta;
  for (Eigen::Index j = 1; j < beta.size(); ++j) {
    raw(j) = beta(j) / transform.scale[static_cast<std::size_t>(j)];
    raw(0) -= raw(j) * transform.center[static_cast<std::size_t>(j)];
  }
  return raw;
}

void ModelSpec::validate() const {
  if (components.empty() || components.size() > 3)
    fail(ErrorCode::ConfigInvalid, "a model needs one to three spatial components");
  std::set<Family> seen;
  for (const auto& c : components) {
    if (!is_legal(c.family, c.form))
      fail(ErrorCode::InvalidForm,
           std::string(to_string(c.form)) + " is not defined for " + std::string(to_string(c.family)));
    if (!seen.insert(c.family).second)
      fail(ErrorCode::ConfigInvalid, "duplicate component family " + std::string(to_string(c.family)));
  }
  if (temporal.kind == TemporalCase::var_covariate &&
      phi_context.covariates.rows() != static_cast<Eigen::Index>(phi_context.sites))
    fail(ErrorCode::DimensionMismatch, "var_covariate needs one covariate row per site");
  if (temporal.kind == TemporalCase::var_2nn && phi_context.neighbors.size() != phi_context.sites)
    fail(ErrorCode::DimensionMismatch, "var_2nn needs a neighbour list per site");
}

PriorConfig default_priors(const ModelSpec& spec, const DistanceBundle& bundle) {
  PriorConfig p;
  for (const auto& c : spec.components) {
    double maxd = 0.0;
    if (c.family == Family::euclidean) {
      maxd = bundle.D.size() ? bundle.D.maxCoeff() : 0.0;
    } else {
      if (!bundle.has_stream) fail(ErrorCode::MissingNetwork, "stream components need a stream network");
      maxd = bundle.H.size() ? bundle.H.maxCoeff() : 0.0;
    }
    if (!(maxd > 0.0)) fail(ErrorCode::ConfigInvalid, "maximum distance must be positive to bound the range prior");
    p.alpha_max.push_back(4.0 * maxd);
  }
  return p;
}

CovarianceSpec covariance_spec(const ModelParams& params, const ModelSpec& spec) {
  CovarianceSpec cs;
  cs.nugget = params.sigma0 * params.sigma0;
  for (std::size_t k = 0; k < spec.components.size(); ++k)
    cs.components.push_back({spec.components[k].family, spec.components[k].form,
                             params.sigma[k] * params.sigma[k], params.alpha[k]});
  return cs;
}

ParameterLayout::ParameterLayout(std::vector<std::string> beta_names, const ModelSpec& spec,
                                 const PriorConfig& priors)
    : p_(beta_names.size()), spec_(spec), alpha_max_(priors.alpha_max), sigma_phi_max_(priors.sigma_phi_max) {
  spec_.validate();
  const auto K = spec_.components.size();
  if (alpha_max_.size() != K) fail(ErrorCode::ConfigInvalid, "need one range bound per spatial component");
  n_temporal_ = phi_param_count(spec_.temporal, spec_.phi_context);
  hierarchical_ = spec_.temporal.kind == TemporalCase::var_sitewise &&
                  spec_.temporal.sitewise_prior == SitewisePrior::hierarchical;

  for (const auto& b : beta_names) names_.push_back("beta[" + b + "]");
  blocks_[0] = {0, p_};
  names_.push_back("sigma0");
  for (const auto& c : spec_.components) names_.push_back("sigma_" + std::string(family_tag(c.family)));
  blocks_[1] = {p_, K + 1};
  for (const auto& c : spec_.components) names_.push_back("alpha_" + std::string(family_tag(c.family)));
  blocks_[2] = {p_ + K + 1, K};

  const auto& ctx = spec_.phi_context;
  auto site_label = [&](std::size_t s) {
    return s < ctx.site_ids.size() ? std::to_string(ctx.site_ids[s]) : std::to_string(s);
  };
  switch (spec_.temporal.kind) {
    case TemporalCase::ar:
      names_.push_back("phi");
      break;
    case TemporalCase::var_sitewise:
      for (std::size_t s = 0; s < ctx.sites; ++s) names_.push_back("phi[" + site_label(s) + "]");
      break;
    case TemporalCase::var_covariate:
      names_.push_back("gamma[intercept]");
      for (Eigen::Index j = 0; j < ctx.covariates.cols(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        names_.push_back("gamma[" +
                         (ju < spec_.phi_covariate_names.size() ? spec_.phi_covariate_names[ju] : std::to_string(j + 1)) +
                         "]");
      }
      break;
    case TemporalCase::var_2nn:
      for (std::size_t s = 0; s < ctx.sites; ++s) {
        names_.push_back("phi[" + site_label(s) + "," + site_label(s) + "]");
        for (auto nb : ctx.neighbors[s]) names_.push_back("phi[" + site_label(s) + "," + site_label(nb) + "]");
      }
      break;
  }
  if (hierarchical_) {
    names_.push_back("mu_phi");
    names_.push_back("sigma_phi");
  }
  blocks_[3] = {p_ + 2 * K + 1, n_temporal_ + (hierarchical_ ? 2 : 0)};
}

ModelParams ParameterLayout::to_constrained(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != size())
    fail(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  const auto K = spec_.components.size();
  ModelParams m;
  m.beta = theta.head(static_cast<Eigen::Index>(p_));
  std::size_t k = p_;
  m.sigma0 = std::exp(theta(static_cast<Eigen::Index>(k++)));
  for (std::size_t c = 0; c < K; ++c) m.sigma.push_back(std::exp(theta(static_cast<Eigen::Index>(k++))));
  for (std::size_t c = 0; c < K; ++c) m.alpha.push_back(alpha_max_[c] * sigmoid(theta(static_cast<Eigen::Index>(k++))));
  const bool atanh_map = is_atanh_temporal(spec_.temporal.kind);
  for (std::size_t i = 0; i < n_temporal_; ++i) {
    const double z = theta(static_cast<Eigen::Index>(k++));
    m.temporal.push_back(atanh_map ? std::tanh(z) : z);
  }
  if (hierarchical_) {
    m.mu_phi = theta(static_cast<Eigen::Index>(k++));
    m.sigma_phi = sigma_phi_max_ * sigmoid(theta(static_cast<Eigen::Index>(k++)));
  }
  return m;
}

Eigen::VectorXd ParameterLayout::to_unconstrained(const ModelParams& m) const {
  const auto K = spec_.components.size();
  if (static_cast<std::size_t>(m.beta.size()) != p_ || m.sigma.size() != K || m.alpha.size() != K ||
      m.temporal.size() != n_temporal_)
    fail(ErrorCode::DimensionMismatch, "parameters do not match the layout");
  Eigen::VectorXd theta(static_cast<Eigen::Index>(size()));
  theta.head(static_cast<Eigen::Index>(p_)) = m.beta;
  std::size_t k = p_;
  theta(static_cast<Eigen::Index>(k++)) = std::log(m.sigma0);
  for (std::size_t c = 0; c < K; ++c) theta(static_cast<Eigen::Index>(k++)) = std::log(m.sigma[c]);
  for (std::size_t c = 0; c < K; ++c) theta(static_cast<Eigen::Index>(k++)) = logit(m.alpha[c] / alpha_max_[c]);
  const bool atanh_map = is_atanh_temporal(spec_.temporal.kind);
  for (std::size_t i = 0; i < n_temporal_; ++i)
    theta(static_cast<Eigen::Index>(k++)) = atanh_map ? std::atanh(m.temporal[i]) : m.temporal[i];
  if (hierarchical_) {
    theta(static_cast<Eigen::Index>(k++)) = m.mu_phi;
    theta(static_cast<Eigen::Index>(k++)) = logit(m.sigma_phi / sigma_phi_max_);
  }
  return theta;
}

double ParameterLayout::log_jacobian(const Eigen::VectorXd& theta) const {
  const auto K = spec_.components.size();
  double lj = 0.0;
  std::size_t k = p_;
  for (std::size_t c = 0; c < K + 1; ++c) lj += theta(static_cast<Eigen::Index>(k++));
  for (std::size_t c = 0; c < K; ++c)
    lj += std::log(alpha_max_[c]) + log_sigmoid_jacobian(theta(static_cast<Eigen::Index>(k++)));
  const bool atanh_map = is_atanh_temporal(spec_.temporal.kind);
  for (std::size_t i = 0; i < n_temporal_; ++i) {
    const double z = theta(static_cast<Eigen::Index>(k++));
    if (atanh_map) lj += log_tanh_jacobian(z);
  }
  if (hierarchical_) {
    ++k;  // mu_phi is unconstrained
    lj += std::log(sigma_phi_max_) + log_sigmoid_jacobian(theta(static_cast<Eigen::Index>(k++)));
  }
  return lj;
}

Eigen::VectorXd ParameterLayout::flatten(const ModelParams& m) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < m.beta.size(); ++j) v(k++) = m.beta(j);
  v(k++) = m.sigma0;
  for (double s : m.sigma) v(k++) = s;
  for (double a : m.alpha) v(k++) = a;
  for (double t : m.temporal) v(k++) = t;
  if (hierarchical_) {
    v(k++) = m.mu_phi;
    v(k++) = m.sigma_phi;
  }
  return v;
}

ModelParams ParameterLayout::unflatten(const Eigen::VectorXd& flat) const {
  if (static_cast<std::size_t>(flat.size()) != size())
    fail(ErrorCode::DimensionMismatch, "flat parameter vector has the wrong length");
  const auto K = spec_.components.size();
  ModelParams m;
  Eigen::Index k = 0;
  m.beta = flat.head(static_cast<Eigen::Index>(p_));
  k += static_cast<Eigen::Index>(p_);
  m.sigma0 = flat(k++);
  for (std::size_t c = 0; c < K; ++c) m.sigma.push_back(flat(k++));
  for (std::size_t c = 0; c < K; ++c) m.alpha.push_back(flat(k++));
  for (std::size_t i = 0; i < n_temporal_; ++i) m.temporal.push_back(flat(k++));
  if (hierarchical_) {
    m.mu_phi = flat(k++);
    m.sigma_phi = flat(k++);
  }
  return m;
}

double normal_logpdf(double x, double mean, double sd) noexcept {
  const double z = (x - mean) / sd;
  return -0.5 * (kLog2Pi + z * z) - std::log(sd);
}

double truncation_mass(double mean, double sd) {
  return std_normal_cdf((1.0 - mean) / sd) - std_normal_cdf((-1.0 - mean) / sd);
}

PriorTerms log_prior_terms(const ModelParams& m, const PriorConfig& priors, const ModelSpec& spec) {
  PriorTerms t;
  for (Eigen::Index j = 0; j < m.beta.size(); ++j) t.beta += normal_logpdf(m.beta(j), 0.0, priors.beta_sd);
  t.sigma0 = uniform_logpdf(m.sigma0, 0.0, priors.sigma0_max);
  for (double s : m.sigma) t.sigmas += uniform_logpdf(s, 0.0, priors.sigma_max);
  for (std::size_t c = 0; c < m.alpha.size(); ++c) {
    if (c >= priors.alpha_max.size()) fail(ErrorCode::ConfigInvalid, "missing range bound");
    t.alphas += uniform_logpdf(m.alpha[c], 0.0, priors.alpha_max[c]);
  }

  switch (spec.temporal.kind) {
    case TemporalCase::ar:
    case TemporalCase::var_2nn:
      for (double phi : m.temporal) t.temporal += uniform_logpdf(phi, -1.0, 1.0);
      break;
    case TemporalCase::var_covariate:
      for (double g : m.temporal) t.temporal += normal_logpdf(g, 0.0, priors.gamma_sd);
      break;
    case TemporalCase::var_sitewise:
      switch (spec.temporal.sitewise_prior) {
        case SitewisePrior::uniform:
          for (double phi : m.temporal) t.temporal += uniform_logpdf(phi, -1.0, 1.0);
          break;
        case SitewisePrior::trunc_normal: {
          const double logz = std::log(truncation_mass(priors.phi_mean, priors.phi_sd));
          for (double phi : m.temporal)
            t.temporal += std::abs(phi) < 1.0 ? normal_logpdf(phi, priors.phi_mean, priors.phi_sd) - logz : kNegInf;
          break;
        }
        case SitewisePrior::hierarchical: {
          t.temporal += normal_logpdf(m.mu_phi, priors.mu_phi_mean, priors.mu_phi_sd);
          t.temporal += uniform_logpdf(m.sigma_phi, 0.0, priors.sigma_phi_max);
          if (!std::isfinite(t.temporal)) break;
          const double logz = std::log(truncation_mass(m.mu_phi, m.sigma_phi));
          for (double phi : m.temporal)
            t.temporal += std::abs(phi) < 1.0 ? normal_logpdf(phi, m.mu_phi, m.sigma_phi) - logz : kNegInf;
          break;
        }
      }
      break;
  }
  return t;
}

double log_prior(const ModelParams& params, const PriorConfig& priors, const ModelSpec& spec) {
  return log_prior_terms(params, priors, spec).total();
}

ModelFactors assemble_factors(const ModelParams& params, const DistanceBundle& bundle, const ModelSpec& spec) {
  ModelFactors f;
  f.phi = build_phi(spec.temporal, params.temporal, spec.phi_context);
  f.scalar_phi = spec.temporal.kind == TemporalCase::ar;
  if (f.scalar_phi) {
    f.phi_scalar = params.temporal.at(0);
    f.kappa1 = 1.0 / (1.0 - f.phi_scalar * f.phi_scalar);
  }
  Eigen::MatrixXd V = cov_mixture(covariance_spec(params, spec), bundle);
  V.diagonal().array() += params.sigma0 * params.sigma0;
  f.v = assert_psd(V);
  return f;
}

Eigen::MatrixXd residuals(const Eigen::VectorXd& beta, const Eigen::MatrixXd& y, const ObservationPanel& panel) {
  Eigen::MatrixXd r(y.rows(), y.cols());
  for (Eigen::Index t = 0; t < y.cols(); ++t) r.col(t) = y.col(t) - panel.X[static_cast<std::size_t>(t)] * beta;
  return r;
}

LogLik loglik_var(const ModelFactors& f, const Eigen::VectorXd& beta, const Eigen::MatrixXd& y,
                  const ObservationPanel& panel) {
  const auto S = y.rows(), T = y.cols();
  const Eigen::MatrixXd r = residuals(beta, y, panel);
  Eigen::MatrixXd e(S, T);
  e.col(0) = r.col(0);
  if (T > 1) {
    if (f.scalar_phi)
      e.rightCols(T - 1) = r.rightCols(T - 1) - f.phi_scalar * r.leftCols(T - 1);
    else
      e.rightCols(T - 1).noalias() = r.rightCols(T - 1) - f.phi * r.leftCols(T - 1);
  }
  f.v.llt().matrixL().solveInPlace(e);
  const double logdet = f.v.log_det();
  const double Sd = static_cast<double>(S);
  LogLik out;
  out.pointwise.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double quad = e.col(t).squaredNorm();
    if (t == 0)
      out.pointwise(t) = -0.5 * (Sd * kLog2Pi + logdet + Sd * std::log(f.kappa1) + quad / f.kappa1);
    else
      out.pointwise(t) = -0.5 * (Sd * kLog2Pi + logdet + quad);
  }
  out.total = out.pointwise.sum();
  return out;
}

LogLik loglik_var(const ModelParams& params, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                  const DistanceBundle& bundle, const ModelSpec& spec) {
  return loglik_var(assemble_factors(params, bundle, spec), params.beta, y, panel);
}

double loglik_separable(const ModelFactors& f, const Eigen::VectorXd& beta, const Eigen::MatrixXd& y,
                        const ObservationPanel& panel) {
  if (!f.scalar_phi) fail(ErrorCode::UnsupportedCase, "the separable likelihood needs a scalar phi");
  const auto S = y.rows();
  const auto T = static_cast<int>(y.cols());
  const Eigen::MatrixXd r = residuals(beta, y, panel);
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
  const Eigen::VectorXd w = separable_precision_apply(f.v, f.phi_scalar, T, v);
  const double quad = v.dot(w);
  // det(A (x) B) = det(A)^S det(B)^T for A: T x T, B: S x S.
  const double logdet_ar1 = -ar1_precision(f.phi_scalar, T).log_det();
  const double logdet = static_cast<double>(S) * logdet_ar1 + static_cast<double>(T) * f.v.log_det();
  return -0.5 * (static_cast<double>(S * T) * kLog2Pi + logdet + quad);
}

double loglik_separable(const ModelParams& params, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                        const DistanceBundle& bundle, const ModelSpec& spec) {
  if (spec.temporal.kind != TemporalCase::ar)
    fail(ErrorCode::UnsupportedCase, "the separable likelihood needs the common-phi case");
  return loglik_separable(assemble_factors(params, bundle, spec), params.beta, y, panel);
}

double log_posterior(const Eigen::VectorXd& theta, const Eigen::MatrixXd& y, const ObservationPanel& panel,
                     const DistanceBundle& bundle, const ParameterLayout& layout, const PriorConfig& priors) {
  const ModelParams params = layout.to_constrained(theta);
  const double lp = log_prior(params, priors, layout.spec());
  if (!std::isfinite(lp)) return kNegInf;
  ModelFactors f;
  try {
    f = assemble_factors(params, bundle, layout.spec());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnstablePhi) return kNegInf;
    throw;
  }
  const double ll = layout.spec().method == LikelihoodMethod::separable
                        ? loglik_separable(f, params.beta, y, panel)
                        : loglik_var(f, params.beta, y, panel).total;
  return lp + layout.log_jacobian(theta) + ll;
}

}  // namespace ssnst
