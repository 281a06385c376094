#include "ssnst/kernels.hpp"

#include <cmath>
#include <set>

#include "ssnst/error.hpp"

namespace ssnst {

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::tail_up: return "tail_up";
    case Family::tail_down: return "tail_down";
    case Family::euclidean: return "euclidean";
  }
  return "?";
}

std::string_view to_string(Form f) noexcept {
  switch (f) {
    case Form::exponential: return "exponential";
    case Form::linear_with_sill: return "linear_with_sill";
    case Form::spherical: return "spherical";
    case Form::gaussian: return "gaussian";
  }
  return "?";
}

std::string_view family_tag(Family f) noexcept {
  switch (f) {
    case Family::tail_up: return "tu";
    case Family::tail_down: return "td";
    case Family::euclidean: return "ed";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  if (s == "tail_up" || s == "tu") return Family::tail_up;
  if (s == "tail_down" || s == "td") return Family::tail_down;
  if (s == "euclidean" || s == "ed") return Family::euclidean;
  fail(ErrorCode::InvalidForm, "unknown covariance family '" + std::string(s) + "'");
}

Form parse_form(std::string_view s) {
  if (s == "exponential") return Form::exponential;
  if (s == "linear_with_sill") return Form::linear_with_sill;
  if (s == "spherical") return Form::spherical;
  if (s == "gaussian") return Form::gaussian;
  fail(ErrorCode::InvalidForm, "unknown covariance form '" + std::string(s) + "'");
}

bool is_legal(Family family, Form form) noexcept {
  if (family == Family::euclidean) return form != Form::linear_with_sill;
  return form != Form::gaussian;
}

void CovarianceSpec::validate() const {
  if (components.empty() || components.size() > 3)
    fail(ErrorCode::ConfigInvalid, "a covariance mixture needs one to three components");
  std::set<Family> seen;
  for (const auto& c : components) {
    if (!is_legal(c.family, c.form))
      fail(ErrorCode::InvalidForm,
           std::string(to_string(c.form)) + " is not defined for " + std::string(to_string(c.family)));
    if (!seen.insert(c.family).second)
      fail(ErrorCode::ConfigInvalid, "duplicate component family " + std::string(to_string(c.family)));
    if (!(c.sigma2 > 0.0) || !(c.alpha > 0.0))
      fail(ErrorCode::ConfigInvalid, "partial sill and range must be positive");
  }
  if (!(nugget >= 0.0)) fail(ErrorCode::ConfigInvalid, "nugget must be non-negative");
}

double CovarianceSpec::total_sill() const noexcept {
  double s = nugget;
  for (const auto& c : components) s += c.sigma2;
  return s;
}

double euclidean_kernel(Form form, double d, double sigma2, double alpha) {
  const double r = d / alpha;
  switch (form) {
    case Form::exponential: return sigma2 * std::exp(-3.0 * r);
    case Form::gaussian: return sigma2 * std::exp(-3.0 * r * r);
    case Form::spherical: return r <= 1.0 ? sigma2 * (1.0 - 1.5 * r + 0.5 * r * r * r) : 0.0;
    case Form::linear_with_sill: break;
  }
  fail(ErrorCode::InvalidForm, "linear_with_sill is not a Euclidean form");
}

double stream_kernel(Form form, double h, double sigma2, double alpha) {
  const double r = h / alpha;
  switch (form) {
    case Form::exponential: return sigma2 * std::exp(-3.0 * r);
    case Form::linear_with_sill: return r <= 1.0 ? sigma2 * (1.0 - r) : 0.0;
    case Form::spherical: return r <= 1.0 ? sigma2 * (1.0 - 1.5 * r + 0.5 * r * r * r) : 0.0;
    case Form::gaussian: break;
  }
  fail(ErrorCode::InvalidForm, "gaussian is not a stream-network form");
}

double taildown_unconnected(Form form, double a, double b, double sigma2, double alpha) {
  const double ra = a / alpha;
  const double rb = b / alpha;
  switch (form) {
    case Form::exponential: return sigma2 * std::exp(-3.0 * (ra + rb));
    case Form::linear_with_sill: return rb <= 1.0 ? sigma2 * (1.0 - rb) : 0.0;
    case Form::spherical:
      // Single (1 - b/alpha) factor and linear b/(2 alpha) term, as printed.
      return rb <= 1.0 ? sigma2 * (1.0 - 1.5 * ra + 0.5 * rb) * (1.0 - rb) : 0.0;
    case Form::gaussian: break;
  }
  fail(ErrorCode::InvalidForm, "gaussian is not a stream-network form");
}

Eigen::MatrixXd cov_euclidean(const Eigen::MatrixXd& D, Form form, double sigma2, double alpha) {
  if (!is_legal(Family::euclidean, form)) fail(ErrorCode::InvalidForm, "illegal Euclidean form");
  return D.unaryExpr([&](double d) { return euclidean_kernel(form, d, sigma2, alpha); });
}

Eigen::MatrixXd cov_tailup(const Eigen::MatrixXd& H, const BoolMatrix& flow_conn, const Eigen::MatrixXd& W,
                           Form form, double sigma2, double alpha) {
  if (!is_legal(Family::tail_up, form)) fail(ErrorCode::InvalidForm, "illegal tail-up form");
  if (flow_conn.rows() != H.rows() || flow_conn.cols() != H.cols() || W.rows() != H.rows() ||
      W.cols() != H.cols())
    fail(ErrorCode::DimensionMismatch, "tail-up inputs have inconsistent shapes");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(H.rows(), H.cols());
  for (Eigen::Index j = 0; j < H.cols(); ++j)
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      if (flow_conn(i, j)) C(i, j) = stream_kernel(form, H(i, j), sigma2, alpha) * W(i, j);
  return C;
}

Eigen::MatrixXd cov_taildown(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const BoolMatrix& flow_conn, Form form, double sigma2, double alpha) {
  if (!is_legal(Family::tail_down, form)) fail(ErrorCode::InvalidForm, "illegal tail-down form");
  if (flow_conn.rows() != H.rows() || flow_conn.cols() != H.cols() || A.rows() != H.rows() ||
      A.cols() != H.cols() || B.rows() != H.rows() || B.cols() != H.cols())
    fail(ErrorCode::DimensionMismatch, "tail-down inputs have inconsistent shapes");
  Eigen::MatrixXd C(H.rows(), H.cols());
  for (Eigen::Index j = 0; j < H.cols(); ++j)
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      C(i, j) = flow_conn(i, j) ? stream_kernel(form, H(i, j), sigma2, alpha)
                                : taildown_unconnected(form, A(i, j), B(i, j), sigma2, alpha);
  return C;
}

Eigen::MatrixXd cov_component(const SpatialComponent& c, const DistanceBundle& bundle) {
  switch (c.family) {
    case Family::euclidean: return cov_euclidean(bundle.D, c.form, c.sigma2, c.alpha);
    case Family::tail_up:
      if (!bundle.has_stream) fail(ErrorCode::MissingNetwork, "tail-up component needs a stream network");
      if (bundle.W.size() == 0 && bundle.H.size() != 0)
        fail(ErrorCode::AfvMissing, "tail-up component needs spatial weights");
      return cov_tailup(bundle.H, bundle.flow_conn, bundle.W, c.form, c.sigma2, c.alpha);
    case Family::tail_down:
      if (!bundle.has_stream) fail(ErrorCode::MissingNetwork, "tail-down component needs a stream network");
      return cov_taildown(bundle.H, bundle.A, bundle.B, bundle.flow_conn, c.form, c.sigma2, c.alpha);
  }
  fail(ErrorCode::InvalidForm, "unknown family");
}

Eigen::MatrixXd cov_mixture(const CovarianceSpec& spec, const DistanceBundle& bundle) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(bundle.rows(), bundle.cols());
  for (const auto& c : spec.components) sigma += cov_component(c, bundle);
  return sigma;
}

double CholeskyFactor::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Eigen::MatrixXd CholeskyFactor::inverse() const {
  return llt_.solve(Eigen::MatrixXd::Identity(size(), size()));
}

CholeskyFactor assert_psd(const Eigen::MatrixXd& m, const JitterPolicy& policy) {
  if (m.rows() != m.cols()) fail(ErrorCode::DimensionMismatch, "Cholesky needs a square matrix");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return CholeskyFactor(std::move(llt), 0.0);

  const double scale = m.rows() > 0 ? m.diagonal().mean() : 0.0;
  double jitter = policy.base * (scale > 0.0 ? scale : 1.0);
  for (int attempt = 0; attempt <= policy.max_escalations; ++attempt, jitter *= policy.factor) {
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return CholeskyFactor(std::move(llt), jitter);
  }
  fail(ErrorCode::NotPositiveDefinite,
       "matrix of size " + std::to_string(m.rows()) + " is not positive definite after jitter");
}

}  // namespace ssnst
