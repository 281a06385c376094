#include "ssnst/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "ssnst/error.hpp"

namespace ssnst {

std::string_view to_string(TemporalCase c) noexcept {
  switch (c) {
    case TemporalCase::ar: return "ar";
    case TemporalCase::var_sitewise: return "var_sitewise";
    case TemporalCase::var_covariate: return "var_covariate";
    case TemporalCase::var_2nn: return "var_2nn";
  }
  return "?";
}

TemporalCase parse_temporal_case(std::string_view s) {
  if (s == "ar" || s == "case1") return TemporalCase::ar;
  if (s == "var_sitewise" || s == "case2a") return TemporalCase::var_sitewise;
  if (s == "var_covariate" || s == "case2b") return TemporalCase::var_covariate;
  if (s == "var_2nn" || s == "case3") return TemporalCase::var_2nn;
  fail(ErrorCode::ConfigInvalid, "unknown temporal case '" + std::string(s) + "'");
}

Link parse_link(std::string_view s) {
  if (s == "logit_01") return Link::logit_01;
  if (s == "tanh_pm1") return Link::tanh_pm1;
  fail(ErrorCode::ConfigInvalid, "unknown link '" + std::string(s) + "'");
}

NeighborMode parse_neighbor_mode(std::string_view s) {
  if (s == "two_nearest") return NeighborMode::two_nearest;
  if (s == "upstream_only") return NeighborMode::upstream_only;
  fail(ErrorCode::ConfigInvalid, "unknown neighbor mode '" + std::string(s) + "'");
}

SitewisePrior parse_sitewise_prior(std::string_view s) {
  if (s == "uniform") return SitewisePrior::uniform;
  if (s == "trunc_normal") return SitewisePrior::trunc_normal;
  if (s == "hierarchical") return SitewisePrior::hierarchical;
  fail(ErrorCode::ConfigInvalid, "unknown site-wise phi prior '" + std::string(s) + "'");
}

std::vector<std::vector<std::size_t>> case3_neighbors(const Eigen::MatrixXd& H, const BoolMatrix& flow_conn,
                                                      std::span<const double> updist,
                                                      std::span<const int> site_ids, NeighborMode mode) {
  const auto S = static_cast<std::size_t>(H.rows());
  if (H.cols() != H.rows() || site_ids.size() != S || updist.size() != S ||
      (mode == NeighborMode::upstream_only && (flow_conn.rows() != H.rows() || flow_conn.cols() != H.cols())))
    fail(ErrorCode::DimensionMismatch, "neighbour search inputs have inconsistent shapes");

  std::vector<std::vector<std::size_t>> out(S);
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < S; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < S; ++j) {
      if (j == i) continue;
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (mode == NeighborMode::upstream_only && !(flow_conn(ii, jj) && updist[j] > updist[i])) continue;
      cand.push_back(j);
    }
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      const double ha = H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
      const double hb = H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
      if (ha != hb) return ha < hb;
      return site_ids[a] < site_ids[b];
    });
    if (cand.size() > 2) cand.resize(2);
    out[i] = cand;
  }
  return out;
}

double apply_link(Link link, double x) noexcept {
  // saturation would land on the boundary; keep outputs inside the open interval
  constexpr double below_one = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  if (link == Link::logit_01)
    return std::clamp(1.0 / (1.0 + std::exp(-x)), std::numeric_limits<double>::min(), below_one);
  // (e^x - 1) / (e^x + 1) == tanh(x / 2)
  return std::clamp(std::tanh(0.5 * x), -below_one, below_one);
}

std::size_t phi_param_count(const TemporalSpec& spec, const PhiContext& ctx) {
  switch (spec.kind) {
    case TemporalCase::ar: return 1;
    case TemporalCase::var_sitewise: return ctx.sites;
    case TemporalCase::var_covariate: return static_cast<std::size_t>(ctx.covariates.cols()) + 1;
    case TemporalCase::var_2nn: {
      std::size_t n = ctx.sites;
      for (const auto& nb : ctx.neighbors) n += nb.size();
      return n;
    }
  }
  return 0;
}

Eigen::VectorXd covariate_phi(Link link, std::span<const double> gamma, const Eigen::MatrixXd& covariates) {
  if (gamma.size() != static_cast<std::size_t>(covariates.cols()) + 1)
    fail(ErrorCode::DimensionMismatch, "var_covariate needs J+1 coefficients");
  Eigen::VectorXd phi(covariates.rows());
  for (Eigen::Index s = 0; s < covariates.rows(); ++s) {
    double eta = gamma[0];
    for (Eigen::Index j = 0; j < covariates.cols(); ++j) eta += gamma[static_cast<std::size_t>(j) + 1] * covariates(s, j);
    phi(s) = apply_link(link, eta);
  }
  return phi;
}

Eigen::MatrixXd build_phi(const TemporalSpec& spec, std::span<const double> params, const PhiContext& ctx) {
  const auto S = static_cast<Eigen::Index>(ctx.sites);
  const auto expected = phi_param_count(spec, ctx);
  if (params.size() != expected)
    fail(ErrorCode::DimensionMismatch, "temporal block expects " + std::to_string(expected) +
                                           " parameters, got " + std::to_string(params.size()));
  if (spec.kind == TemporalCase::var_covariate && static_cast<Eigen::Index>(ctx.covariates.rows()) != S)
    fail(ErrorCode::DimensionMismatch, "phi covariates need one row per site");
  if (spec.kind == TemporalCase::var_2nn && ctx.neighbors.size() != ctx.sites)
    fail(ErrorCode::DimensionMismatch, "neighbour lists need one entry per site");

  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(S, S);
  bool diagonal = true;
  switch (spec.kind) {
    case TemporalCase::ar:
      phi.diagonal().setConstant(params[0]);
      break;
    case TemporalCase::var_sitewise:
      for (Eigen::Index s = 0; s < S; ++s) phi(s, s) = params[static_cast<std::size_t>(s)];
      break;
    case TemporalCase::var_covariate:
      phi.diagonal() = covariate_phi(spec.link, params, ctx.covariates);
      break;
    case TemporalCase::var_2nn: {
      diagonal = false;
      std::size_t k = 0;
      for (Eigen::Index s = 0; s < S; ++s) {
        phi(s, s) = params[k++];
        for (auto nb : ctx.neighbors[static_cast<std::size_t>(s)]) phi(s, static_cast<Eigen::Index>(nb)) = params[k++];
      }
      break;
    }
  }

  const double rho = diagonal ? (S > 0 ? phi.diagonal().cwiseAbs().maxCoeff() : 0.0) : spectral_radius(phi);
  if (!(rho < 1.0)) fail(ErrorCode::UnstablePhi, "spectral radius " + std::to_string(rho) + " >= 1");
  return phi;
}

double spectral_radius(const Eigen::MatrixXd& phi, PowerScratch* scratch) {
  if (phi.rows() != phi.cols()) fail(ErrorCode::DimensionMismatch, "spectral radius of a non-square matrix");
  const Eigen::Index n = phi.rows();
  if (n == 0) return 0.0;
  if (n <= 64) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(phi, false);
    if (es.info() != Eigen::Success) fail(ErrorCode::NoConvergence, "dense eigensolve failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  PowerScratch local;
  PowerScratch& w = scratch ? *scratch : local;
  w.x = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
  w.x.normalize();
  double prev = 0.0;
  constexpr double tol = 1e-10;
  constexpr int cap = 10000;
  for (int it = 0; it < cap; ++it) {
    w.y.noalias() = phi * w.x;
    const double norm = w.y.norm();
    if (norm == 0.0) return 0.0;
    w.x = w.y / norm;
    if (it > 0 && std::abs(norm - prev) <= tol * norm) return norm;
    prev = norm;
  }
  fail(ErrorCode::NoConvergence, "power iteration did not converge in 10000 iterations");
}

Eigen::MatrixXd ar1_covariance(double phi, int T) {
  if (!(std::abs(phi) < 1.0)) fail(ErrorCode::NonStationaryPhi, "|phi| must be < 1");
  if (T < 1) fail(ErrorCode::DimensionMismatch, "T must be >= 1");
  Eigen::MatrixXd C(T, T);
  const double scale = 1.0 / (1.0 - phi * phi);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < T; ++u) C(t, u) = std::pow(phi, std::abs(t - u)) * scale;
  return C;
}

Eigen::MatrixXd Tridiagonal::dense() const {
  const auto T = diag.size();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(T, T);
  Q.diagonal() = diag;
  for (Eigen::Index t = 0; t + 1 < T; ++t) Q(t, t + 1) = Q(t + 1, t) = off(t);
  return Q;
}

Eigen::VectorXd Tridiagonal::apply(const Eigen::VectorXd& x) const {
  const auto T = diag.size();
  Eigen::VectorXd y = diag.cwiseProduct(x);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    y(t) += off(t) * x(t + 1);
    y(t + 1) += off(t) * x(t);
  }
  return y;
}

double Tridiagonal::log_det() const {
  // Cholesky recursion for a symmetric tridiagonal matrix.
  double logdet = 0.0;
  double d = diag(0);
  logdet += std::log(d);
  for (Eigen::Index t = 1; t < diag.size(); ++t) {
    d = diag(t) - off(t - 1) * off(t - 1) / d;
    logdet += std::log(d);
  }
  return logdet;
}

Tridiagonal ar1_precision(double phi, int T) {
  if (!(std::abs(phi) < 1.0)) fail(ErrorCode::NonStationaryPhi, "|phi| must be < 1");
  if (T < 1) fail(ErrorCode::DimensionMismatch, "T must be >= 1");
  Tridiagonal q;
  if (T == 1) {
    q.diag = Eigen::VectorXd::Constant(1, 1.0 - phi * phi);
    q.off.resize(0);
    return q;
  }
  q.diag = Eigen::VectorXd::Constant(T, 1.0 + phi * phi);
  q.diag(0) = 1.0;
  q.diag(T - 1) = 1.0;
  q.off = Eigen::VectorXd::Constant(T - 1, -phi);
  return q;
}

Eigen::VectorXd separable_precision_apply(const CholeskyFactor& spatial, double phi, int T,
                                          const Eigen::VectorXd& v) {
  const auto S = spatial.size();
  if (v.size() != S * T) fail(ErrorCode::DimensionMismatch, "vector length must be S*T");
  const auto Q = ar1_precision(phi, T);
  // Column t of M is the time-t slice; (A (x) B) vec(M) = vec(B M A').
  Eigen::Map<const Eigen::MatrixXd> M(v.data(), S, T);
  Eigen::MatrixXd spatial_solved = spatial.solve(M);
  Eigen::MatrixXd out(S, T);
  for (Eigen::Index s = 0; s < S; ++s) out.row(s) = Q.apply(spatial_solved.row(s).transpose()).transpose();
  return Eigen::Map<const Eigen::VectorXd>(out.data(), S * T);
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

Eigen::MatrixXd var1_block_covariance(const Eigen::MatrixXd& V, double phi, int T, Eigen::Index dense_cap) {
  if (V.rows() != V.cols()) fail(ErrorCode::DimensionMismatch, "V must be square");
  if (V.rows() * T > dense_cap)
    fail(ErrorCode::DenseCapExceeded, "S*T = " + std::to_string(V.rows() * T) + " exceeds the dense cap " +
                                          std::to_string(dense_cap));
  return kron(ar1_covariance(phi, T), V);
}

}  // namespace ssnst
