#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/kernels.hpp"
#include "ssnst/network.hpp"

namespace ssnst {

/// Structure of the VAR(1) transition matrix.
///   ar            common scalar phi on the diagonal
///   var_sitewise  one free phi per site
///   var_covariate phi_s = link(gamma_0 + sum_j gamma_j z_js)
///   var_2nn       diagonal plus two nearest neighbours by hydrologic distance
enum class TemporalCase { ar, var_sitewise, var_covariate, var_2nn };
enum class Link { logit_01, tanh_pm1 };
enum class NeighborMode { two_nearest, upstream_only };
/// Prior family for the per-site phi of var_sitewise.
enum class SitewisePrior { uniform, trunc_normal, hierarchical };

std::string_view to_string(TemporalCase c) noexcept;
TemporalCase parse_temporal_case(std::string_view s);
Link parse_link(std::string_view s);
NeighborMode parse_neighbor_mode(std::string_view s);
SitewisePrior parse_sitewise_prior(std::string_view s);

struct TemporalSpec {
  TemporalCase kind = TemporalCase::ar;
  Link link = Link::logit_01;
  NeighborMode neighbor_mode = NeighborMode::two_nearest;
  SitewisePrior sitewise_prior = SitewisePrior::trunc_normal;
};

/// Site-level information the transition matrix depends on.
struct PhiContext {
  std::size_t sites = 0;
  std::vector<int> site_ids;                        // labels for parameter names
  Eigen::MatrixXd covariates;                       // S x J, var_covariate only
  std::vector<std::vector<std::size_t>> neighbors;  // var_2nn only, per row
};

/// Two nearest neighbours per site by total hydrologic distance (ties go to
/// the smaller site id). In upstream_only mode the candidates are restricted
/// to flow-connected sites with larger updist.
std::vector<std::vector<std::size_t>> case3_neighbors(const Eigen::MatrixXd& H, const BoolMatrix& flow_conn,
                                                      std::span<const double> updist,
                                                      std::span<const int> site_ids, NeighborMode mode);

double apply_link(Link link, double x) noexcept;

/// Number of constrained temporal parameters for the spec: 1, S, J+1, or
/// S + total neighbour count.
std::size_t phi_param_count(const TemporalSpec& spec, const PhiContext& ctx);

/// Per-site phi for var_covariate from gamma coefficients and covariates.
Eigen::VectorXd covariate_phi(Link link, std::span<const double> gamma, const Eigen::MatrixXd& covariates);

/// Assembles the transition matrix. Throws DimensionMismatch on a parameter
/// count mismatch and UnstablePhi when the spectral radius is >= 1.
Eigen::MatrixXd build_phi(const TemporalSpec& spec, std::span<const double> params, const PhiContext& ctx);

struct PowerScratch {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// max |eigenvalue|. Dense eigensolve for S <= 64, power iteration beyond.
double spectral_radius(const Eigen::MatrixXd& phi, PowerScratch* scratch = nullptr);

/// Stationary AR(1) covariance with unit innovation variance:
/// entry (t, u) = phi^|t-u| / (1 - phi^2).
Eigen::MatrixXd ar1_covariance(double phi, int T);

struct Tridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd off;  // sub/super diagonal, length T-1

  Eigen::MatrixXd dense() const;
  /// y = Q x for x of length T.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  double log_det() const;
};

/// Inverse of ar1_covariance: diag (1, 1+phi^2, ..., 1+phi^2, 1), off -phi.
/// T = 1 yields the scalar 1 - phi^2.
Tridiagonal ar1_precision(double phi, int T);

/// (Sigma_ar1 (x) Sigma_S)^{-1} v for v stacked time-major (v[t*S + s]),
/// without forming the S*T square matrix.
Eigen::VectorXd separable_precision_apply(const CholeskyFactor& spatial, double phi, int T,
                                          const Eigen::VectorXd& v);

/// Dense Sigma_ar1(phi) (x) V, blocks (t,u) = phi^|t-u| V / (1 - phi^2).
Eigen::MatrixXd var1_block_covariance(const Eigen::MatrixXd& V, double phi, int T,
                                      Eigen::Index dense_cap = 4000);

/// Kronecker product helper (A (x) B).
Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace ssnst
