#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/network.hpp"

namespace ssnst {

enum class Family { tail_up, tail_down, euclidean };
enum class Form { exponential, linear_with_sill, spherical, gaussian };

std::string_view to_string(Family f) noexcept;
std::string_view to_string(Form f) noexcept;
Family parse_family(std::string_view s);
Form parse_form(std::string_view s);

/// Short tag used in parameter names: "tu", "td", "ed".
std::string_view family_tag(Family f) noexcept;

/// Stream families accept exponential / linear_with_sill / spherical,
/// the Euclidean family exponential / gaussian / spherical.
bool is_legal(Family family, Form form) noexcept;

struct SpatialComponent {
  Family family = Family::euclidean;
  Form form = Form::exponential;
  double sigma2 = 1.0;  // partial sill
  double alpha = 1.0;   // range, m
};

struct CovarianceSpec {
  std::vector<SpatialComponent> components;
  double nugget = 0.0;

  /// Throws InvalidForm / ConfigInvalid on illegal pairs, duplicate
  /// families, or non-positive sills and ranges.
  void validate() const;
  double total_sill() const noexcept;
};

// Scalar kernels. Distances in the same unit as alpha.
double euclidean_kernel(Form form, double d, double sigma2, double alpha);
/// Unweighted tail-up kernel, also the flow-connected tail-down kernel.
double stream_kernel(Form form, double h, double sigma2, double alpha);
/// Tail-down kernel for flow-unconnected pairs with junction distances a <= b.
double taildown_unconnected(Form form, double a, double b, double sigma2, double alpha);

Eigen::MatrixXd cov_euclidean(const Eigen::MatrixXd& D, Form form, double sigma2, double alpha);
Eigen::MatrixXd cov_tailup(const Eigen::MatrixXd& H, const BoolMatrix& flow_conn, const Eigen::MatrixXd& W,
                           Form form, double sigma2, double alpha);
Eigen::MatrixXd cov_taildown(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const BoolMatrix& flow_conn, Form form, double sigma2, double alpha);

/// Sum of the component matrices. The nugget is *not* included.
Eigen::MatrixXd cov_mixture(const CovarianceSpec& spec, const DistanceBundle& bundle);
Eigen::MatrixXd cov_component(const SpatialComponent& c, const DistanceBundle& bundle);

struct JitterPolicy {
  double base = 1e-10;  // relative to mean diagonal
  int max_escalations = 3;
  double factor = 10.0;
};

/// Lower Cholesky factor of an SPD matrix together with the diagonal jitter
/// that was needed to obtain it.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(Eigen::LLT<Eigen::MatrixXd> llt, double jitter = 0.0)
      : llt_(std::move(llt)), jitter_(jitter) {}

  Eigen::MatrixXd L() const { return llt_.matrixL(); }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }
  double jitter() const noexcept { return jitter_; }
  Eigen::Index size() const noexcept { return llt_.rows(); }
  double log_det() const;

  template <class Rhs>
  auto solve(const Rhs& rhs) const {
    return llt_.solve(rhs);
  }
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Factorizes `m`, escalating diagonal jitter on failure. Throws
/// NotPositiveDefinite once the escalations are exhausted.
CholeskyFactor assert_psd(const Eigen::MatrixXd& m, const JitterPolicy& policy = {});

}  // namespace ssnst
