#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ssnst {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// One reach of the stream network. `parent_id` points downstream; the
/// outlet is the only segment without a parent.
struct Segment {
  int id = 0;
  std::optional<int> parent_id;
  double length = 0.0;            // m
  double seg_contrib_area = 0.0;  // km^2, local drainage of this reach
  double watershed_area = 0.0;    // km^2, cumulative at the downstream end
};

/// A fixed monitoring (or prediction) location on a segment. `updist` is
/// the along-stream distance from the network outlet.
struct Site {
  int site_id = 0;
  int segment_id = 0;
  double updist = 0.0;  // m
  double x = 0.0;       // projected coordinates, m
  double y = 0.0;
};

enum class Weighting { watershed_area, equal, custom };

/// Proportional influence and additive function value per segment, indexed
/// like StreamNetwork::segments().
struct AfvResult {
  std::vector<double> pi;
  std::vector<double> afv;
};

class StreamNetwork {
 public:
  /// Validates topology (single outlet, no cycles, no dangling references)
  /// and site placement. AFV is left unset.
  static StreamNetwork build(std::vector<Segment> segments, std::vector<Site> sites);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const std::vector<Site>& sites() const noexcept { return sites_; }

  std::size_t outlet() const noexcept { return outlet_; }
  std::size_t segment_index(int segment_id) const;
  std::optional<std::size_t> parent(std::size_t seg) const noexcept;
  const std::vector<std::size_t>& children(std::size_t seg) const { return children_[seg]; }
  std::size_t depth(std::size_t seg) const { return depth_[seg]; }

  /// updist of the segment's downstream node (its upstream node sits at
  /// this value plus the segment length).
  double downstream_updist(std::size_t seg) const { return base_updist_[seg]; }

  /// True when `anc` is `desc` or lies downstream of it.
  bool is_ancestor_or_self(std::size_t anc, std::size_t desc) const;
  std::size_t common_ancestor(std::size_t a, std::size_t b) const;

  double total_length() const;

  /// Throws DanglingReference / InvalidNetwork for sites not placed on an
  /// existing segment within its extent.
  void validate_site(const Site& site) const;

  void set_afv(std::vector<double> afv);
  bool has_afv() const noexcept { return afv_.has_value(); }
  const std::vector<double>& afv() const;

 private:
  std::vector<Segment> segments_;
  std::vector<Site> sites_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> depth_;
  std::vector<double> base_updist_;
  std::size_t outlet_ = 0;
  std::optional<std::vector<double>> afv_;
};

/// PI of a child = its weight over the summed weight of all children of its
/// parent; AFV = product of PI along the path to the outlet.
/// `custom` supplies one weight per segment when weighting == custom.
AfvResult compute_afv(const StreamNetwork& network, Weighting weighting,
                      std::span<const double> custom = {});

struct HydroDistances {
  Eigen::MatrixXd H;
  BoolMatrix flow_conn;
  Eigen::MatrixXd A;  // distance of the nearer site to the junction
  Eigen::MatrixXd B;  // distance of the farther site
};

/// Pairwise stream geometry between two site lists (rows x cols).
HydroDistances hydrologic_distances(const StreamNetwork& network, std::span<const Site> rows,
                                    std::span<const Site> cols);
HydroDistances hydrologic_distances(const StreamNetwork& network);

/// W_ij = sqrt(AFV_upstream / AFV_downstream) on flow-connected pairs, 0
/// elsewhere. Requires AFV on the network.
Eigen::MatrixXd spatial_weights(const StreamNetwork& network, std::span<const Site> rows,
                                std::span<const Site> cols, const BoolMatrix& flow_conn);
Eigen::MatrixXd spatial_weights(const StreamNetwork& network, const BoolMatrix& flow_conn);

Eigen::MatrixXd euclidean_distances(std::span<const Site> rows, std::span<const Site> cols);
Eigen::MatrixXd euclidean_distances(std::span<const Site> sites);

/// Everything the covariance kernels need for one (rows x cols) site pairing.
/// Stream fields are empty when the bundle was built without a network.
struct DistanceBundle {
  Eigen::MatrixXd H;
  BoolMatrix flow_conn;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd D;
  Eigen::MatrixXd W;
  bool has_stream = false;

  Eigen::Index rows() const noexcept { return D.rows(); }
  Eigen::Index cols() const noexcept { return D.cols(); }

  /// Rows/cols subset, e.g. the observed-site block of a full bundle.
  DistanceBundle select(std::span<const std::size_t> row_idx,
                        std::span<const std::size_t> col_idx) const;
};

DistanceBundle make_bundle(const StreamNetwork& network, std::span<const Site> rows,
                           std::span<const Site> cols);
DistanceBundle make_bundle(const StreamNetwork& network);
DistanceBundle make_euclidean_bundle(std::span<const Site> rows, std::span<const Site> cols);

}  // namespace ssnst
