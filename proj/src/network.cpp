#include "ssnst/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "ssnst/error.hpp"

namespace ssnst {

namespace {

constexpr double kPlacementTol = 1e-6;

std::string seg_name(int id) { return "segment " + std::to_string(id); }

}  // namespace

StreamNetwork StreamNetwork::build(std::vector<Segment> segments, std::vector<Site> sites) {
  if (segments.empty()) fail(ErrorCode::InvalidNetwork, "network has no segments");

  StreamNetwork net;
  const std::size_t n = segments.size();
  std::unordered_map<int, std::size_t> index;
  index.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segments[i];
    if (!index.emplace(s.id, i).second) fail(ErrorCode::InvalidNetwork, "duplicate " + seg_name(s.id));
    if (!(s.length >= 0.0) || !(s.seg_contrib_area >= 0.0) || !(s.watershed_area >= 0.0))
      fail(ErrorCode::InvalidNetwork, seg_name(s.id) + " has a negative or non-finite attribute");
  }

  net.parent_.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pid = segments[i].parent_id;
    if (!pid) continue;
    auto it = index.find(*pid);
    if (it == index.end())
      fail(ErrorCode::DanglingReference,
           seg_name(segments[i].id) + " references missing parent " + std::to_string(*pid));
    net.parent_[i] = it->second;
  }

  // Every segment must reach a parentless segment within n steps.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cur = i;
    std::size_t steps = 0;
    while (net.parent_[cur]) {
      cur = *net.parent_[cur];
      if (++steps > n) fail(ErrorCode::CycleDetected, "cycle through " + seg_name(segments[i].id));
    }
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i)
    if (!net.parent_[i]) roots.push_back(i);
  if (roots.size() != 1)
    fail(ErrorCode::MultipleOutlets, "found " + std::to_string(roots.size()) + " outlets, first is " +
                                         seg_name(segments[roots.front()].id) + ", second is " +
                                         seg_name(segments[roots[1]].id));
  net.outlet_ = roots.front();

  net.children_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i)
    if (net.parent_[i]) net.children_[*net.parent_[i]].push_back(i);

  for (std::size_t i = 0; i < n; ++i) {
    double upstream = 0.0;
    for (auto c : net.children_[i]) upstream += segments[c].watershed_area;
    if (segments[i].watershed_area + 1e-9 * std::max(1.0, upstream) < upstream)
      fail(ErrorCode::InvalidNetwork,
           seg_name(segments[i].id) + " has watershed area below the sum of its tributaries");
  }

  // Breadth-first from the outlet gives depth and the downstream-node updist.
  net.depth_.assign(n, 0);
  net.base_updist_.assign(n, 0.0);
  std::vector<std::size_t> queue{net.outlet_};
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto cur = queue[q];
    for (auto c : net.children_[cur]) {
      net.depth_[c] = net.depth_[cur] + 1;
      net.base_updist_[c] = net.base_updist_[cur] + segments[cur].length;
      queue.push_back(c);
    }
  }

  net.segments_ = std::move(segments);
  std::unordered_set<int> site_ids;
  for (const auto& site : sites) {
    if (!site_ids.insert(site.site_id).second)
      fail(ErrorCode::InvalidNetwork, "duplicate site " + std::to_string(site.site_id));
    net.validate_site(site);
  }
  net.sites_ = std::move(sites);
  return net;
}

std::size_t StreamNetwork::segment_index(int segment_id) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].id == segment_id) return i;
  fail(ErrorCode::DanglingReference, "unknown " + seg_name(segment_id));
}

std::optional<std::size_t> StreamNetwork::parent(std::size_t seg) const noexcept { return parent_[seg]; }

bool StreamNetwork::is_ancestor_or_self(std::size_t anc, std::size_t desc) const {
  while (depth_[desc] > depth_[anc]) desc = *parent_[desc];
  return desc == anc;
}

std::size_t StreamNetwork::common_ancestor(std::size_t a, std::size_t b) const {
  while (depth_[a] > depth_[b]) a = *parent_[a];
  while (depth_[b] > depth_[a]) b = *parent_[b];
  while (a != b) {
    a = *parent_[a];
    b = *parent_[b];
  }
  return a;
}

double StreamNetwork::total_length() const {
  double total = 0.0;
  for (const auto& s : segments_) total += s.length;
  return total;
}

void StreamNetwork::validate_site(const Site& site) const {
  const auto seg = segment_index(site.segment_id);
  const double lo = base_updist_[seg];
  const double hi = lo + segments_[seg].length;
  const double tol = kPlacementTol * std::max(1.0, hi);
  if (!(site.updist >= lo - tol && site.updist <= hi + tol))
    fail(ErrorCode::InvalidNetwork, "site " + std::to_string(site.site_id) + " updist " +
                                        std::to_string(site.updist) + " lies outside " +
                                        seg_name(site.segment_id) + " [" + std::to_string(lo) + ", " +
                                        std::to_string(hi) + "]");
}

void StreamNetwork::set_afv(std::vector<double> afv) {
  if (afv.size() != segments_.size())
    fail(ErrorCode::DimensionMismatch, "AFV vector does not match the segment count");
  afv_ = std::move(afv);
}

const std::vector<double>& StreamNetwork::afv() const {
  if (!afv_) fail(ErrorCode::AfvMissing, "additive function values have not been computed");
  return *afv_;
}

AfvResult compute_afv(const StreamNetwork& network, Weighting weighting, std::span<const double> custom) {
  const auto& segs = network.segments();
  const std::size_t n = segs.size();
  std::vector<double> w(n, 1.0);
  if (weighting == Weighting::custom && custom.size() != n)
    fail(ErrorCode::DimensionMismatch, "custom weighting needs one value per segment");
  for (std::size_t i = 0; i < n; ++i) {
    if (weighting == Weighting::equal) continue;
    w[i] = weighting == Weighting::watershed_area ? segs[i].watershed_area : custom[i];
    if (!(w[i] > 0.0))
      fail(ErrorCode::NonPositiveWeight, seg_name(segs[i].id) + " has weight " + std::to_string(w[i]));
  }

  AfvResult out;
  out.pi.assign(n, 1.0);
  out.afv.assign(n, 1.0);
  std::vector<std::size_t> queue{network.outlet()};
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto cur = queue[q];
    const auto& kids = network.children(cur);
    double total = 0.0;
    for (auto c : kids) total += w[c];
    for (auto c : kids) {
      out.pi[c] = w[c] / total;
      out.afv[c] = out.afv[cur] * out.pi[c];
      queue.push_back(c);
    }
  }
  return out;
}

HydroDistances hydrologic_distances(const StreamNetwork& network, std::span<const Site> rows,
                                    std::span<const Site> cols) {
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  HydroDistances out{Eigen::MatrixXd::Zero(nr, nc), BoolMatrix::Constant(nr, nc, false),
                     Eigen::MatrixXd::Zero(nr, nc), Eigen::MatrixXd::Zero(nr, nc)};
  std::vector<std::size_t> rseg(rows.size()), cseg(cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rseg[i] = network.segment_index(rows[i].segment_id);
  for (std::size_t j = 0; j < cols.size(); ++j) cseg[j] = network.segment_index(cols[j].segment_id);

  for (Eigen::Index i = 0; i < nr; ++i) {
    for (Eigen::Index j = 0; j < nc; ++j) {
      const auto si = rseg[i], sj = cseg[j];
      const double ui = rows[i].updist, uj = cols[j].updist;
      if (network.is_ancestor_or_self(si, sj) || network.is_ancestor_or_self(sj, si)) {
        out.flow_conn(i, j) = true;
        out.H(i, j) = std::abs(ui - uj);
        continue;
      }
      const auto c = network.common_ancestor(si, sj);
      const double junction = network.downstream_updist(c) + network.segments()[c].length;
      const double a = ui - junction;
      const double b = uj - junction;
      out.A(i, j) = std::min(a, b);
      out.B(i, j) = std::max(a, b);
      out.H(i, j) = a + b;
    }
  }
  return out;
}

HydroDistances hydrologic_distances(const StreamNetwork& network) {
  return hydrologic_distances(network, network.sites(), network.sites());
}

Eigen::MatrixXd spatial_weights(const StreamNetwork& network, std::span<const Site> rows,
                                std::span<const Site> cols, const BoolMatrix& flow_conn) {
  const auto& afv = network.afv();
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  if (flow_conn.rows() != nr || flow_conn.cols() != nc)
    fail(ErrorCode::DimensionMismatch, "flow-connectivity mask does not match site lists");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const auto si = network.segment_index(rows[i].segment_id);
    for (Eigen::Index j = 0; j < nc; ++j) {
      if (!flow_conn(i, j)) continue;
      const auto sj = network.segment_index(cols[j].segment_id);
      if (si == sj) {
        W(i, j) = 1.0;
        continue;
      }
      // The deeper segment is upstream.
      const bool i_upstream = network.depth(si) > network.depth(sj);
      const double up = afv[i_upstream ? si : sj];
      const double down = afv[i_upstream ? sj : si];
      W(i, j) = std::sqrt(up / down);
    }
  }
  return W;
}

Eigen::MatrixXd spatial_weights(const StreamNetwork& network, const BoolMatrix& flow_conn) {
  return spatial_weights(network, network.sites(), network.sites(), flow_conn);
}

Eigen::MatrixXd euclidean_distances(std::span<const Site> rows, std::span<const Site> cols) {
  Eigen::MatrixXd D(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::hypot(rows[i].x - cols[j].x, rows[i].y - cols[j].y);
  return D;
}

Eigen::MatrixXd euclidean_distances(std::span<const Site> sites) { return euclidean_distances(sites, sites); }

DistanceBundle DistanceBundle::select(std::span<const std::size_t> row_idx,
                                      std::span<const std::size_t> col_idx) const {
  auto pick = [&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    if (m.size() == 0) return M{};
    M out(static_cast<Eigen::Index>(row_idx.size()), static_cast<Eigen::Index>(col_idx.size()));
    for (std::size_t i = 0; i < row_idx.size(); ++i)
      for (std::size_t j = 0; j < col_idx.size(); ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            m(static_cast<Eigen::Index>(row_idx[i]), static_cast<Eigen::Index>(col_idx[j]));
    return out;
  };
  DistanceBundle out;
  out.H = pick(H);
  out.flow_conn = pick(flow_conn);
  out.A = pick(A);
  out.B = pick(B);
  out.D = pick(D);
  out.W = pick(W);
  out.has_stream = has_stream;
  return out;
}

DistanceBundle make_bundle(const StreamNetwork& network, std::span<const Site> rows, std::span<const Site> cols) {
  for (const auto& s : rows) network.validate_site(s);
  for (const auto& s : cols) network.validate_site(s);
  auto hydro = hydrologic_distances(network, rows, cols);
  DistanceBundle b;
  b.D = euclidean_distances(rows, cols);
  if (network.has_afv()) b.W = spatial_weights(network, rows, cols, hydro.flow_conn);
  b.H = std::move(hydro.H);
  b.flow_conn = std::move(hydro.flow_conn);
  b.A = std::move(hydro.A);
  b.B = std::move(hydro.B);
  b.has_stream = true;
  return b;
}

DistanceBundle make_bundle(const StreamNetwork& network) {
  return make_bundle(network, network.sites(), network.sites());
}

DistanceBundle make_euclidean_bundle(std::span<const Site> rows, std::span<const Site> cols) {
  DistanceBundle b;
  b.D = euclidean_distances(rows, cols);
  return b;
}

}  // namespace ssnst
