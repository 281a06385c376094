#include "ssnst/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ssnst/error.hpp"

namespace ssnst {

Topology parse_topology(std::string_view s) {
  if (s == "file") return Topology::file;
  if (s == "random_tree") return Topology::random_tree;
  if (s == "grid_euclidean") return Topology::grid_euclidean;
  fail(ErrorCode::ConfigInvalid, "unknown topology '" + std::string(s) + "'");
}

std::pair<std::vector<Segment>, std::vector<Site>> random_tree(int segments, int sites, std::mt19937_64& rng) {
  if (segments < 1 || sites < 1) fail(ErrorCode::ConfigInvalid, "random tree needs segments and sites");
  std::uniform_real_distribution<double> len(500.0, 5000.0);
  std::lognormal_distribution<double> area(2.0, 0.5);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const auto n = static_cast<std::size_t>(segments);

  std::vector<Segment> segs(n);
  std::vector<double> base(n, 0.0);
  std::vector<Eigen::Vector2d> down(n), up(n);
  for (std::size_t i = 0; i < n; ++i) {
    segs[i].id = static_cast<int>(i + 1);
    segs[i].length = len(rng);
    segs[i].seg_contrib_area = area(rng);
    std::size_t parent = 0;
    if (i > 0) {
      parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      segs[i].parent_id = segs[parent].id;
      base[i] = base[parent] + segs[parent].length;
      down[i] = up[parent];
    } else {
      down[i] = Eigen::Vector2d::Zero();
    }
    const double th = angle(rng);
    up[i] = down[i] + segs[i].length * Eigen::Vector2d(std::cos(th), std::sin(th));
  }
  // Children always come after their parent, so one reverse sweep accumulates.
  for (std::size_t i = 0; i < n; ++i) segs[i].watershed_area = segs[i].seg_contrib_area;
  for (std::size_t i = n; i-- > 1;) {
    const auto parent = static_cast<std::size_t>(*segs[i].parent_id - 1);
    segs[parent].watershed_area += segs[i].watershed_area;
  }

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  std::vector<Site> out;
  for (int s = 0; s < sites; ++s) {
    const auto k = pick(rng);
    const double f = frac(rng);
    const Eigen::Vector2d xy = down[k] + f * (up[k] - down[k]);
    out.push_back({s + 1, segs[k].id, base[k] + f * segs[k].length, xy.x(), xy.y()});
  }
  return {std::move(segs), std::move(out)};
}

std::vector<Site> grid_sites(int side, double extent) {
  if (side < 1 || !(extent > 0.0)) fail(ErrorCode::ConfigInvalid, "grid needs a positive side and extent");
  std::vector<Site> out;
  const double step = side > 1 ? extent / (side - 1) : 0.0;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out.push_back({r * side + c + 1, 0, 0.0, c * step, r * step});
  return out;
}

Eigen::MatrixXd simulate_var_errors(const Eigen::MatrixXd& V, const Eigen::MatrixXd& phi, double kappa1, int T,
                                    std::mt19937_64& rng) {
  const auto S = V.rows();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(S, T);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(S, S);
  if (!V.isZero(0.0)) L = assert_psd(V).L();
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd z(S);
    for (Eigen::Index i = 0; i < S; ++i) z(i) = normal(rng);
    if (t == 0)
      r.col(0) = std::sqrt(kappa1) * (L * z);
    else
      r.col(t) = phi * r.col(t - 1) + L * z;
  }
  return r;
}

SimResult simulate(const SimScenario& sc, std::uint64_t seed) {
  if (sc.T < 1) fail(ErrorCode::ConfigInvalid, "T must be positive");
  if (sc.beta.empty()) fail(ErrorCode::ConfigInvalid, "need at least an intercept");
  if (!(sc.missing.random_fraction >= 0.0 && sc.missing.random_fraction < 1.0))
    fail(ErrorCode::ConfigInvalid, "missing fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  SimResult res;

  std::optional<StreamNetwork> net;
  switch (sc.topology) {
    case Topology::file:
      res.segments = read_network_json(sc.network_path);
      res.sites = read_sites_csv(sc.sites_path);
      break;
    case Topology::random_tree:
      std::tie(res.segments, res.sites) = random_tree(sc.segments, sc.sites, rng);
      break;
    case Topology::grid_euclidean:
      res.sites = grid_sites(sc.grid_side, sc.grid_extent);
      break;
  }
  DistanceBundle bundle;
  if (!res.segments.empty()) {
    net = StreamNetwork::build(res.segments, res.sites);
    net->set_afv(compute_afv(*net, sc.weighting).afv);
    bundle = make_bundle(*net);
  } else {
    bundle = make_euclidean_bundle(res.sites, res.sites);
  }

  const auto S = static_cast<Eigen::Index>(res.sites.size());
  const int T = sc.T;
  std::normal_distribution<double> normal;

  PhiContext ctx;
  ctx.sites = static_cast<std::size_t>(S);
  for (const auto& s : res.sites) ctx.site_ids.push_back(s.site_id);
  if (sc.temporal.kind == TemporalCase::var_covariate) {
    ctx.covariates.resize(S, sc.phi_covariates);
    for (Eigen::Index i = 0; i < ctx.covariates.size(); ++i) ctx.covariates.data()[i] = normal(rng);
  }
  if (sc.temporal.kind == TemporalCase::var_2nn) {
    if (!net) fail(ErrorCode::MissingNetwork, "neighbour transition matrices need a stream network");
    std::vector<double> updist;
    for (const auto& s : res.sites) updist.push_back(s.updist);
    ctx.neighbors = case3_neighbors(bundle.H, bundle.flow_conn, updist, ctx.site_ids, sc.temporal.neighbor_mode);
  }
  res.phi = build_phi(sc.temporal, sc.temporal_params, ctx);
  const double kappa1 = sc.temporal.kind == TemporalCase::ar
                            ? 1.0 / (1.0 - sc.temporal_params.at(0) * sc.temporal_params.at(0))
                            : 1.0;

  // Zero sills are allowed when simulating, so the mixture is summed here
  // without the positivity checks of CovarianceSpec::validate.
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(S, S);
  for (const auto& c : sc.covariance.components)
    if (c.sigma2 > 0.0) V += cov_component(c, bundle);
  V.diagonal().array() += sc.covariance.nugget;

  auto& obs = res.observations;
  for (const auto& s : res.sites) obs.site_ids.push_back(s.site_id);
  obs.times.resize(static_cast<std::size_t>(T));
  std::iota(obs.times.begin(), obs.times.end(), 1);
  const auto p = sc.beta.size();
  for (std::size_t j = 1; j < p; ++j) {
    const std::string name = "x" + std::to_string(j);
    obs.covariate_names.push_back(name);
    Eigen::MatrixXd x(S, T);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    obs.covariates[name] = std::move(x);
  }
  for (Eigen::Index j = 0; j < ctx.covariates.cols(); ++j) {
    const std::string name = "z" + std::to_string(j + 1);
    obs.covariate_names.push_back(name);
    obs.covariates[name] = ctx.covariates.col(j).replicate(1, T);
  }

  Eigen::MatrixXd mean = Eigen::MatrixXd::Constant(S, T, sc.beta[0]);
  for (std::size_t j = 1; j < p; ++j) mean += sc.beta[j] * obs.covariates["x" + std::to_string(j)];
  res.truth = mean + simulate_var_errors(V, res.phi, kappa1, T, rng);

  obs.y = res.truth;
  obs.observed = BoolMatrix::Constant(S, T, true);
  if (sc.missing.block_sites < 0 || sc.missing.block_sites > S)
    fail(ErrorCode::ConfigInvalid, "cannot hold out more sites than exist");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(S));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> held(order.begin(), order.begin() + sc.missing.block_sites);
  std::sort(held.begin(), held.end());
  for (auto s : held) {
    obs.observed.row(s).setConstant(false);
    res.heldout_sites.push_back(res.sites[static_cast<std::size_t>(s)].site_id);
  }
  std::bernoulli_distribution drop(sc.missing.random_fraction);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s)
      if (obs.observed(s, t) && drop(rng)) obs.observed(s, t) = false;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s)
      if (!obs.observed(s, t)) obs.y(s, t) = std::numeric_limits<double>::quiet_NaN();

  auto& ps = res.prediction_sites;
  ps.times = obs.times;
  ps.covariate_names = obs.covariate_names;
  for (auto s : held) ps.sites.push_back(res.sites[static_cast<std::size_t>(s)]);
  for (const auto& name : obs.covariate_names) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(held.size()), T);
    for (std::size_t i = 0; i < held.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = obs.covariates[name].row(held[i]);
    ps.covariates[name] = std::move(m);
  }
  return res;
}

BoolMatrix holdout_mask(const BoolMatrix& observed, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 0.5)) fail(ErrorCode::ConfigInvalid, "holdout fraction must lie in [0, 0.5]");
  // one uniform per grid cell whether observed or not, so the selection
  // does not move with the data's own gaps
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BoolMatrix mask = BoolMatrix::Constant(observed.rows(), observed.cols(), false);
  for (Eigen::Index i = 0; i < observed.size(); ++i) {
    const bool pick = u(rng) < fraction;
    mask.data()[i] = pick && observed.data()[i];
  }
  return mask;
}

}  // namespace ssnst
