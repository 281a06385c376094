#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ssnst/error.hpp"
#include "ssnst/temporal.hpp"

using namespace ssnst;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

// Dense separable covariance entry by entry, time-major stacking.
Eigen::MatrixXd dense_separable(const Eigen::MatrixXd& V, double phi, int T) {
  const auto S = V.rows();
  Eigen::MatrixXd C(S * T, S * T);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < T; ++u)
      for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index j = 0; j < S; ++j)
          C(t * S + i, u * S + j) = std::pow(phi, std::abs(t - u)) / (1.0 - phi * phi) * V(i, j);
  return C;
}

std::vector<std::vector<std::size_t>> fig1_neighbors(NeighborMode mode) {
  const auto net = fixture::fig1_network();
  const auto d = hydrologic_distances(net);
  std::vector<double> updist;
  std::vector<int> ids;
  for (const auto& s : net.sites()) {
    updist.push_back(s.updist);
    ids.push_back(s.site_id);
  }
  return case3_neighbors(d.H, d.flow_conn, updist, ids, mode);
}

Eigen::Array<bool, 4, 4> support(const std::vector<std::vector<std::size_t>>& nb) {
  Eigen::Array<bool, 4, 4> m = Eigen::Array<bool, 4, 4>::Constant(false);
  for (int i = 0; i < 4; ++i) {
    m(i, i) = true;
    for (auto j : nb[i]) m(i, static_cast<int>(j)) = true;
  }
  return m;
}

}  // namespace

TEST_CASE("transition matrices per case") {
  PhiContext ctx;
  ctx.sites = 3;
  ctx.site_ids = {1, 2, 3};
  const double phi06[] = {0.6};
  const auto P1 = build_phi({TemporalCase::ar}, phi06, ctx);
  CHECK(P1.isApprox(0.6 * Eigen::MatrixXd::Identity(3, 3)));
  CHECK(spectral_radius(P1) == doctest::Approx(0.6).epsilon(1e-12));

  ctx.covariates = Eigen::MatrixXd::Random(3, 2);
  const double zero[] = {0.0, 0.0, 0.0};
  const auto P2 = build_phi({TemporalCase::var_covariate, Link::logit_01}, zero, ctx);
  CHECK(P2.diagonal().isApprox(Eigen::VectorXd::Constant(3, 0.5)));

  const double site[] = {0.1, -0.5, 0.9};
  const auto P3 = build_phi({TemporalCase::var_sitewise}, site, ctx);
  CHECK(P3(1, 1) == -0.5);

  const double unstable[] = {1.0};
  CHECK(code_of([&] { build_phi({TemporalCase::ar}, unstable, ctx); }) == ErrorCode::UnstablePhi);
  CHECK(code_of([&] { build_phi({TemporalCase::var_sitewise}, phi06, ctx); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("Case 3 support on Fig. 1") {
  Eigen::Array<bool, 4, 4> two;
  two << 1, 1, 1, 0,  //
      1, 1, 1, 0,     //
      1, 1, 1, 0,     //
      0, 1, 1, 1;
  CHECK((support(fig1_neighbors(NeighborMode::two_nearest)) == two).all());

  Eigen::Array<bool, 4, 4> up;
  up << 1, 0, 0, 0,  //
      0, 1, 0, 0,    //
      1, 1, 1, 0,    //
      0, 1, 1, 1;
  CHECK((support(fig1_neighbors(NeighborMode::upstream_only)) == up).all());

  PhiContext ctx;
  ctx.sites = 4;
  ctx.site_ids = {1, 2, 3, 4};
  ctx.neighbors = fig1_neighbors(NeighborMode::two_nearest);
  CHECK(phi_param_count({TemporalCase::var_2nn}, ctx) == 12);
  std::vector<double> p(12, 0.1);
  const auto P = build_phi({TemporalCase::var_2nn}, p, ctx);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK((P(i, j) != 0.0) == two(i, j));
}

TEST_CASE("spectral radius") {
  CHECK(spectral_radius(0.5 * Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(0.5).epsilon(1e-12));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 0.2;
  d(1, 1) = -0.9;
  CHECK(spectral_radius(d) == doctest::Approx(0.9).epsilon(1e-12));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.3, 0.3), pos(0.0, 0.3);
  for (int n : {10, 40}) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      M(i, i) = u(rng);
      M(i, (i + 1) % n) = u(rng);
      M(i, (i + 3) % n) = u(rng);
    }
    const double dense = Eigen::EigenSolver<Eigen::MatrixXd>(M).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(spectral_radius(M) == doctest::Approx(dense).epsilon(1e-8));
  }
  // beyond the dense cutoff: non-negative three-entry rows, dominant root real
  const int n = 100;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    M(i, i) = pos(rng);
    M(i, (i + 1) % n) = pos(rng);
    M(i, (i + 7) % n) = pos(rng);
  }
  const double dense = Eigen::EigenSolver<Eigen::MatrixXd>(M).eigenvalues().cwiseAbs().maxCoeff();
  CHECK(spectral_radius(M) == doctest::Approx(dense).epsilon(1e-8));
}

TEST_CASE("AR(1) covariance") {
  const auto C = ar1_covariance(0.6, 4);
  CHECK(C(0, 0) == doctest::Approx(1.5625).epsilon(1e-14));
  CHECK(C(0, 1) == doctest::Approx(0.9375).epsilon(1e-14));
  CHECK(ar1_covariance(0.0, 5).isIdentity(0.0));
  CHECK(code_of([] { ar1_covariance(1.0, 3); }) == ErrorCode::NonStationaryPhi);
  CHECK(code_of([] { ar1_precision(-1.2, 3); }) == ErrorCode::NonStationaryPhi);
}

TEST_CASE("AR(1) covariance against simulated stationary paths") {
  const int T = 6, n = 10'000'000;
  const double phi = 0.8, sd1 = 1.0 / std::sqrt(1.0 - phi * phi);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(T, T);
  Eigen::VectorXd x(T);
  for (int k = 0; k < n; ++k) {
    x(0) = sd1 * z(rng);
    for (int t = 1; t < T; ++t) x(t) = phi * x(t - 1) + z(rng);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  acc /= n;
  const auto C = ar1_covariance(phi, T);
  CHECK((acc - C).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("AR(1) precision") {
  const auto Q = ar1_precision(0.5, 3);
  CHECK(Q.diag(0) == 1.0);
  CHECK(Q.diag(1) == 1.25);
  CHECK(Q.diag(2) == 1.0);
  CHECK(Q.off(0) == -0.5);
  CHECK(Q.off(1) == -0.5);
  CHECK((Q.dense() * ar1_covariance(0.5, 3) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ar1_precision(0.0, 6).dense().isIdentity(0.0));
  CHECK((ar1_precision(0.95, 50).dense() * ar1_covariance(0.95, 50) - Eigen::MatrixXd::Identity(50, 50))
            .cwiseAbs()
            .maxCoeff() < 1e-9);
  // against dense inversion
  const auto C = ar1_covariance(0.3, 7);
  CHECK((ar1_precision(0.3, 7).dense() - C.inverse()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tridiagonal identity over a grid of phi and T") {
  for (double phi : {-0.95, -0.6, 0.0, 0.6, 0.95})
    for (int T : {2, 10, 200}) {
      const Eigen::MatrixXd P = ar1_precision(phi, T).dense() * ar1_covariance(phi, T);
      CHECK((P - Eigen::MatrixXd::Identity(T, T)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(ar1_precision(phi, T).log_det() == doctest::Approx(std::log(ar1_precision(phi, T).dense().determinant())));
    }
}

TEST_CASE("separable precision apply") {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd v = Eigen::VectorXd::Random(12);
  CHECK(separable_precision_apply(assert_psd(Eigen::MatrixXd::Identity(4, 4)), 0.0, 3, v).isApprox(v));

  const auto V = oracle::random_spd(4, rng);
  const auto dense = dense_separable(V, 0.6, 3);
  const Eigen::VectorXd expect = dense.inverse() * v;
  const Eigen::VectorXd got = separable_precision_apply(assert_psd(V), 0.6, 3, v);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::VectorXd scaled = separable_precision_apply(assert_psd(2.5 * V), 0.6, 3, v);
  CHECK((scaled - got / 2.5).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(code_of([&] { separable_precision_apply(assert_psd(V), 0.6, 4, v); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("separable precision apply agrees with the dense inverse for S, T up to 8") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int S = 1; S <= 8; ++S)
    for (int T = 1; T <= 8; ++T) {
      const auto V = oracle::random_spd(S, rng);
      const double phi = u(rng);
      const Eigen::VectorXd v = Eigen::VectorXd::Random(S * T);
      const Eigen::VectorXd expect = dense_separable(V, phi, T).inverse() * v;
      CHECK((separable_precision_apply(assert_psd(V), phi, T, v) - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("VAR(1) block covariance") {
  std::mt19937_64 rng(5);
  const auto V = oracle::random_spd(3, rng);
  CHECK(var1_block_covariance(V, 0.6, 1).isApprox(V / 0.64));
  const auto B0 = var1_block_covariance(V, 0.0, 3);
  CHECK(B0.block(0, 3, 3, 3).isZero(0.0));
  CHECK(B0.block(3, 3, 3, 3).isApprox(V));

  const auto B = var1_block_covariance(V, 0.6, 4);
  CHECK((B - dense_separable(V, 0.6, 4)).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd inv = kron(ar1_precision(0.6, 4).dense(), V.inverse());
  CHECK((B.inverse() - inv).cwiseAbs().maxCoeff() < 1e-9);
  // the same covariance follows from propagating the recursion
  const auto R = oracle::var_joint_covariance(V, 0.6 * Eigen::MatrixXd::Identity(3, 3), 1.0 / 0.64, 4);
  CHECK((B - R).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(code_of([&] { var1_block_covariance(V, 0.5, 10, 20); }) == ErrorCode::DenseCapExceeded);
}

TEST_CASE("link ranges and Case 3 zeros") {
  for (double x = -800.0; x <= 800.0; x += 0.5) {
    const double a = apply_link(Link::logit_01, x), b = apply_link(Link::tanh_pm1, x);
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(b > -1.0);
    CHECK(b < 1.0);
  }
  CHECK(apply_link(Link::tanh_pm1, 0.3) == doctest::Approx((std::exp(0.3) - 1) / (std::exp(0.3) + 1)).epsilon(1e-14));

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = fixture::int_tree(10, 12, seed);
    auto net = StreamNetwork::build(t.segments, t.sites);
    const auto d = hydrologic_distances(net);
    std::vector<double> updist;
    std::vector<int> ids;
    for (const auto& s : t.sites) {
      updist.push_back(s.updist);
      ids.push_back(s.site_id);
    }
    PhiContext ctx;
    ctx.sites = t.sites.size();
    ctx.site_ids = ids;
    ctx.neighbors = case3_neighbors(d.H, d.flow_conn, updist, ids, NeighborMode::two_nearest);
    std::vector<double> p(phi_param_count({TemporalCase::var_2nn}, ctx));
    for (auto& x : p) x = u(rng);
    const auto P = build_phi({TemporalCase::var_2nn}, p, ctx);
    for (std::size_t i = 0; i < ctx.sites; ++i) {
      CHECK(ctx.neighbors[i].size() == 2);
      for (std::size_t j = 0; j < ctx.sites; ++j) {
        const bool allowed = i == j || std::find(ctx.neighbors[i].begin(), ctx.neighbors[i].end(), j) != ctx.neighbors[i].end();
        if (!allowed) CHECK(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == 0.0);
      }
    }
  }
}
