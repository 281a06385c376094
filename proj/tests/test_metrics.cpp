#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ssnst/error.hpp"
#include "ssnst/metrics.hpp"

using namespace ssnst;

TEST_CASE("RMSPE") {
  const std::vector<double> y{1.0, -2.0, 3.5};
  CHECK(rmspe(y, y) == 0.0);
  const std::vector<double> off{3.0, 0.0, 5.5};
  CHECK(rmspe(off, y) == doctest::Approx(2.0).epsilon(1e-15));
  const std::vector<double> a{0.0, 0.0}, b{3.0, 4.0};
  CHECK(rmspe(a, b) == doctest::Approx(std::sqrt(12.5)));
  try {
    rmspe(std::vector<double>{}, std::vector<double>{});
    FAIL("expected EmptyHoldout");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyHoldout);
  }
}

TEST_CASE("sample CRPS") {
  const std::vector<double> point(10, 2.0);
  CHECK(crps_cell(point, 5.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(crps_cell(point, 2.0) == 0.0);

  std::mt19937_64 rng(61);
  std::normal_distribution<double> z;
  std::vector<double> s(4000);
  double sum = 0.0, sq = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    for (auto& v : s) v = z(rng);
    const double c = crps_cell(s, 0.0);
    sum += c;
    sq += c * c;
  }
  const double mean = sum / reps, se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(oracle::gaussian_crps(0.0, 1.0, 0.0) == doctest::Approx(0.2337).epsilon(1e-3));
  CHECK(std::abs(mean - oracle::gaussian_crps(0.0, 1.0, 0.0)) < 4 * se + 1e-3);

  // shifted forecast and truth
  std::vector<double> shifted = s;
  for (auto& v : shifted) v += 7.25;
  CHECK(crps_cell(shifted, 7.25 + 0.3) == doctest::Approx(crps_cell(s, 0.3)).epsilon(1e-10));

  // all-pairs estimator on a tiny sample, written out
  const std::vector<double> tiny{0.0, 1.0, 3.0};
  const double mae = (2.0 + 1.0 + 1.0) / 3.0;
  const double pairs = 2.0 * (1.0 + 3.0 + 2.0) / 6.0;  // distinct ordered pairs
  CHECK(crps_cell(tiny, 2.0) == doctest::Approx(mae - 0.5 * pairs).epsilon(1e-15));

  Eigen::MatrixXd draws(3, 2);
  draws << 0.0, 2.0, 1.0, 2.0, 3.0, 2.0;
  const std::vector<double> truth{2.0, 5.0};
  CHECK(crps_sample(draws, truth) == doctest::Approx(0.5 * (crps_cell(tiny, 2.0) + 3.0)));
  try {
    crps_cell(std::vector<double>{1.0}, 0.0);
    FAIL("expected TooFewDraws");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewDraws);
  }
}

TEST_CASE("coverage with the exact binomial test") {
  const std::vector<double> lo(20, -1.0), hi(20, 1.0), inside(20, 0.0), outside(20, 2.0);
  const auto all = coverage(lo, hi, inside);
  CHECK(all.proportion == 1.0);
  CHECK(all.covered == 20);
  CHECK(all.p_value == doctest::Approx(oracle::binom_two_sided(20, 20, 0.95)).epsilon(1e-12));
  CHECK(all.p_value == doctest::Approx(2 * std::pow(0.95, 20)).epsilon(1e-12));
  CHECK(all.category == CoverageCategory::consistent);

  const auto none = coverage(lo, hi, outside);
  CHECK(none.proportion == 0.0);
  CHECK(none.category == CoverageCategory::inconsistent);

  for (int n : {10, 37, 100})
    for (int k = 0; k <= n; ++k)
      CHECK(binomial_two_sided_p(static_cast<std::size_t>(k), static_cast<std::size_t>(n), 0.9) ==
            doctest::Approx(oracle::binom_two_sided(k, n, 0.9)).epsilon(1e-10));

  CHECK(coverage_category(0.10) == CoverageCategory::consistent);
  CHECK(coverage_category(0.0999) == CoverageCategory::borderline);
  CHECK(coverage_category(0.05) == CoverageCategory::borderline);
  CHECK(coverage_category(0.0499) == CoverageCategory::inconsistent);

  // joint monotone transform
  std::mt19937_64 rng(62);
  std::normal_distribution<double> z;
  std::vector<double> l(50), u(50), t(50), el(50), eu(50), et(50);
  for (int i = 0; i < 50; ++i) {
    l[i] = z(rng);
    u[i] = l[i] + 1.0;
    t[i] = z(rng);
    el[i] = std::exp(l[i]);
    eu[i] = std::exp(u[i]);
    et[i] = std::exp(t[i]);
  }
  CHECK(coverage(l, u, t).proportion == coverage(el, eu, et).proportion);

  try {
    coverage(std::vector<double>{}, std::vector<double>{}, std::vector<double>{});
    FAIL("expected EmptyHoldout");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyHoldout);
  }
}

TEST_CASE("calibrated intervals are usually judged consistent") {
  std::mt19937_64 rng(63);
  std::normal_distribution<double> z;
  int consistent = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> lo(100), hi(100), y(100);
    for (int i = 0; i < 100; ++i) {
      const double m = z(rng);
      lo[i] = m - 1.959964;
      hi[i] = m + 1.959964;
      y[i] = m + z(rng);
    }
    if (coverage(lo, hi, y).category == CoverageCategory::consistent) ++consistent;
  }
  CHECK(consistent >= 80);
}

TEST_CASE("WAIC") {
  Eigen::MatrixXd ll(2, 2);
  ll << -1.0, -2.0, -3.0, -0.5;
  const double lppd = std::log((std::exp(-1.0) + std::exp(-3.0)) / 2) + std::log((std::exp(-2.0) + std::exp(-0.5)) / 2);
  const double p = 1.0 + 0.5625;
  const auto w = waic(ll);
  CHECK(std::abs(w.lppd - lppd) < 1e-12);
  CHECK(std::abs(w.p_waic - p) < 1e-12);
  CHECK(std::abs(w.waic + 2 * (lppd - p)) < 1e-12);
  CHECK(std::abs(w.pointwise.sum() - w.waic) < 1e-12);

  const Eigen::MatrixXd one = ll.topRows(1);
  const auto w1 = waic(one);
  CHECK(w1.degenerate);
  CHECK(w1.p_waic == 0.0);
  CHECK(w1.waic == doctest::Approx(-2 * one.sum()));

  Eigen::MatrixXd twice(4, 2);
  twice << ll, ll;
  CHECK(waic(twice).waic == doctest::Approx(w.waic).epsilon(1e-14));

  Eigen::MatrixXd better = ll.array() + 0.7;
  CHECK(waic(better).waic < w.waic);

  // large magnitudes do not overflow
  Eigen::MatrixXd big = ll.array() - 1e4;
  CHECK(std::isfinite(waic(big).waic));
  CHECK(waic(big).lppd == doctest::Approx(w.lppd - 2e4));
}

TEST_CASE("ranking regression coefficients by MCSE") {
  const std::vector<std::string> names{"beta[b]", "beta[a]", "beta[c]"};
  const std::vector<double> same{0.1, 0.1, 0.1};
  const auto r = mcse_rank(names, same);
  CHECK(r.rank == std::vector<int>{2, 1, 3});
  CHECK(r.mean_rank == 2.0);

  const std::vector<double> one_big{0.1, 0.2, 0.1};
  CHECK(mcse_rank(names, one_big).rank[1] == 3);

  std::mt19937_64 rng(64);
  std::normal_distribution<double> z;
  PosteriorDraws d;
  d.names = {"beta[intercept]", "beta[x1]", "sigma0"};
  for (int c = 0; c < 4; ++c) {
    ChainDraws ch;
    ch.params.resize(2000, 3);
    for (Eigen::Index i = 0; i < 2000; ++i) {
      ch.params(i, 0) = z(rng);
      ch.params(i, 1) = 3.0 * z(rng);
      ch.params(i, 2) = 1.0 + 0.1 * z(rng);
    }
    d.chains.push_back(ch);
  }
  const auto rk = mcse_rank(d);
  CHECK(rk.names.size() == 2);
  CHECK(rk.rank == std::vector<int>{1, 2});
  CHECK(rk.mcse[0] == doctest::Approx(1.0 / std::sqrt(8000.0)).epsilon(0.1));
  CHECK(rk.mcse[1] == doctest::Approx(3.0 / std::sqrt(8000.0)).epsilon(0.1));
}

TEST_CASE("metrics are pure") {
  std::mt19937_64 rng(65);
  std::normal_distribution<double> z;
  Eigen::MatrixXd draws(100, 5);
  for (auto& v : draws.reshaped()) v = z(rng);
  const std::vector<double> t{0.1, 0.2, -0.3, 1.0, 0.0};
  CHECK(crps_sample(draws, t) == crps_sample(draws, t));
  CHECK(waic(draws).waic == waic(draws).waic);
}
