#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/io.hpp"
#include "ssnst/kernels.hpp"
#include "ssnst/network.hpp"
#include "ssnst/temporal.hpp"

namespace ssnst {

enum class Topology { file, random_tree, grid_euclidean };
Topology parse_topology(std::string_view s);

struct MissingnessPlan {
  double random_fraction = 0.0;  // per cell, on the sites that are not held out
  int block_sites = 0;           // sites whose whole series is held out
};

struct SimScenario {
  Topology topology = Topology::grid_euclidean;
  std::string network_path;  // topology == file
  std::string sites_path;
  int segments = 12;  // random_tree
  int sites = 30;
  int grid_side = 8;  // grid_euclidean
  double grid_extent = 0.3;
  Weighting weighting = Weighting::watershed_area;

  CovarianceSpec covariance;  // zero sills are allowed here
  TemporalSpec temporal;
  std::vector<double> temporal_params{0.6};
  int phi_covariates = 0;  // site-constant z1..zJ for var_covariate

  std::vector<double> beta{-1.0, 2.0};  // intercept, then x1.. ~ N(0, 1) per cell
  int T = 10;
  MissingnessPlan missing;
};

struct SimResult {
  std::vector<Segment> segments;  // empty without a network
  std::vector<Site> sites;
  ObservationTable observations;  // missingness applied
  Eigen::MatrixXd truth;          // complete S x T response
  std::vector<int> heldout_sites;
  PredictionSites prediction_sites;  // the held-out sites with covariates
  Eigen::MatrixXd phi;               // transition matrix used
};

/// Random tree with uniform attachment: lengths U(500, 5000) m, contributing
/// areas LogNormal(2, 0.5) km^2, sites placed uniformly on random segments.
std::pair<std::vector<Segment>, std::vector<Site>> random_tree(int segments, int sites, std::mt19937_64& rng);

/// side x side regular grid on [0, extent]^2, ids 1..side^2.
std::vector<Site> grid_sites(int side, double extent);

/// r_1 ~ N(0, kappa1 V), r_t = Phi r_{t-1} + e_t with e_t ~ N(0, V); S x T.
Eigen::MatrixXd simulate_var_errors(const Eigen::MatrixXd& V, const Eigen::MatrixXd& phi, double kappa1, int T,
                                    std::mt19937_64& rng);

SimResult simulate(const SimScenario& scenario, std::uint64_t seed);

/// Observed cells moved to a held-out set; depends on (seed, fraction) only.
BoolMatrix holdout_mask(const BoolMatrix& observed, double fraction, std::uint64_t seed);

}  // namespace ssnst
