#pragma once

#include <random>
#include <vector>

#include "ssnst/network.hpp"

namespace fixture {

// Fig. 1: r5 outlet, r3 and r4 drain into r5, r1 and r2 into r3.
inline std::vector<ssnst::Segment> fig1_segments() {
  return {{1, 3, 3000.0, 17.5, 17.5},
          {2, 3, 3000.0, 8.5, 8.5},
          {3, 5, 3000.0, 8.0, 34.0},
          {4, 5, 2000.0, 5.5, 5.5},
          {5, std::nullopt, 4000.0, 9.0, 48.5}};
}

inline std::vector<ssnst::Site> fig1_sites() {
  return {{1, 1, 9000.0, -1500.0, 8500.0},
          {2, 2, 8000.0, 1200.0, 7700.0},
          {3, 3, 5500.0, 0.0, 5500.0},
          {4, 5, 1500.0, 0.0, 1500.0}};
}

inline ssnst::StreamNetwork fig1_network() {
  auto net = ssnst::StreamNetwork::build(fig1_segments(), fig1_sites());
  net.set_afv(ssnst::compute_afv(net, ssnst::Weighting::watershed_area).afv);
  return net;
}

struct IntTree {
  std::vector<ssnst::Segment> segments;
  std::vector<ssnst::Site> sites;
  std::vector<int> base;  // updist of each segment's downstream node
};

/// Random tree with integer lengths and integer site positions, so a 1 m
/// lattice walk measures distances exactly.
inline IntTree int_tree(int n_seg, int n_sites, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  IntTree t;
  std::uniform_int_distribution<int> len(50, 400);
  std::uniform_real_distribution<double> area(1.0, 20.0), xy(0.0, 1000.0);
  for (int i = 0; i < n_seg; ++i) {
    ssnst::Segment s;
    s.id = i + 1;
    s.length = len(rng);
    s.seg_contrib_area = area(rng);
    int b = 0;
    if (i > 0) {
      const int p = std::uniform_int_distribution<int>(0, i - 1)(rng);
      s.parent_id = p + 1;
      b = t.base[p] + static_cast<int>(t.segments[p].length);
    }
    t.base.push_back(b);
    t.segments.push_back(s);
  }
  for (int i = 0; i < n_seg; ++i) t.segments[i].watershed_area = t.segments[i].seg_contrib_area;
  for (int i = n_seg - 1; i > 0; --i) t.segments[*t.segments[i].parent_id - 1].watershed_area += t.segments[i].watershed_area;
  std::uniform_int_distribution<int> pick(0, n_seg - 1);
  for (int k = 0; k < n_sites; ++k) {
    const int s = pick(rng);
    const int off = std::uniform_int_distribution<int>(0, static_cast<int>(t.segments[s].length))(rng);
    t.sites.push_back({k + 1, s + 1, static_cast<double>(t.base[s] + off), xy(rng), xy(rng)});
  }
  return t;
}

}  // namespace fixture
