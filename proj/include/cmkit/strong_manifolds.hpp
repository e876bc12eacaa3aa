#pragma once

#include <array>
#include <string>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/cones.hpp"
#include "cmkit/dynamics.hpp"
#include "cmkit/invariant_set.hpp"

namespace cmkit {

struct SplittingMissing : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Local strong-unstable leaf through one base point, grown by pushing a
// backward-seeded disk forward along the base orbit.
struct StrongLeafPatch {
  Vec base;
  int fiber_dim = 1;
  double radius = 0.0;

  // fiber_dim == 1: arclength-parameterized polyline, params[i] is the
  // signed arclength of points[i] and exactly one entry is 0 (the base).
  std::vector<double> params;
  std::vector<Vec> points;

  // fiber_dim == 2: points carry a polar parameter grid and a triangulation.
  std::vector<Vec> param_uv;
  std::vector<std::array<int, 3>> triangles;

  int seed_depth = 0;        // backward steps actually used for the seed
  double mu = 0.0;           // measured backward contraction along the patch
  double center_rate = 0.0;  // center expansion the margin is checked against
  bool rate_certified = false;

  // Index of the parameter-0 node (fiber_dim == 1).
  int base_index = 0;
};

struct ConnectionPair {
  Vec other;             // the set point found on the leaf
  double leaf_distance;  // distance from the point to the patch
  double parameter;      // leaf parameter of the closest patch point
  bool criterion;        // backward pair-criterion verdict for (base, other)
};

struct ConnectionBaseVerdict {
  Vec base;
  std::string verdict;  // no_connection_at_resolution | connections_found |
                        // leaf_failed
  std::vector<ConnectionPair> pairs;
};

struct ConnectionReport {
  double rho = 0.0;
  double delta = 0.0;
  double resolution = 0.0;  // sampling scale every verdict is qualified by
  int bases_checked = 0;
  bool any_connection = false;
  std::vector<ConnectionBaseVerdict> entries;
};

struct ConnectionOptions {
  int max_bases = 64;
  double cone_opening = 1.0;  // opening of the cross-check cone about F
  double eps_factor = 1.5;    // pair-criterion closeness, as a multiple of rho
  // Window [first, last] of backward steps. The default stays shallow: the
  // cross-check runs on sampled points whose offset from the true set is
  // amplified by every backward step.
  int criterion_first = 0;
  int criterion_last = 1;
  int nodes_per_side = 300;
};

StrongLeafPatch grow_unstable_leaf(const SmoothMap& map,
                                   const SampledInvariantSet& K,
                                   const SplittingFrame& split, const Vec& x,
                                   double radius, int nodes_per_side = 300);

ConnectionReport detect_connection(const SmoothMap& map,
                                   const SampledInvariantSet& K,
                                   const SplittingFrame& split, double radius,
                                   double delta,
                                   const ConnectionOptions& opt = {});

// True iff the backward iterates of the pair stay eps-close over steps
// [m, N] and every sampled chord between them lies in the cone field.
bool check_pair_criterion(const SmoothMap& map, const Vec& x, const Vec& y,
                          const ConeField& cone, double eps, int m, int N);

}  // namespace cmkit
