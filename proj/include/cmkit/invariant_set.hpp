#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/dynamics.hpp"

namespace cmkit {

struct EmptyResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewPoints : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis-aligned cells of side h covering part of a domain box.
struct BoxCover {
  double h = 0.0;
  Box domain;
  Topology topology;
  std::vector<Vec> centers;

  bool contains(const Vec& x, double slack = 0.0) const;
};

struct SampledInvariantSet {
  std::vector<Vec> points;
  std::optional<BoxCover> box_cover;
  double invariance_residual = 0.0;
  Topology topology;
};

struct PeriodicOrbit {
  std::vector<Vec> points;  // x, f(x), ..., f^{p-1}(x)
  Eigen::VectorXcd multipliers;
  std::string type;  // saddle | attracting | repelling | nonhyperbolic
  int minimal_period = 1;
};

struct TangentSetEstimate {
  Vec base;
  std::vector<Vec> directions;  // unit vectors, closed under v -> -v
  std::vector<double> ladder;
};

// Subdivision scheme over a dyadic ladder anchored at the target
// resolution; a cell survives only when its inflated image meets the
// surviving union under the map in both directions.
SampledInvariantSet maximal_invariant(const SmoothMap& map, const Box& U,
                                      double resolution, int sweeps = 8);

// Newton runs on f^p - id from every seed, orbit-deduplicated.
std::vector<PeriodicOrbit> find_periodic(const SmoothMap& map, int period,
                                         const std::vector<Vec>& seeds);

// Pair-direction estimate of the tangent set at z across a scale ladder;
// directions must persist over the two smallest scales to count.
TangentSetEstimate estimate_tangent_set(const SampledInvariantSet& K,
                                        const Vec& z,
                                        std::vector<double> eps_ladder,
                                        double angle_tol_deg = 5.0);

}  // namespace cmkit
