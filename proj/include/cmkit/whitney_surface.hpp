#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/cones.hpp"
#include "cmkit/invariant_set.hpp"

namespace cmkit {

struct ChartFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResidualTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GraphObstruction : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Chart around one set point, rotated so the center bundle at the chart
// center is the horizontal coordinate plane. Captured set points carry their
// horizontal/vertical coordinates and the slope of their own center plane,
// which has to stay a Lipschitz-1 graph over the horizontal disk.
struct AdaptedChart {
  Vec center;
  Mat rotation;  // columns: base_dim horizontal, then vertical
  double radius = 0.0;
  int base_dim = 0;
  Topology topology;

  std::vector<int> captured;     // indices into the sampled set
  std::vector<Vec> local_u;      // horizontal coordinates, base_dim
  std::vector<Vec> local_h;      // vertical coordinates
  std::vector<Mat> local_slope;  // tangent-plane slopes, vertical x base_dim

  int shrinks = 0;  // how often the radius had to back off
};

// Hermite moving-least-squares graph over one chart's horizontal disk.
struct LocalGraph {
  std::function<Vec(const Vec&)> height;  // u -> vertical coordinates
  std::function<Mat(const Vec&)> slope;   // u -> vertical x base_dim
  double whitney_residual = 0.0;  // max pair quotient |R(x,y)| / |y-x|
  double bandwidth = 0.0;
};

// Glued global surface over the first chart's horizontal plane.
struct FittedSurface {
  std::function<Vec(const Vec&)> evaluate;    // base parameter -> ambient
  std::function<Mat(const Vec&)> tangent_at;  // base parameter -> frame
  std::vector<Vec> mesh;                      // parameter nodes
  Vec base_point;
  Mat base_frame;  // ambient x base_dim
  int base_dim = 0;
  Topology topology;
  std::vector<AdaptedChart> charts;
  std::vector<int> glue_order;
};

std::vector<AdaptedChart> build_adapted_charts(const SampledInvariantSet& K,
                                               const SplittingFrame& split,
                                               double target_radius);

LocalGraph fit_local_graph(const AdaptedChart& chart,
                           double residual_tol = 0.5);

FittedSurface glue_charts(const std::vector<AdaptedChart>& charts,
                          const std::vector<LocalGraph>& graphs,
                          const std::vector<int>& order = {});

}  // namespace cmkit
