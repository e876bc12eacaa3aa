#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/dynamics.hpp"

namespace cmkit {

struct NoDomination : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OrbitEscape : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Field of cones {u : ||u - P u|| <= beta ||P u||}, P the orthogonal
// projection onto the axis space. Frames interpolate by nearest base point.
struct ConeField {
  std::vector<Vec> base_points;
  std::vector<Mat> axis_frames;  // ambient x dim, orthonormal columns
  std::vector<double> opening;
  int dim = 0;
  int ambient = 0;

  static ConeField constant(const Mat& axis, double beta);

  int nearest_index(const Vec& x) const;
  const Mat& frame_at(const Vec& x) const;
  double opening_at(const Vec& x) const;
  bool contains(const Vec& x, const Vec& u, double slack = 0.0) const;
};

struct SplittingFrame {
  std::vector<Vec> points;
  std::vector<Mat> E_frames;
  std::vector<Mat> F_frames;
  double lambda_E = 0.0;  // fastest per-step expansion seen inside E
  double lambda_F = 0.0;  // slowest per-step expansion seen inside F
  double transient_C = 1.0;
  double invariance_residual = 0.0;  // worst frame transport angle
  double transversality_min = 0.0;   // smallest principal angle E vs F
};

struct SegmentCheck {
  int segment = 0;
  int steps = 0;
  double lambda_n = 0.0;  // n-th root of the worst growth bound
  bool cone_invariant = true;
  bool nondegenerate = true;
};

struct ContractionCertificate {
  std::vector<SegmentCheck> checks;
  double r = 1.0;
  double measured_lambda = 0.0;
  bool pass = false;
};

struct BunchingCertificate {
  std::vector<SegmentCheck> checks;
  double measured_lambda = 0.0;
  bool pass = false;
};

// Dominant d_F-subspace of the derivative cocycle along backward orbits,
// complementary bundle from the inverse cocycle; rates from QR diagonals.
SplittingFrame estimate_splitting(const SmoothMap& map,
                                  const std::vector<Vec>& K, int d_F,
                                  int iters,
                                  const std::optional<Box>& box = std::nullopt);

// Certifies that the cone field is taken strictly inside itself and that
// cone vectors grow at a uniform rate; failures are recorded, not thrown.
ContractionCertificate check_contraction(
    const SmoothMap& map, const ConeField& cone,
    const std::vector<std::vector<Vec>>& orbit_segments, double r, int n0);

// Certifies that vectors outside the pulled-back cone contract faster than
// the worst ratio of growth rates inside the cone.
BunchingCertificate check_bunched(
    const SmoothMap& map, const ConeField& cone,
    const std::vector<std::vector<Vec>>& orbit_segments, int n0);

// Spread of the n-step image cone around its best-fit axis subspace,
// measured as the largest tangent over sampled image directions.
double cone_thinness(const SmoothMap& map, const ConeField& cone, const Vec& x,
                     int n, const std::optional<Box>& box = std::nullopt);

}  // namespace cmkit
