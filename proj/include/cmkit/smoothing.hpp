#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "cmkit/common.hpp"

namespace cmkit {

struct SetsIntersect : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LevelOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadRadii : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed dyadic cube: product of [index[i]*2^-level, (index[i]+1)*2^-level].
struct DyadicCube {
  int level = 0;
  std::vector<long long> index;
};

// Whitney-type decomposition of box \ K. Selection rule: the tripled cube
// is disjoint from K, and for level > 0 the parent's tripled cube meets K.
// Cubes finer than max_level are dropped; their union is the K collar.
struct DyadicCubeCover {
  int dim = 0;
  int max_level = 0;
  Box box;
  std::vector<DyadicCube> cubes;

  static double side(int level) { return std::ldexp(1.0, -level); }
  Vec center(const DyadicCube& c) const;
  Vec corner_lo(const DyadicCube& c) const;
};

// Point-location index over a cover. Supports per the bump construction
// extend 5% of a side beyond each cube, so only face/corner neighbours at
// each stored level can contain a query point.
class CoverIndex {
 public:
  explicit CoverIndex(const DyadicCubeCover& cover);

  // Cubes whose closed body contains x.
  std::vector<int> cubes_containing(const Vec& x) const;
  // Cubes whose enlarged support (1 + margin scaling) contains x.
  std::vector<int> cubes_supporting(const Vec& x, double margin) const;
  const DyadicCubeCover& cover() const { return *cover_; }

 private:
  const DyadicCubeCover* cover_;
  std::vector<int> levels_;
  std::map<int, std::map<std::vector<long long>, int>> by_level_;
};

struct SmoothSeparator {
  std::function<double(const Vec&)> eval;
  std::function<Vec(const Vec&)> grad;
  double derivative_bound = 0.0;
  std::vector<Vec> K_ref;
  std::vector<Vec> L_ref;
};

DyadicCubeCover build_cover(const std::vector<Vec>& K, const Box& box,
                            int max_level);

// phi = phi_K / (phi_K + phi_L) with phi_K, phi_L the dyadic cube sums.
// Zero exactly on K, one exactly on L, values in [0,1].
SmoothSeparator build_separator(const std::vector<Vec>& K,
                                const std::vector<Vec>& L, const Box& box);

// 1 on {d(.,K) <= inner}, 0 on {d(.,K) >= outer}, monotone in the distance,
// gradient below 4/(outer - inner).
SmoothSeparator bump_from_distance(const std::vector<Vec>& K, double inner,
                                   double outer);

// Euclidean distance to a point cloud and the index of the nearest point.
double cloud_distance(const std::vector<Vec>& cloud, const Vec& x,
                      int* nearest = nullptr);

}  // namespace cmkit
