#include "cmkit/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace cmkit {
namespace {

// Uniform grid hash over a point cloud, rebuilt per level. Answers
// "does any cloud point lie in this closed axis-aligned box" in O(cells).
class PointGrid {
 public:
  PointGrid(const std::vector<Vec>& pts, double cell) : pts_(pts), cell_(cell) {
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
      cells_[key(pts[i])].push_back(i);
    }
  }

  bool box_meets(const Vec& lo, const Vec& hi) const {
    const int n = static_cast<int>(lo.size());
    std::vector<long long> klo(n), khi(n), cur(n);
    for (int i = 0; i < n; ++i) {
      klo[i] = static_cast<long long>(std::floor(lo[i] / cell_));
      khi[i] = static_cast<long long>(std::floor(hi[i] / cell_));
    }
    cur = klo;
    while (true) {
      auto it = cells_.find(cur);
      if (it != cells_.end()) {
        for (int idx : it->second) {
          const Vec& p = pts_[idx];
          bool inside = true;
          for (int i = 0; i < n; ++i) {
            if (p[i] < lo[i] || p[i] > hi[i]) {
              inside = false;
              break;
            }
          }
          if (inside) return true;
        }
      }
      int axis = 0;
      while (axis < n) {
        if (++cur[axis] <= khi[axis]) break;
        cur[axis] = klo[axis];
        ++axis;
      }
      if (axis == n) return false;
    }
  }

 private:
  std::vector<long long> key(const Vec& p) const {
    std::vector<long long> k(p.size());
    for (int i = 0; i < p.size(); ++i) {
      k[i] = static_cast<long long>(std::floor(p[i] / cell_));
    }
    return k;
  }

  const std::vector<Vec>& pts_;
  double cell_;
  std::map<std::vector<long long>, std::vector<int>> cells_;
};

// Closed triple of the cube (level, idx): [ (idx-1)*s, (idx+2)*s ] per axis.
bool triple_meets(const PointGrid& grid, const std::vector<long long>& idx,
                  double s) {
  const int n = static_cast<int>(idx.size());
  Vec lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    lo[i] = static_cast<double>(idx[i] - 1) * s;
    hi[i] = static_cast<double>(idx[i] + 2) * s;
  }
  return grid.box_meets(lo, hi);
}

// Per-axis bump profile: 1 on [0, half], quintic falloff to 0 at half*(1+margin).
constexpr double kSupportMargin = 0.1;

double axis_profile(double t, double half) {
  const double w = half * kSupportMargin;
  if (t <= half) return 1.0;
  if (t >= half + w) return 0.0;
  return 1.0 - smoothstep5((t - half) / w);
}

double axis_profile_deriv(double t, double half) {
  const double w = half * kSupportMargin;
  if (t <= half || t >= half + w) return 0.0;
  return -smoothstep5_deriv((t - half) / w) / w;
}

// Sum of amplitude-weighted cube bumps and its gradient. Levels are visited
// in ascending order and neighbour offsets lexicographically, so the
// floating-point sum is reproducible.
class CubeField {
 public:
  CubeField(DyadicCubeCover cover)
      : cover_(std::move(cover)), index_(cover_) {}

  double value(const Vec& x) const {
    double acc = 0.0;
    for (int ci : index_.cubes_supporting(x, kSupportMargin)) {
      acc += amplitude(cover_.cubes[ci].level) * bump(cover_.cubes[ci], x);
    }
    return acc;
  }

  Vec gradient(const Vec& x) const {
    Vec g = Vec::Zero(cover_.dim);
    for (int ci : index_.cubes_supporting(x, kSupportMargin)) {
      g += amplitude(cover_.cubes[ci].level) * bump_grad(cover_.cubes[ci], x);
    }
    return g;
  }

  const DyadicCubeCover& cover() const { return cover_; }

 private:
  static double amplitude(int level) { return std::pow(0.25, level); }

  double bump(const DyadicCube& c, const Vec& x) const {
    const double s = DyadicCubeCover::side(c.level);
    double v = 1.0;
    for (int i = 0; i < cover_.dim; ++i) {
      const double ctr = (static_cast<double>(c.index[i]) + 0.5) * s;
      v *= axis_profile(std::abs(x[i] - ctr), 0.5 * s);
      if (v == 0.0) return 0.0;
    }
    return v;
  }

  Vec bump_grad(const DyadicCube& c, const Vec& x) const {
    const double s = DyadicCubeCover::side(c.level);
    const int n = cover_.dim;
    Vec prof(n), dprof(n);
    for (int i = 0; i < n; ++i) {
      const double ctr = (static_cast<double>(c.index[i]) + 0.5) * s;
      const double d = x[i] - ctr;
      prof[i] = axis_profile(std::abs(d), 0.5 * s);
      dprof[i] = axis_profile_deriv(std::abs(d), 0.5 * s);
      if (d < 0) dprof[i] = -dprof[i];
    }
    Vec g = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      double term = dprof[i];
      for (int j = 0; j < n; ++j) {
        if (j != i) term *= prof[j];
      }
      g[i] = term;
    }
    return g;
  }

  DyadicCubeCover cover_;
  CoverIndex index_;
};

// Sup of the separator gradient scales like 1/d(K,L); the constant is an
// implementation property measured once per dimension on dense grids.
double impl_constant(int dim) {
  static const double kC[] = {0.0, 120.0, 200.0, 400.0};
  if (dim >= 1 && dim <= 3) return kC[dim];
  return kC[3] * std::ldexp(1.0, dim - 3);
}

}  // namespace

Vec DyadicCubeCover::center(const DyadicCube& c) const {
  const double s = side(c.level);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    v[i] = (static_cast<double>(c.index[i]) + 0.5) * s;
  }
  return v;
}

Vec DyadicCubeCover::corner_lo(const DyadicCube& c) const {
  const double s = side(c.level);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = static_cast<double>(c.index[i]) * s;
  return v;
}

CoverIndex::CoverIndex(const DyadicCubeCover& cover) : cover_(&cover) {
  for (int i = 0; i < static_cast<int>(cover.cubes.size()); ++i) {
    by_level_[cover.cubes[i].level][cover.cubes[i].index] = i;
  }
  for (const auto& kv : by_level_) levels_.push_back(kv.first);
}

std::vector<int> CoverIndex::cubes_containing(const Vec& x) const {
  return cubes_supporting(x, 0.0);
}

std::vector<int> CoverIndex::cubes_supporting(const Vec& x,
                                              double margin) const {
  std::vector<int> out;
  const int n = cover_->dim;
  for (int level : levels_) {
    const double s = DyadicCubeCover::side(level);
    const auto& cubes = by_level_.at(level);
    std::vector<long long> base(n);
    for (int i = 0; i < n; ++i) {
      base[i] = static_cast<long long>(std::floor(x[i] / s));
    }
    std::vector<long long> idx(n);
    std::vector<int> off(n, -1);
    while (true) {
      for (int i = 0; i < n; ++i) idx[i] = base[i] + off[i];
      auto it = cubes.find(idx);
      if (it != cubes.end()) {
        bool inside = true;
        const double pad = margin * 0.5 * s;
        for (int i = 0; i < n && inside; ++i) {
          const double lo = static_cast<double>(idx[i]) * s - pad;
          const double hi = static_cast<double>(idx[i] + 1) * s + pad;
          inside = x[i] >= lo && x[i] <= hi;
        }
        if (inside) out.push_back(it->second);
      }
      int axis = 0;
      while (axis < n) {
        if (++off[axis] <= 1) break;
        off[axis] = -1;
        ++axis;
      }
      if (axis == n) break;
    }
  }
  return out;
}

DyadicCubeCover build_cover(const std::vector<Vec>& K, const Box& box,
                            int max_level) {
  if (max_level > 40) throw LevelOverflow("max_level exceeds 40");
  if (K.empty()) throw std::invalid_argument("empty point cloud");
  const int n = box.dim();

  DyadicCubeCover cover;
  cover.dim = n;
  cover.max_level = max_level;
  cover.box = box;

  // Level-0 candidates: unit cubes intersecting the box.
  std::vector<std::vector<long long>> frontier;
  {
    std::vector<long long> lo(n), hi(n), cur(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = static_cast<long long>(std::floor(box.lo[i]));
      hi[i] = static_cast<long long>(std::ceil(box.hi[i])) - 1;
      if (hi[i] < lo[i]) hi[i] = lo[i];
    }
    cur = lo;
    while (true) {
      frontier.push_back(cur);
      int axis = 0;
      while (axis < n) {
        if (++cur[axis] <= hi[axis]) break;
        cur[axis] = lo[axis];
        ++axis;
      }
      if (axis == n) break;
    }
  }

  // Descend level by level: a candidate whose closed triple avoids K is
  // selected; otherwise its children become candidates at the next level.
  for (int level = 0; level <= max_level && !frontier.empty(); ++level) {
    const double s = DyadicCubeCover::side(level);
    PointGrid grid(K, s);
    std::vector<char> meets(frontier.size());
    parallel_for(frontier.size(), [&](std::size_t i) {
      meets[i] = triple_meets(grid, frontier[i], s) ? 1 : 0;
    });
    std::vector<std::vector<long long>> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (!meets[i]) {
        cover.cubes.push_back({level, frontier[i]});
      } else if (level < max_level) {
        std::vector<long long> child(n);
        for (long long bits = 0; bits < (1LL << n); ++bits) {
          for (int j = 0; j < n; ++j) {
            child[j] = 2 * frontier[i][j] + ((bits >> j) & 1);
          }
          next.push_back(child);
        }
      }
    }
    frontier = std::move(next);
  }
  return cover;
}

double cloud_distance(const std::vector<Vec>& cloud, const Vec& x,
                      int* nearest) {
  double best = std::numeric_limits<double>::infinity();
  int best_i = -1;
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const double d = (cloud[i] - x).norm();
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  if (nearest) *nearest = best_i;
  return best;
}

SmoothSeparator build_separator(const std::vector<Vec>& K,
                                const std::vector<Vec>& L, const Box& box) {
  if (K.empty() || L.empty()) throw std::invalid_argument("empty point cloud");
  const int n = box.dim();

  double gap = std::numeric_limits<double>::infinity();
  for (const Vec& p : K) gap = std::min(gap, cloud_distance(L, p));
  if (gap <= 0.0) throw SetsIntersect("point clouds intersect");

  // Collar width well below the separation scale.
  const double target = gap / (100.0 * 3.0 * std::sqrt(double(n)));
  int max_level = 6;
  while (DyadicCubeCover::side(max_level) > target && max_level < 24) {
    ++max_level;
  }

  auto phi_K = std::make_shared<CubeField>(build_cover(K, box, max_level));
  auto phi_L = std::make_shared<CubeField>(build_cover(L, box, max_level));

  Box domain = box;
  auto clamp_to = [domain](const Vec& x) {
    Vec y = x;
    for (int i = 0; i < y.size(); ++i) {
      y[i] = std::clamp(y[i], domain.lo[i], domain.hi[i]);
    }
    return y;
  };

  SmoothSeparator sep;
  sep.K_ref = K;
  sep.L_ref = L;
  sep.derivative_bound = impl_constant(n) / gap;
  sep.eval = [phi_K, phi_L, clamp_to](const Vec& x) {
    const Vec y = clamp_to(x);
    const double a = phi_K->value(y);
    const double b = phi_L->value(y);
    if (a + b == 0.0) return 0.5;
    return a / (a + b);
  };
  sep.grad = [phi_K, phi_L, clamp_to, n](const Vec& x) {
    const Vec y = clamp_to(x);
    const double a = phi_K->value(y);
    const double b = phi_L->value(y);
    if (a + b == 0.0) return Vec(Vec::Zero(n));
    const Vec ga = phi_K->gradient(y);
    const Vec gb = phi_L->gradient(y);
    return Vec((ga * b - a * gb) / ((a + b) * (a + b)));
  };

  // Dense-sample check of the advertised bound before returning.
  auto rng = rng_stream(12021, "separator-bound");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < 100000; ++s) {
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = domain.lo[i] + unif(rng) * (domain.hi[i] - domain.lo[i]);
    }
    worst = std::max(worst, sep.grad(x).norm());
  }
  if (worst > sep.derivative_bound) {
    throw std::runtime_error("separator gradient exceeds declared bound: sup*d=" +
                             std::to_string(worst * gap) + " vs C=" +
                             std::to_string(impl_constant(n)));
  }
  return sep;
}

SmoothSeparator bump_from_distance(const std::vector<Vec>& K, double inner,
                                   double outer) {
  if (!(inner > 0.0) || inner >= outer) {
    throw BadRadii("need 0 < inner < outer");
  }
  if (K.empty()) throw std::invalid_argument("empty point cloud");
  auto pts = std::make_shared<std::vector<Vec>>(K);
  const double width = outer - inner;
  const int n = static_cast<int>(K.front().size());

  SmoothSeparator sep;
  sep.K_ref = K;
  sep.derivative_bound = 4.0 / width;
  sep.eval = [pts, inner, width](const Vec& x) {
    const double d = cloud_distance(*pts, x);
    if (d <= inner) return 1.0;
    if (d >= inner + width) return 0.0;
    return 1.0 - smoothstep5((d - inner) / width);
  };
  sep.grad = [pts, inner, width, n](const Vec& x) {
    int ni = 0;
    const double d = cloud_distance(*pts, x, &ni);
    if (d <= inner || d >= inner + width || d == 0.0) {
      return Vec(Vec::Zero(n));
    }
    const Vec dir = (x - (*pts)[ni]) / d;
    return Vec(-smoothstep5_deriv((d - inner) / width) / width * dir);
  };
  return sep;
}

}  // namespace cmkit
