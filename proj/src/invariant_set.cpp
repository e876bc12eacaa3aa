#include "cmkit/invariant_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>

namespace cmkit {
namespace {

// Dense occupancy grid over the domain at one resolution.
struct Grid {
  Box domain;
  Topology topology;
  double h = 0.0;
  std::vector<long long> n;  // cells per axis
  std::vector<char> occupied;

  Grid(const Box& dom, const Topology& topo, double res)
      : domain(dom), topology(topo), h(res) {
    const int d = dom.dim();
    n.resize(d);
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) {
      n[i] = std::max<long long>(
          1, static_cast<long long>(
                 std::ceil((dom.hi[i] - dom.lo[i]) / res - 1e-9)));
      total *= static_cast<std::size_t>(n[i]);
    }
    occupied.assign(total, 0);
  }

  std::size_t linear(const std::vector<long long>& idx) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      k = k * static_cast<std::size_t>(n[i]) + static_cast<std::size_t>(idx[i]);
    }
    return k;
  }

  // Wraps circle axes, returns false for indices outside line axes.
  bool canonical(std::vector<long long>& idx) const {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (topology[i] == CoordKind::Circle) {
        idx[i] = ((idx[i] % n[i]) + n[i]) % n[i];
      } else if (idx[i] < 0 || idx[i] >= n[i]) {
        return false;
      }
    }
    return true;
  }

  Vec center(const std::vector<long long>& idx) const {
    Vec c(static_cast<int>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      c[static_cast<int>(i)] = domain.lo[i] + (idx[i] + 0.5) * h;
    }
    return c;
  }

};

}  // namespace

bool BoxCover::contains(const Vec& x, double slack) const {
  for (const Vec& c : centers) {
    bool inside = true;
    for (int i = 0; i < x.size(); ++i) {
      double d = x[i] - c[i];
      if (i < static_cast<int>(topology.size()) &&
          topology[i] == CoordKind::Circle) {
        d = d - std::round(d);
      }
      if (std::abs(d) > h / 2 + slack) {
        inside = false;
        break;
      }
    }
    if (inside) return true;
  }
  return false;
}

SampledInvariantSet maximal_invariant(const SmoothMap& map, const Box& U,
                                      double resolution, int sweeps) {
  if (!map.has_inverse()) throw MissingInverse("need both orbit directions");
  const int d = U.dim();
  const Topology topo =
      map.topology.empty() ? all_lines(d) : map.topology;

  // Dyadic ladder anchored at the target resolution.
  double width = 0.0;
  for (int i = 0; i < d; ++i) width = std::max(width, U.hi[i] - U.lo[i]);
  int levels = 0;
  while (resolution * std::ldexp(1.0, levels + 1) < width / 2.0) ++levels;

  const SmoothMap back = reversed(map);

  std::vector<std::vector<long long>> alive;
  std::unique_ptr<Grid> grid;

  for (int lev = levels; lev >= 0; --lev) {
    const double h = resolution * std::ldexp(1.0, lev);
    auto next = std::make_unique<Grid>(U, topo, h);

    std::vector<std::vector<long long>> cells;
    if (!grid) {
      // full grid at the coarsest level
      std::vector<long long> idx(d, 0);
      while (true) {
        cells.push_back(idx);
        int axis = 0;
        while (axis < d) {
          if (++idx[axis] < next->n[axis]) break;
          idx[axis] = 0;
          ++axis;
        }
        if (axis == d) break;
      }
    } else {
      // children of the surviving cells
      for (const auto& c : alive) {
        std::vector<long long> child(d);
        for (long long bits = 0; bits < (1LL << d); ++bits) {
          bool ok = true;
          for (int j = 0; j < d; ++j) {
            child[j] = 2 * c[j] + ((bits >> j) & 1);
            if (child[j] >= next->n[j]) ok = false;
          }
          if (ok) cells.push_back(child);
        }
      }
    }
    for (const auto& c : cells) next->occupied[next->linear(c)] = 1;

    // Inflated image of a cell meets the occupied set?
    auto image_meets = [&](const SmoothMap& m, const std::vector<long long>& c) {
      const Vec ctr = next->center(c);
      const Mat J = jacobian_at(m, ctr);
      Vec margin(d);
      for (int i = 0; i < d; ++i) {
        margin[i] = 1.5 * J.row(i).cwiseAbs().sum() * (h / 2.0);
      }
      // corners + center
      for (long long bits = 0; bits <= (1LL << d); ++bits) {
        Vec x = ctr;
        if (bits < (1LL << d)) {
          for (int j = 0; j < d; ++j) {
            x[j] += ((bits >> j) & 1) ? h / 2.0 : -h / 2.0;
          }
        }
        Vec y;
        try {
          y = evaluate(m, x, 1);
        } catch (const NonFinite&) {
          continue;
        }
        std::vector<long long> lo(d), hi(d), cur(d);
        for (int i = 0; i < d; ++i) {
          lo[i] = static_cast<long long>(
              std::floor((y[i] - margin[i] - U.lo[i]) / h));
          hi[i] = static_cast<long long>(
              std::floor((y[i] + margin[i] - U.lo[i]) / h));
        }
        cur = lo;
        while (true) {
          std::vector<long long> probe = cur;
          if (next->canonical(probe) && next->occupied[next->linear(probe)]) {
            return true;
          }
          int axis = 0;
          while (axis < d) {
            if (++cur[axis] <= hi[axis]) break;
            cur[axis] = lo[axis];
            ++axis;
          }
          if (axis == d) break;
        }
      }
      return false;
    };

    // Discard sweeps to a fixed point (at most `sweeps` rounds).
    for (int round = 0; round < sweeps; ++round) {
      std::vector<char> keep(cells.size(), 0);
      parallel_for(cells.size(), [&](std::size_t i) {
        keep[i] = image_meets(map, cells[i]) && image_meets(back, cells[i]);
      });
      std::vector<std::vector<long long>> kept;
      kept.reserve(cells.size());
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (keep[i]) {
          kept.push_back(cells[i]);
        } else {
          next->occupied[next->linear(cells[i])] = 0;
        }
      }
      const bool stable = kept.size() == cells.size();
      cells = std::move(kept);
      if (cells.empty()) throw EmptyResult("all cells discarded");
      if (stable) break;
    }

    alive = std::move(cells);
    grid = std::move(next);
  }

  SampledInvariantSet out;
  out.topology = topo;
  BoxCover cover;
  cover.h = resolution;
  cover.domain = U;
  cover.topology = topo;
  for (const auto& c : alive) {
    Vec ctr = grid->center(c);
    out.points.push_back(ctr);
    cover.centers.push_back(ctr);
  }
  out.box_cover = std::move(cover);

  std::vector<double> resid(out.points.size(), 0.0);
  parallel_for(out.points.size(), [&](std::size_t i) {
    const Vec img = wrap_point(evaluate(map, out.points[i], 1), topo);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& p : out.points) {
      best = std::min(best, distance(p, img, topo));
    }
    resid[i] = best;
  });
  for (double r : resid) {
    out.invariance_residual = std::max(out.invariance_residual, r);
  }
  return out;
}

std::vector<PeriodicOrbit> find_periodic(const SmoothMap& map, int period,
                                         const std::vector<Vec>& seeds) {
  if (period < 1) throw std::invalid_argument("period must be positive");
  const int n = map.dim;
  std::vector<PeriodicOrbit> orbits;

  auto power_jacobian = [&](const Vec& x) {
    Mat J = Mat::Identity(n, n);
    Vec y = x;
    for (int k = 0; k < period; ++k) {
      J = jacobian_at(map, y) * J;
      y = evaluate(map, y, 1);
    }
    return J;
  };

  for (const Vec& seed : seeds) {
    Vec x = seed;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      Vec fx;
      Mat Jp;
      try {
        fx = evaluate(map, x, period);
        Jp = power_jacobian(x);
      } catch (const NonFinite&) {
        break;
      }
      Vec g = wrap_delta(fx - x, map.topology);
      // attainable residual scales with the orbit's derivative product
      const double tol = (1e-13 + 1e-15 * Jp.cwiseAbs().rowwise().sum().maxCoeff()) *
                         (1.0 + x.norm());
      if (g.norm() <= tol) {
        converged = true;
        break;
      }
      Mat Jg = Jp - Mat::Identity(n, n);
      Eigen::FullPivLU<Mat> lu(Jg);
      if (!lu.isInvertible()) break;
      Vec step = lu.solve(-g);
      // damped update
      double t = 1.0;
      const double g0 = g.norm();
      for (int halve = 0; halve < 30; ++halve) {
        Vec trial = wrap_point(x + t * step, map.topology);
        double gt;
        try {
          gt = wrap_delta(evaluate(map, trial, period) - trial, map.topology)
                   .norm();
        } catch (const NonFinite&) {
          t /= 2;
          continue;
        }
        if (gt < g0) {
          x = trial;
          break;
        }
        t /= 2;
        if (halve == 29) it = 60;  // stuck
      }
    }
    if (!converged) continue;

    // assemble the orbit and canonicalize
    std::vector<Vec> pts;
    Vec y = x;
    for (int k = 0; k < period; ++k) {
      pts.push_back(wrap_point(y, map.topology));
      y = evaluate(map, y, 1);
    }

    bool duplicate = false;
    for (const auto& o : orbits) {
      for (const Vec& p : o.points) {
        if (distance(p, pts.front(), map.topology) < 1e-6) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) break;
    }
    if (duplicate) continue;

    PeriodicOrbit orb;
    // minimal period: first return to the start
    orb.minimal_period = period;
    for (int k = 1; k < period; ++k) {
      if (distance(pts[static_cast<std::size_t>(k)], pts.front(),
                   map.topology) < 1e-9) {
        orb.minimal_period = k;
        break;
      }
    }
    // rotate so the lexicographically smallest point leads
    int lead = 0;
    for (int k = 1; k < period; ++k) {
      for (int i = 0; i < n; ++i) {
        const double a = pts[static_cast<std::size_t>(k)][i];
        const double b = pts[static_cast<std::size_t>(lead)][i];
        if (a < b - 1e-12) {
          lead = k;
          break;
        }
        if (a > b + 1e-12) break;
      }
    }
    std::rotate(pts.begin(), pts.begin() + lead, pts.end());
    orb.points = pts;

    Eigen::EigenSolver<Mat> eig(power_jacobian(pts.front()));
    orb.multipliers = eig.eigenvalues();
    int stable = 0, unstable = 0, neutral = 0;
    for (int i = 0; i < n; ++i) {
      const double m = std::abs(orb.multipliers[i]);
      if (m < 1.0 - 1e-6) {
        ++stable;
      } else if (m > 1.0 + 1e-6) {
        ++unstable;
      } else {
        ++neutral;
      }
    }
    if (neutral > 0) {
      orb.type = "nonhyperbolic";
    } else if (stable == 0) {
      orb.type = "repelling";
    } else if (unstable == 0) {
      orb.type = "attracting";
    } else {
      orb.type = "saddle";
    }
    orbits.push_back(std::move(orb));
  }
  return orbits;
}

TangentSetEstimate estimate_tangent_set(const SampledInvariantSet& K,
                                        const Vec& z,
                                        std::vector<double> eps_ladder,
                                        double angle_tol_deg) {
  if (eps_ladder.size() < 2) {
    throw std::invalid_argument("ladder needs at least two scales");
  }
  std::sort(eps_ladder.begin(), eps_ladder.end());
  const Topology& topo = K.topology;

  auto ball = [&](double eps) {
    std::vector<Vec> pts;
    for (const Vec& p : K.points) {
      if (distance(p, z, topo) <= eps) pts.push_back(p);
    }
    // deterministic thinning keeps the pair count tractable
    const std::size_t cap = 400;
    if (pts.size() > cap) {
      std::vector<Vec> thin;
      const std::size_t stride = (pts.size() + cap - 1) / cap;
      for (std::size_t i = 0; i < pts.size(); i += stride) {
        thin.push_back(pts[i]);
      }
      pts = std::move(thin);
    }
    return pts;
  };

  auto directions_at = [&](double eps) {
    std::vector<Vec> dirs;
    const auto pts = ball(eps);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        Vec v = wrap_delta(pts[i] - pts[j], topo);
        const double nv = v.norm();
        if (nv < 1e-14) continue;
        dirs.push_back(v / nv);
      }
    }
    return dirs;
  };

  if (ball(eps_ladder.front()).size() < 2) {
    throw TooFewPoints("fewer than two set points in the smallest ball");
  }

  const auto fine = directions_at(eps_ladder[0]);
  const auto coarse = directions_at(eps_ladder[1]);
  const double tol = angle_tol_deg * M_PI / 180.0;

  TangentSetEstimate out;
  out.base = z;
  out.ladder = eps_ladder;
  for (const Vec& v : fine) {
    bool persists = false;
    for (const Vec& w : coarse) {
      if (line_angle(v, w) <= tol) {
        persists = true;
        break;
      }
    }
    if (!persists) continue;
    // cluster at one degree to keep the list small
    bool fresh = true;
    for (const Vec& d : out.directions) {
      if (line_angle(v, d) <= M_PI / 180.0) {
        fresh = false;
        break;
      }
    }
    if (fresh) {
      out.directions.push_back(v);
      out.directions.push_back(Vec(-v));
    }
  }
  return out;
}

}  // namespace cmkit
