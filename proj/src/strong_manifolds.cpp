#include "cmkit/strong_manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmkit {
namespace {

int nearest_point(const std::vector<Vec>& pts, const Vec& x,
                  const Topology& topo) {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = distance(pts[i], x, topo);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// A base is in reach of the splitting when it sits within a few cover cells
// of a frame, within the frame cloud's own sampling gap, or at worst within
// a modest fraction of the cloud's extent (outer-cover fringe points). Only
// gross mismatch is an error; the expensive scans run lazily.
int locate_frame(const SplittingFrame& split, const Vec& x,
                 const Topology& topo, double cover_h) {
  const int si = nearest_point(split.points, x, topo);
  if (si < 0) throw SplittingMissing("splitting frame is empty");
  const double d = distance(split.points[static_cast<std::size_t>(si)], x, topo);
  if (d <= std::max(3.0 * cover_h, 1e-6)) return si;
  double gap = 0.0, diam = 0.0;
  for (std::size_t i = 0; i < split.points.size(); ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < split.points.size(); ++j) {
      if (j == i) continue;
      const double dij = distance(split.points[i], split.points[j], topo);
      nn = std::min(nn, dij);
      diam = std::max(diam, dij);
    }
    if (std::isfinite(nn)) gap = std::max(gap, nn);
  }
  if (d <= std::max(2.0 * gap, 0.15 * diam)) return si;
  throw SplittingMissing("no splitting frame near the requested base");
}

// Backward orbit capped at the domain box and at a neighborhood of the set:
// a true base orbit stays inside the invariant set, so drifting out of reach
// only ever signals numerical divergence of the inverse iteration.
std::vector<Vec> backward_orbit(const SmoothMap& map, const Vec& x, int n_max,
                                const Box* box,
                                const std::vector<Vec>& set_points,
                                double reach) {
  std::vector<Vec> orbit = {wrap_point(x, map.topology)};
  for (int n = 0; n < n_max; ++n) {
    Vec prev;
    try {
      prev = evaluate(map, orbit.back(), -1);
    } catch (const NonFinite&) {
      break;
    }
    if (box && !box->contains(prev)) break;
    if (!set_points.empty()) {
      double d = std::numeric_limits<double>::infinity();
      for (const Vec& p : set_points) {
        d = std::min(d, distance(prev, p, map.topology));
      }
      if (d > reach) break;
    }
    orbit.push_back(prev);
  }
  return orbit;
}

// Reach of the sampled set: a few cover cells, or the cloud's own gap.
double set_reach(const SampledInvariantSet& K, const Topology& topo) {
  if (K.box_cover) return 3.0 * K.box_cover->h;
  double gap = 0.0;
  for (std::size_t i = 0; i < K.points.size(); ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K.points.size(); ++j) {
      if (j != i) nn = std::min(nn, distance(K.points[i], K.points[j], topo));
    }
    if (std::isfinite(nn)) gap = std::max(gap, nn);
  }
  return std::max(2.0 * gap, 1e-6);
}

// Resample a polyline to roughly uniform spacing, keeping a node exactly at
// the base. Circle coordinates interpolate through the short representative.
void remesh_polyline(std::vector<Vec>& pts, int& base_idx,
                     const Topology& topo, double spacing,
                     double max_half_len) {
  const std::size_t n = pts.size();
  if (n < 2) return;
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    s[i] = s[i - 1] + distance(pts[i], pts[i - 1], topo);
  }
  const double s0 = s[static_cast<std::size_t>(base_idx)];
  const double len_lo = std::min(s0, max_half_len);
  const double len_hi = std::min(s.back() - s0, max_half_len);

  // targets arrive in increasing order, so the segment cursor only advances
  std::size_t cursor = 1;
  auto at_arclength = [&](double target) {
    std::size_t& i = cursor;
    while (i + 1 < n && s[i] < target) ++i;
    const double seg = s[i] - s[i - 1];
    const double t = seg > 0 ? (target - s[i - 1]) / seg : 0.0;
    Vec d = wrap_delta(pts[i] - pts[i - 1], topo);
    return wrap_point(pts[i - 1] + t * d, topo);
  };

  std::vector<Vec> out;
  const int k_lo = std::max(1, static_cast<int>(std::lround(len_lo / spacing)));
  const int k_hi = std::max(1, static_cast<int>(std::lround(len_hi / spacing)));
  for (int j = -k_lo; j <= k_hi; ++j) {
    double target;
    if (j < 0) {
      target = s0 + len_lo * j / k_lo;
    } else if (j > 0) {
      target = s0 + len_hi * j / k_hi;
    } else {
      out.push_back(pts[static_cast<std::size_t>(base_idx)]);
      continue;
    }
    out.push_back(at_arclength(target));
  }
  base_idx = k_lo;
  pts = std::move(out);
}

// Worst-case backward contraction exponent measured on patch samples. The
// walk stops once distances stop shrinking: past that point round-off error
// amplified by the inverse dominates what is being measured.
double measure_mu(const SmoothMap& map, const Vec& base,
                  const std::vector<Vec>& samples, int n_check,
                  const Box* box) {
  double worst = std::numeric_limits<double>::infinity();
  for (const Vec& y : samples) {
    Vec cx = base, cy = y;
    const double d0 = distance(cx, cy, map.topology);
    if (d0 < 1e-13) continue;
    double best_d = d0;
    int best_n = 0;
    for (int n = 1; n <= n_check; ++n) {
      try {
        cx = evaluate(map, cx, -1);
        cy = evaluate(map, cy, -1);
      } catch (const NonFinite&) {
        break;
      }
      if (box && (!box->contains(cx) || !box->contains(cy))) break;
      const double dn = distance(cx, cy, map.topology);
      if (dn < 0.999 * best_d) {
        best_d = dn;
        best_n = n;
      } else if (dn > 1.5 * best_d) {
        break;
      }
      if (dn < 1e-14) break;
    }
    if (best_n >= 2 && best_d > 0) {
      worst = std::min(worst, std::pow(d0 / best_d, 1.0 / best_n));
    }
  }
  return std::isfinite(worst) ? worst : 0.0;
}

StrongLeafPatch grow_leaf_1d(const SmoothMap& map,
                             const SampledInvariantSet& K,
                             const SplittingFrame& split, const Vec& x,
                             double rho, int nodes_per_side) {
  const Topology& topo = map.topology;
  const Box* box = K.box_cover ? &K.box_cover->domain : nullptr;
  const double cover_h = K.box_cover ? K.box_cover->h : 0.0;

  locate_frame(split, x, topo, cover_h);

  const double mu = split.lambda_F;
  const double g = std::max(1.0, split.lambda_E);
  int n_target = 12;
  if (mu > 1.01 * g) {
    n_target = std::min(
        60, static_cast<int>(std::ceil(std::log(1e8) / std::log(mu / g))));
  }
  if (box && !box->contains(wrap_point(x, topo))) {
    throw OrbitEscape("base point lies outside the domain");
  }
  // A base that loses its backward orbit right away (a fringe sample, or a
  // violently expanding inverse) still gets a patch: the seeding rule
  // degenerates to a flat disk of radius rho at the base itself.
  const auto orbit = backward_orbit(map, x, n_target, box, K.points,
                                    set_reach(K, topo));
  const int n_eff = static_cast<int>(orbit.size()) - 1;

  const double spacing = rho / nodes_per_side;
  std::vector<Vec> pts;
  int base_idx = 0;

  // the seed can come up short when the local stretch undershoots the
  // certified rate; one corrective redo is enough in practice
  double overseed = 4.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const Vec& xb = orbit.back();
    const int sj = nearest_point(split.points, xb, topo);
    Vec dir = split.F_frames[static_cast<std::size_t>(sj)].col(0).normalized();
    const double r0 = overseed * rho * std::pow(mu, -n_eff);

    pts.clear();
    const int seed_nodes = 9;
    for (int j = -seed_nodes; j <= seed_nodes; ++j) {
      pts.push_back(wrap_point(xb + (r0 * j / seed_nodes) * dir, topo));
    }
    base_idx = seed_nodes;

    for (int k = n_eff; k >= 1; --k) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = evaluate(map, pts[i], 1);
      }
      pts[static_cast<std::size_t>(base_idx)] =
          orbit[static_cast<std::size_t>(k - 1)];
      // arclength-uniform mesh at each scale keeps the interpolation error
      // from compounding through the expansion
      double side = 0;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        side += distance(pts[i], pts[i - 1], topo);
      }
      remesh_polyline(pts, base_idx, topo,
                      std::max(1e-15, std::min(spacing, side / 18.0)),
                      2.5 * rho);
    }

    std::vector<double> s(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      s[i] = s[i - 1] + distance(pts[i], pts[i - 1], topo);
    }
    const double lo = s[static_cast<std::size_t>(base_idx)];
    const double hi = s.back() - lo;
    if (std::min(lo, hi) >= rho || attempt == 1) break;
    overseed *= 1.5 * rho / std::max(1e-12, std::min(lo, hi));
  }

  remesh_polyline(pts, base_idx, topo, spacing, rho);

  StrongLeafPatch patch;
  patch.base = pts[static_cast<std::size_t>(base_idx)];
  patch.fiber_dim = 1;
  patch.radius = rho;
  patch.points = pts;
  patch.base_index = base_idx;
  patch.seed_depth = n_eff;
  patch.params.assign(pts.size(), 0.0);
  for (std::size_t i = static_cast<std::size_t>(base_idx) + 1; i < pts.size();
       ++i) {
    patch.params[i] = patch.params[i - 1] + distance(pts[i], pts[i - 1], topo);
  }
  for (int i = base_idx - 1; i >= 0; --i) {
    const std::size_t u = static_cast<std::size_t>(i);
    patch.params[u] = patch.params[u + 1] - distance(pts[u], pts[u + 1], topo);
  }

  std::vector<Vec> samples;
  for (double frac : {1.0, 0.5, -0.5, -1.0}) {
    const double want = frac * rho;
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (std::abs(patch.params[i] - want) <
          std::abs(patch.params[best] - want)) {
        best = i;
      }
    }
    samples.push_back(pts[best]);
  }
  patch.mu = measure_mu(map, patch.base, samples, std::min(12, n_eff), box);
  patch.center_rate = split.lambda_E;
  patch.rate_certified = patch.mu >= 1.05 * split.lambda_E;
  return patch;
}

StrongLeafPatch grow_leaf_2d(const SmoothMap& map,
                             const SampledInvariantSet& K,
                             const SplittingFrame& split, const Vec& x,
                             double rho) {
  const Topology& topo = map.topology;
  const Box* box = K.box_cover ? &K.box_cover->domain : nullptr;
  const double cover_h = K.box_cover ? K.box_cover->h : 0.0;

  const int si = locate_frame(split, x, topo, cover_h);
  const double mu = split.lambda_F;
  const double g = std::max(1.0, split.lambda_E);
  int n_target = 12;
  if (mu > 1.01 * g) {
    n_target = std::min(
        60, static_cast<int>(std::ceil(std::log(1e8) / std::log(mu / g))));
  }
  if (box && !box->contains(wrap_point(x, topo))) {
    throw OrbitEscape("base point lies outside the domain");
  }
  const auto orbit = backward_orbit(map, x, n_target, box, K.points,
                                    set_reach(K, topo));
  const int n_eff = static_cast<int>(orbit.size()) - 1;

  const Vec& xb = orbit.back();
  const int sj = nearest_point(split.points, xb, topo);
  const Mat Fb = split.F_frames[static_cast<std::size_t>(sj)];
  const double r0 = rho * std::pow(mu, -n_eff);

  StrongLeafPatch patch;
  patch.fiber_dim = 2;
  patch.radius = rho;
  patch.seed_depth = n_eff;

  const int rings = 8, spokes = 16;
  patch.points.push_back(xb);
  for (int r = 1; r <= rings; ++r) {
    for (int a = 0; a < spokes; ++a) {
      const double phi = 2.0 * M_PI * a / spokes;
      Vec uv(2);
      uv << std::cos(phi) * r0 * r / rings, std::sin(phi) * r0 * r / rings;
      patch.points.push_back(
          wrap_point(xb + Fb.col(0) * uv[0] + Fb.col(1) * uv[1], topo));
    }
  }
  for (int a = 0; a < spokes; ++a) {
    patch.triangles.push_back({0, 1 + a, 1 + (a + 1) % spokes});
  }
  for (int r = 1; r < rings; ++r) {
    for (int a = 0; a < spokes; ++a) {
      const int b = (a + 1) % spokes;
      const int i0 = 1 + (r - 1) * spokes;
      const int i1 = 1 + r * spokes;
      patch.triangles.push_back({i0 + a, i1 + a, i1 + b});
      patch.triangles.push_back({i0 + a, i1 + b, i0 + b});
    }
  }

  for (int k = n_eff; k >= 1; --k) {
    for (Vec& p : patch.points) p = evaluate(map, p, 1);
    patch.points[0] = orbit[static_cast<std::size_t>(k - 1)];
  }

  patch.base = patch.points[0];
  patch.base_index = 0;
  const Mat Fx = split.F_frames[static_cast<std::size_t>(si)];
  for (const Vec& p : patch.points) {
    patch.param_uv.push_back(Fx.transpose() *
                             wrap_delta(p - patch.base, topo));
  }

  std::vector<Vec> samples;
  for (int a = 0; a < spokes; a += 4) {
    samples.push_back(patch.points[static_cast<std::size_t>(
        1 + (rings - 1) * spokes + a)]);
  }
  patch.mu = measure_mu(map, patch.base, samples, std::min(12, n_eff), box);
  patch.center_rate = split.lambda_E;
  patch.rate_certified = patch.mu >= 1.05 * split.lambda_E;
  return patch;
}

// Distance from a point to the polyline, and the leaf parameter where the
// minimum is attained.
void point_to_patch(const StrongLeafPatch& patch, const Vec& y,
                    const Topology& topo, double* dist_out,
                    double* param_out) {
  double best = std::numeric_limits<double>::infinity();
  double par = 0.0;
  for (std::size_t i = 0; i + 1 < patch.points.size(); ++i) {
    const Vec u = wrap_delta(y - patch.points[i], topo);
    const Vec v = wrap_delta(patch.points[i + 1] - patch.points[i], topo);
    const double vv = v.squaredNorm();
    const double t =
        vv > 0 ? std::clamp(u.dot(v) / vv, 0.0, 1.0) : 0.0;
    const double d = (u - t * v).norm();
    if (d < best) {
      best = d;
      par = patch.params[i] + t * (patch.params[i + 1] - patch.params[i]);
    }
  }
  *dist_out = best;
  *param_out = par;
}

}  // namespace

StrongLeafPatch grow_unstable_leaf(const SmoothMap& map,
                                   const SampledInvariantSet& K,
                                   const SplittingFrame& split, const Vec& x,
                                   double radius, int nodes_per_side) {
  if (!map.has_inverse()) throw MissingInverse("leaf seeding runs backward");
  const int d_F =
      split.F_frames.empty() ? 0 : static_cast<int>(split.F_frames[0].cols());
  if (d_F == 1) return grow_leaf_1d(map, K, split, x, radius, nodes_per_side);
  if (d_F == 2) return grow_leaf_2d(map, K, split, x, radius);
  throw std::invalid_argument("leaf growth supports fiber dimension 1 or 2");
}

bool check_pair_criterion(const SmoothMap& map, const Vec& x, const Vec& y,
                          const ConeField& cone, double eps, int m, int N) {
  const Topology& topo = map.topology;
  Vec cx = wrap_point(x, topo), cy = wrap_point(y, topo);
  for (int n = 0; n <= N; ++n) {
    if (n >= m) {
      const double d = distance(cx, cy, topo);
      if (d > eps) return false;
      if (d > 1e-14) {
        const Vec u = wrap_delta(cy - cx, topo);
        for (double t : {0.0, 0.5, 1.0}) {
          const Vec p = wrap_point(cx + t * u, topo);
          if (!cone.contains(p, u, 1e-12)) return false;
        }
      }
    }
    if (n == N) break;
    try {
      cx = evaluate(map, cx, -1);
      cy = evaluate(map, cy, -1);
    } catch (const NonFinite&) {
      throw OrbitEscape("backward pair orbit diverged");
    }
  }
  return true;
}

ConnectionReport detect_connection(const SmoothMap& map,
                                   const SampledInvariantSet& K,
                                   const SplittingFrame& split, double radius,
                                   double delta,
                                   const ConnectionOptions& opt) {
  const Topology& topo = map.topology;
  ConnectionReport rep;
  rep.rho = radius;
  rep.delta = delta;
  rep.resolution = K.box_cover ? K.box_cover->h : delta;

  std::vector<Vec> bases;
  const std::size_t stride = std::max<std::size_t>(
      1, (K.points.size() + opt.max_bases - 1) / opt.max_bases);
  for (std::size_t i = 0; i < K.points.size(); i += stride) {
    bases.push_back(K.points[i]);
  }
  rep.bases_checked = static_cast<int>(bases.size());

  ConeField cone;
  cone.base_points = split.points;
  cone.axis_frames = split.F_frames;
  cone.opening.assign(split.points.size(), opt.cone_opening);
  cone.dim = split.F_frames.empty()
                 ? 0
                 : static_cast<int>(split.F_frames[0].cols());
  cone.ambient = map.dim;

  rep.entries.resize(bases.size());
  parallel_for(bases.size(), [&](std::size_t bi) {
    ConnectionBaseVerdict out;
    out.base = bases[bi];
    StrongLeafPatch patch;
    try {
      patch = grow_unstable_leaf(map, K, split, bases[bi], radius,
                                 opt.nodes_per_side);
    } catch (const std::runtime_error&) {
      out.verdict = "leaf_failed";
      rep.entries[bi] = std::move(out);
      return;
    }
    int confirmed = 0;
    for (const Vec& y : K.points) {
      if (distance(y, bases[bi], topo) < 1e-12) continue;
      double d, par;
      point_to_patch(patch, y, topo, &d, &par);
      if (d > delta || std::abs(par) <= 2.0 * delta) continue;
      ConnectionPair pair;
      pair.other = y;
      pair.leaf_distance = d;
      pair.parameter = par;
      bool crit = false;
      try {
        crit = check_pair_criterion(map, bases[bi], y, cone,
                                    opt.eps_factor * radius,
                                    opt.criterion_first, opt.criterion_last);
      } catch (const OrbitEscape&) {
        crit = false;
      }
      pair.criterion = crit;
      if (crit) ++confirmed;
      out.pairs.push_back(std::move(pair));
    }
    out.verdict =
        confirmed > 0 ? "connections_found" : "no_connection_at_resolution";
    rep.entries[bi] = std::move(out);
  });

  for (const auto& e : rep.entries) {
    for (const auto& p : e.pairs) {
      if (p.criterion) rep.any_connection = true;
    }
  }
  return rep;
}

}  // namespace cmkit
