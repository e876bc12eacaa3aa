#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/dynamics.hpp"
#include "cmkit/invariant_set.hpp"

using namespace cmkit;

namespace {

Vec v3(double x, double y, double z) {
  Vec v(3);
  v << x, y, z;
  return v;
}

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

Box box3(double r) {
  Box b;
  b.lo = v3(-r, -r, -r);
  b.hi = v3(r, r, r);
  return b;
}

// Shared across cases; the subdivision run is the expensive part here.
const SampledInvariantSet& horseshoe_cover() {
  static const SampledInvariantSet K = [] {
    auto entry = registry_lookup("henon_x_expand");
    return maximal_invariant(entry.map, entry.working_box, 0.04);
  }();
  return K;
}

std::vector<double> sorted_moduli(const Eigen::VectorXcd& m) {
  std::vector<double> a(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(m[i]);
  std::sort(a.begin(), a.end());
  return a;
}

}  // namespace

TEST_CASE("diagonal model keeps a thin tube around the neutral axis") {
  auto entry = registry_lookup("linear3");
  const double h = 0.05;
  auto K = maximal_invariant(entry.map, box3(1.0), h);

  REQUIRE(!K.points.empty());
  REQUIRE(K.box_cover.has_value());
  CHECK(K.box_cover->h == doctest::Approx(h));

  // the whole neutral segment survives, padded by a few cells of slack in
  // the hyperbolic directions (one-step discards cannot shrink past that)
  double max_x = 0, max_z = 0, lo_y = 1, hi_y = -1, min_norm = 1e9;
  for (const Vec& p : K.points) {
    max_x = std::max(max_x, std::abs(p[0]));
    max_z = std::max(max_z, std::abs(p[2]));
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
    min_norm = std::min(min_norm, p.norm());
  }
  CHECK(max_x <= 3 * h + 1e-9);
  CHECK(max_z <= 2 * h + 1e-9);
  CHECK(lo_y < -0.9);
  CHECK(hi_y > 0.9);
  CHECK(min_norm <= h);

  // the slack ring is also what keeps the one-step residual at ~3h
  CHECK(K.invariance_residual <= 3.05 * h);

  // halving the resolution refines in place
  auto fine = maximal_invariant(entry.map, box3(1.0), h / 2);
  for (const Vec& p : fine.points) {
    CHECK(K.box_cover->contains(p, 1e-9));
  }
}

TEST_CASE("torus automorphism keeps every cell") {
  auto entry = registry_lookup("cat_linear");
  const double h = 1.0 / 16.0;
  auto K = maximal_invariant(entry.map, entry.working_box, h);

  CHECK(K.points.size() == 256);
  // cell centers land back on the half-integer lattice up to h/2 in one axis
  CHECK(K.invariance_residual == doctest::Approx(h / 2).epsilon(1e-12));
}

TEST_CASE("horseshoe cover hugs the plane and catches both fixed points") {
  auto entry = registry_lookup("henon_x_expand");
  const double h = 0.04;
  const auto& K = horseshoe_cover();

  REQUIRE(!K.points.empty());
  double max_x = 0, max_y = 0, max_z = 0;
  for (const Vec& p : K.points) {
    max_x = std::max(max_x, std::abs(p[0]));
    max_y = std::max(max_y, std::abs(p[1]));
    max_z = std::max(max_z, std::abs(p[2]));
  }
  CHECK(max_z <= 2 * h + 1e-9);
  CHECK(max_x <= 1.85);
  CHECK(max_y <= 0.75);

  // both in-plane fixed points, from the closed form
  for (double sgn : {1.0, -1.0}) {
    const double xs = (-0.6 + sgn * std::sqrt(0.36 + 24.0)) / 12.0;
    CHECK(K.box_cover->contains(v3(xs, 0.4 * xs, 0.0), 1e-9));
  }

  // one-step drift of a surviving center is bounded by its own inflation
  double bound = 0;
  for (const Vec& p : K.points) {
    const Mat J = jacobian_at(entry.map, p);
    double m = 0;
    for (int i = 0; i < 3; ++i) {
      m = std::max(m, 1.5 * J.row(i).cwiseAbs().sum() * (h / 2));
    }
    bound = std::max(bound, (1.0 + std::sqrt(3.0)) * m + h * std::sqrt(3.0));
  }
  CHECK(K.invariance_residual <= bound);
}

TEST_CASE("empty box is reported, not silently covered") {
  auto entry = registry_lookup("linear3");
  Box off;
  off.lo = v3(2, 2, 2);
  off.hi = v3(3, 3, 3);
  CHECK_THROWS_AS(maximal_invariant(entry.map, off, 0.25), EmptyResult);
}

TEST_CASE("newton orbits: fixed point with a neutral direction") {
  auto entry = registry_lookup("linear3");
  auto orbits =
      find_periodic(entry.map, 1, {v3(0, 0, 0), v3(0.3, 0.2, 0.1)});

  // the off-axis seed hits the singular normal matrix and is dropped
  REQUIRE(orbits.size() == 1);
  CHECK(orbits[0].points[0].norm() < 1e-12);
  CHECK(orbits[0].type == "nonhyperbolic");
  auto mods = sorted_moduli(orbits[0].multipliers);
  CHECK(mods[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mods[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mods[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("newton orbits: plane saddles from a coarse seed grid") {
  auto entry = registry_lookup("henon_saddle");
  std::vector<Vec> seeds;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      seeds.push_back(v2(-1.5 + 0.75 * i, -0.5 + 0.25 * j));
    }
  }
  auto orbits = find_periodic(entry.map, 1, seeds);
  REQUIRE(orbits.size() == 2);

  const double a = 1.4, b = 0.3;
  const double xs =
      (b - 1.0 + std::sqrt((1.0 - b) * (1.0 - b) + 4.0 * a)) / (2.0 * a);
  bool right_found = false;
  for (const auto& o : orbits) {
    CHECK(o.type == "saddle");
    CHECK(o.minimal_period == 1);
    auto mods = sorted_moduli(o.multipliers);
    CHECK(mods[0] * mods[1] == doctest::Approx(b).epsilon(1e-9));
    if (std::abs(o.points[0][0] - xs) < 1e-10) right_found = true;
  }
  CHECK(right_found);
}

TEST_CASE("newton orbits: quadratic map around a neutral fixed point") {
  auto entry = registry_lookup("curved2");
  std::vector<Vec> seeds;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      seeds.push_back(v2(-0.5 + 0.25 * i, -0.5 + 0.25 * j));
    }
  }
  auto orbits = find_periodic(entry.map, 2, seeds);

  // the neutral direction caps newton's resolution: the residual is cubic
  // in the offset, so stalls within ~2e-6 of the fixed point pass the
  // tolerance and survive the 1e-6 dedup as separate entries
  REQUIRE(!orbits.empty());
  bool exact = false;
  for (const auto& o : orbits) {
    CHECK(o.points[0].norm() < 2e-6);
    CHECK(o.minimal_period == 1);
    CHECK(o.type == "nonhyperbolic");
    if (o.points[0].norm() == 0.0) exact = true;
  }
  CHECK(exact);
}

TEST_CASE("newton orbits: torus three-cycles") {
  auto entry = registry_lookup("cat_linear");
  std::vector<Vec> seeds;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      seeds.push_back(v2((i + 0.5) / 16.0, (j + 0.5) / 16.0));
    }
  }
  auto orbits = find_periodic(entry.map, 3, seeds);

  // |det(A^3 - I)| = 16 period-3 points: the origin plus five 3-cycles
  REQUIRE(orbits.size() == 6);
  const double lam = (3.0 + std::sqrt(5.0)) / 2.0;
  int fixed = 0, cycles = 0;
  for (const auto& o : orbits) {
    auto mods = sorted_moduli(o.multipliers);
    CHECK(mods[0] == doctest::Approx(1.0 / (lam * lam * lam)).epsilon(1e-8));
    CHECK(mods[1] == doctest::Approx(lam * lam * lam).epsilon(1e-8));
    CHECK(o.type == "saddle");
    if (o.minimal_period == 1) ++fixed;
    if (o.minimal_period == 3) ++cycles;
  }
  CHECK(fixed == 1);
  CHECK(cycles == 5);
}

TEST_CASE("pair directions on a parabola cloud align with the axis") {
  SampledInvariantSet K;
  K.topology = all_lines(2);
  for (double t = -0.15; t <= 0.1501; t += 0.004) {
    K.points.push_back(v2(t, t * t));
  }
  auto est = estimate_tangent_set(K, v2(0, 0), {0.1, 0.04, 0.02});

  REQUIRE(!est.directions.empty());
  Vec e1 = v2(1, 0);
  for (const Vec& d : est.directions) {
    CHECK(line_angle(d, e1) < 0.05);
    // closed under flipping
    bool has_neg = false;
    for (const Vec& w : est.directions) {
      if ((d + w).norm() < 1e-12) has_neg = true;
    }
    CHECK(has_neg);
  }
  CHECK(est.ladder.front() == doctest::Approx(0.02));
}

TEST_CASE("tangent estimate refuses an unpopulated ball") {
  SampledInvariantSet K;
  K.topology = all_lines(2);
  K.points.push_back(v2(0, 0));
  CHECK_THROWS_AS(estimate_tangent_set(K, v2(0, 0), {0.1, 0.2}), TooFewPoints);
  K.points.push_back(v2(0.01, 0.0));
  CHECK_THROWS_AS(estimate_tangent_set(K, v2(5, 5), {0.1, 0.2}), TooFewPoints);
}

TEST_CASE("horseshoe fringe directions stay inside the plane cone") {
  auto entry = registry_lookup("henon_x_expand");
  const auto& cover = horseshoe_cover();

  // exact in-plane samples: periodic points of low period seeded from the
  // cover (cell centers sit half a cell off the plane, so they cannot
  // witness in-plane tangency themselves)
  std::vector<Vec> seeds;
  for (std::size_t i = 0; i < cover.points.size(); i += 4) {
    seeds.push_back(v3(cover.points[i][0], cover.points[i][1], 0.0));
  }
  SampledInvariantSet Kp;
  Kp.topology = all_lines(3);
  // plain newton basins shrink like the inverse derivative product, so
  // periods past six contribute nothing from seeds this coarse
  for (int p : {1, 2, 4, 6}) {
    for (const auto& o : find_periodic(entry.map, p, seeds)) {
      for (const Vec& q : o.points) {
        bool fresh = true;
        for (const Vec& r : Kp.points) {
          if ((q - r).norm() < 1e-8) fresh = false;
        }
        if (fresh) Kp.points.push_back(q);
      }
    }
  }

  const double xs = (-0.6 + std::sqrt(24.36)) / 12.0;
  const Vec fp = v3(xs, 0.4 * xs, 0.0);
  auto est = estimate_tangent_set(Kp, fp, {0.12, 0.05});
  REQUIRE(!est.directions.empty());

  // unstable eigendirection at the fixed point, extended by z = 0
  Mat J2(2, 2);
  J2 << -12.0 * xs, 1.0, 0.4, 0.0;
  Eigen::EigenSolver<Mat> eig(J2);
  int iu = std::abs(eig.eigenvalues()[0]) > std::abs(eig.eigenvalues()[1]) ? 0 : 1;
  Vec vu = v3(eig.eigenvectors().col(iu).real()[0],
              eig.eigenvectors().col(iu).real()[1], 0.0);

  int near_unstable = 0;
  for (const Vec& d : est.directions) {
    // inside the opening-0.2 cone about the plane, and in fact exactly flat
    CHECK(std::abs(d[2]) <= 0.2 * std::hypot(d[0], d[1]));
    CHECK(std::abs(d[2]) < 1e-10);
    if (line_angle(d, vu) < 0.15) ++near_unstable;
  }
  // the local product structure allows secants between branches anywhere
  // in the plane, but the unstable line itself must be witnessed
  CHECK(near_unstable >= 2);
}
