#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cmkit/common.hpp"
#include "cmkit/cones.hpp"
#include "cmkit/dynamics.hpp"

using namespace cmkit;

namespace {

Vec v3(double x, double y, double z) {
  Vec v(3);
  v << x, y, z;
  return v;
}

SmoothMap diagonal_map(std::vector<double> d) {
  const int n = static_cast<int>(d.size());
  std::vector<PolyCoord> fwd(n), inv(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> e(n, 0);
    e[i] = 1;
    fwd[i].push_back({d[i], e});
    inv[i].push_back({1.0 / d[i], e});
  }
  return polynomial_map(n, fwd, inv);
}

Mat axis_of(int n, int which) {
  Mat a = Mat::Zero(n, 1);
  a(which, 0) = 1.0;
  return a;
}

}  // namespace

TEST_CASE("splitting of a diagonal cocycle is exact") {
  auto entry = registry_lookup("linear3");
  std::vector<Vec> K = {v3(0, 0, 0)};
  auto split = estimate_splitting(entry.map, K, 1, 40);

  Mat z = axis_of(3, 2);
  Mat xy(3, 2);
  xy << 1, 0, 0, 1, 0, 0;
  CHECK(largest_principal_angle(split.F_frames[0], z) < 1e-10);
  CHECK(largest_principal_angle(split.E_frames[0], xy) < 1e-10);
  CHECK(split.lambda_F == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(split.lambda_E == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(split.transversality_min > 1e-3);
  CHECK(split.invariance_residual < 1e-9);
}

TEST_CASE("splitting at a planar saddle matches the eigenvector") {
  auto entry = registry_lookup("henon_saddle");
  // independent fixed point and eigen data from the closed forms
  const double a = 1.4, b = 0.3;
  const double xs = (b - 1.0 + std::sqrt((1.0 - b) * (1.0 - b) + 4.0 * a)) /
                    (2.0 * a);
  Vec fp(2);
  fp << xs, b * xs;
  Mat J(2, 2);
  J << -2.0 * a * xs, 1.0, b, 0.0;
  Eigen::EigenSolver<Mat> eig(J);
  int iu = std::abs(eig.eigenvalues()[0]) > std::abs(eig.eigenvalues()[1]) ? 0
                                                                           : 1;
  Vec vu = eig.eigenvectors().col(iu).real();
  const double lam_u = std::abs(eig.eigenvalues()[iu]);

  // backward orbits amplify the fixed point's rounding by ~6.4 per step,
  // so the window has to stay short enough to remain in range
  auto split = estimate_splitting(entry.map, {fp}, 1, 15);
  CHECK(largest_principal_angle(split.F_frames[0], Mat(vu)) < 1e-8);
  CHECK(split.lambda_F == doctest::Approx(lam_u).epsilon(1e-6));
}

TEST_CASE("forward and backward runs recover the same splitting") {
  auto entry = registry_lookup("linear3");
  std::vector<Vec> K = {v3(0, 0, 0)};
  auto fwd = estimate_splitting(entry.map, K, 1, 40);
  auto bwd = estimate_splitting(reversed(entry.map), K, 2, 40);

  // the backward dominant bundle is the forward codominant one
  CHECK(largest_principal_angle(fwd.E_frames[0], bwd.F_frames[0]) < 1e-9);
  CHECK(largest_principal_angle(fwd.F_frames[0], bwd.E_frames[0]) < 1e-9);
  CHECK(fwd.transversality_min > 1e-3);
}

TEST_CASE("a rate gap below threshold is refused") {
  auto map = diagonal_map({0.5, 0.97, 1.0});
  std::vector<Vec> K = {v3(0, 0, 0)};
  CHECK_THROWS_AS(estimate_splitting(map, K, 1, 30), NoDomination);
}

TEST_CASE("orbits leaving the working box are refused") {
  auto entry = registry_lookup("henon_x_expand");
  std::vector<Vec> K = {v3(0.9, 0.3, 0.0)};
  CHECK_THROWS_AS(estimate_splitting(entry.map, K, 1, 20, entry.working_box),
                  OrbitEscape);
}

TEST_CASE("vertical cone under the diagonal model is contracted") {
  auto entry = registry_lookup("linear3");
  auto cone = ConeField::constant(axis_of(3, 2), 1.0);
  std::vector<std::vector<Vec>> segs = {{v3(0, 0, 0)}};
  auto cert = check_contraction(entry.map, cone, segs, 1.0, 10);
  CHECK(cert.pass);
  CHECK(cert.measured_lambda > 2.8);
  CHECK(cert.measured_lambda < 3.0 + 1e-9);
  for (const auto& c : cert.checks) {
    CHECK(c.cone_invariant);
    CHECK(c.nondegenerate);
  }
}

TEST_CASE("a cone about a non-dominant axis escapes") {
  auto entry = registry_lookup("linear3");
  auto cone = ConeField::constant(axis_of(3, 1), 1.0);
  std::vector<std::vector<Vec>> segs = {{v3(0, 0, 0)}};
  auto cert = check_contraction(entry.map, cone, segs, 1.0, 5);
  CHECK(!cert.pass);
  bool invariance_broken = false;
  for (const auto& c : cert.checks) invariance_broken |= !c.cone_invariant;
  CHECK(invariance_broken);
}

TEST_CASE("vertical cone at the planar saddle point is not invariant") {
  // the in-plane unstable rate exceeds the vertical rate, so the vertical
  // cone is honestly rejected rather than certified
  auto entry = registry_lookup("henon_x_expand");
  auto cone = ConeField::constant(axis_of(3, 2), 0.5);
  const double xs = (0.4 - 1.0 +
                     std::sqrt((1.0 - 0.4) * (1.0 - 0.4) + 4.0 * 6.0)) /
                    (2.0 * 6.0);
  std::vector<std::vector<Vec>> segs = {{v3(xs, 0.4 * xs, 0.0)}};
  auto cert = check_contraction(entry.map, cone, segs, 2.0, 10);
  CHECK(!cert.pass);
  bool invariance_broken = false;
  bool degenerate = false;
  for (const auto& c : cert.checks) {
    invariance_broken |= !c.cone_invariant;
    degenerate |= !c.nondegenerate;
  }
  CHECK(invariance_broken);
  CHECK(!degenerate);
}

TEST_CASE("bunching passes for a planar diagonal with a spectral gap") {
  auto map = diagonal_map({0.5, 0.9});
  Mat axis = Mat::Zero(2, 1);
  axis(1, 0) = 1.0;
  auto cone = ConeField::constant(axis, 1.0);
  std::vector<std::vector<Vec>> segs = {{Vec(Vec::Zero(2))}};
  auto cert = check_bunched(map, cone, segs, 3);
  CHECK(cert.pass);
  CHECK(cert.measured_lambda > 1.5);
  CHECK(cert.measured_lambda < 2.0 + 1e-9);
}

TEST_CASE("bunching splits tight three-rate diagonals correctly") {
  Mat axis = Mat::Zero(3, 2);
  axis(1, 0) = 1.0;
  axis(2, 1) = 1.0;
  std::vector<std::vector<Vec>> segs = {{v3(0, 0, 0)}};

  auto bad = check_bunched(diagonal_map({0.93, 0.9, 0.95}),
                           ConeField::constant(axis, 0.5), segs, 10);
  CHECK(!bad.pass);
  CHECK(bad.measured_lambda < 1.05);
  CHECK(bad.measured_lambda > 0.9);

  auto good = check_bunched(diagonal_map({0.5, 0.9, 0.95}),
                            ConeField::constant(axis, 0.5), segs, 10);
  CHECK(good.pass);
  CHECK(good.measured_lambda > 1.5);
}

TEST_CASE("one-dimensional center cones are bunched") {
  auto entry = registry_lookup("cat_linear");
  // stable line of the torus map, expanded by the inverse
  Mat A(2, 2);
  A << 2, 1, 1, 1;
  Eigen::SelfAdjointEigenSolver<Mat> eig(A);
  Vec vs = eig.eigenvectors().col(0);  // eigenvalue (3 - sqrt 5)/2
  auto cone = ConeField::constant(Mat(vs), 0.5);
  std::vector<std::vector<Vec>> segs = {{Vec(Vec::Zero(2))}};
  auto cert = check_bunched(reversed(entry.map), cone, segs, 8);
  CHECK(cert.pass);
  CHECK(cert.measured_lambda > 2.0);
  CHECK(cert.measured_lambda < 2.62);
}

TEST_CASE("image cones of the diagonal model thin at the exact rate") {
  auto entry = registry_lookup("linear3");
  auto cone = ConeField::constant(axis_of(3, 2), 1.0);

  CHECK(cone_thinness(entry.map, cone, v3(0, 0, 0), 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  auto half = ConeField::constant(axis_of(3, 2), 0.5);
  CHECK(cone_thinness(entry.map, half, v3(0, 0, 0), 0) ==
        doctest::Approx(0.5).epsilon(1e-12));

  std::vector<double> logs;
  for (int n = 1; n <= 8; ++n) {
    const double t = cone_thinness(entry.map, cone, v3(0, 0, 0), n);
    CHECK(t == doctest::Approx(std::pow(3.0, -n)).epsilon(1e-11));
    logs.push_back(std::log(t));
  }
  // slope of log-thinness vs n stays within 0.1 of -log(contraction rate)
  const double slope = (logs.back() - logs.front()) / 7.0;
  CHECK(slope <= -std::log(3.0) + 0.1);
  CHECK(slope >= -std::log(3.0) - 0.1);
}

TEST_CASE("vertical cones at the planar saddle do not thin") {
  // dominant in-plane growth swallows the vertical axis: recorded honestly
  auto entry = registry_lookup("henon_x_expand");
  auto cone = ConeField::constant(axis_of(3, 2), 0.5);
  const double xs = (0.4 - 1.0 +
                     std::sqrt((1.0 - 0.4) * (1.0 - 0.4) + 4.0 * 6.0)) /
                    (2.0 * 6.0);
  const double t = cone_thinness(entry.map, cone, v3(xs, 0.4 * xs, 0.0), 10);
  CHECK(t > 0.1);
}
