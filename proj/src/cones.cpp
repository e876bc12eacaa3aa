#include "cmkit/cones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmkit {
namespace {

Mat complement_frame(const Mat& axis) {
  const int n = static_cast<int>(axis.rows());
  const int d = static_cast<int>(axis.cols());
  Eigen::FullPivLU<Mat> lu(axis.transpose());
  Mat kern = lu.kernel();
  // kernel columns are not orthonormal in general
  Eigen::HouseholderQR<Mat> qr(kern);
  Mat q = qr.householderQ() * Mat::Identity(n, n - d);
  return q;
}

// Deterministic test vectors on the cone boundary: axis column +/- beta
// times a complement column, plus seeded random unit vectors in the cone.
std::vector<Vec> cone_samples(const Mat& axis, double beta, int extra,
                              std::uint64_t seed) {
  const int n = static_cast<int>(axis.rows());
  const int d = static_cast<int>(axis.cols());
  Mat comp = complement_frame(axis);
  std::vector<Vec> out;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n - d; ++j) {
      for (double s : {1.0, -1.0}) {
        Vec u = axis.col(i) + s * beta * comp.col(j);
        out.push_back(u.normalized());
      }
    }
    out.push_back(axis.col(i));
    out.push_back(Vec(-axis.col(i)));
  }
  auto rng = rng_stream(seed, "cone-samples");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < extra; ++k) {
    Vec a(d), b(std::max(n - d, 1));
    for (int i = 0; i < d; ++i) a[i] = gauss(rng);
    for (int i = 0; i < b.size(); ++i) b[i] = gauss(rng);
    a.normalize();
    const double t = unif(rng) * beta;
    const Vec uf = axis * a;
    Vec ue = Vec::Zero(n);
    if (n > d) ue = t * (comp * b.normalized());
    // pair with the complement part flipped: keeps second moments axis-aligned
    out.push_back(Vec((uf + ue).normalized()));
    out.push_back(Vec((uf - ue).normalized()));
  }
  return out;
}

// Vectors clearly outside the cone: complement directions with a small
// axis admixture, sampled in +/- pairs.
std::vector<Vec> outside_samples(const Mat& axis, int extra,
                                 std::uint64_t seed) {
  const int n = static_cast<int>(axis.rows());
  const int d = static_cast<int>(axis.cols());
  if (n == d) return {};
  Mat comp = complement_frame(axis);
  std::vector<Vec> out;
  for (int j = 0; j < n - d; ++j) {
    out.push_back(comp.col(j));
    out.push_back(Vec(-comp.col(j)));
  }
  auto rng = rng_stream(seed, "cone-outside");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < extra; ++k) {
    Vec b(n - d);
    for (int i = 0; i < n - d; ++i) b[i] = gauss(rng);
    Vec u = comp * b.normalized();
    out.push_back(u);
    out.push_back(Vec(-u));
  }
  return out;
}

Mat cocycle_product(const SmoothMap& map, const Vec& x, int n) {
  Mat J = Mat::Identity(map.dim, map.dim);
  Vec y = x;
  for (int k = 0; k < n; ++k) {
    J = jacobian_at(map, y) * J;
    y = evaluate(map, y, 1);
  }
  return J;
}

}  // namespace

ConeField ConeField::constant(const Mat& axis, double beta) {
  ConeField c;
  c.ambient = static_cast<int>(axis.rows());
  c.dim = static_cast<int>(axis.cols());
  c.base_points.push_back(Vec::Zero(c.ambient));
  c.axis_frames.push_back(orthonormalize(axis));
  c.opening.push_back(beta);
  return c;
}

int ConeField::nearest_index(const Vec& x) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(base_points.size()); ++i) {
    const double d = (base_points[i] - x).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

const Mat& ConeField::frame_at(const Vec& x) const {
  return axis_frames[nearest_index(x)];
}

double ConeField::opening_at(const Vec& x) const {
  return opening[nearest_index(x)];
}

bool ConeField::contains(const Vec& x, const Vec& u, double slack) const {
  const int i = nearest_index(x);
  const Mat& F = axis_frames[i];
  const Vec uf = F * (F.transpose() * u);
  const Vec ue = u - uf;
  return ue.norm() <= (opening[i] + slack) * uf.norm();
}

SplittingFrame estimate_splitting(const SmoothMap& map,
                                  const std::vector<Vec>& K, int d_F,
                                  int iters, const std::optional<Box>& box) {
  const int n = map.dim;
  if (d_F <= 0 || d_F >= n) throw std::invalid_argument("bad cone dimension");
  if (K.empty()) throw std::invalid_argument("empty point cloud");

  SplittingFrame out;
  out.points = K;
  out.E_frames.resize(K.size());
  out.F_frames.resize(K.size());

  // Generic seed frame shared by all points keeps the run reproducible.
  Mat seed(n, n);
  {
    auto rng = rng_stream(40961, "splitting-seed");
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) seed(i, j) = gauss(rng);
    }
    seed = orthonormalize(seed);
  }

  // Simultaneous iteration along an orbit: returns the final orthonormal
  // frame and per-direction geometric mean growth rates.
  auto push_frame = [&](const SmoothMap& m, const Vec& start, int steps,
                        Vec* rates, double* transient) {
    Mat Q = seed;
    Vec log_sum = Vec::Zero(n);
    std::vector<Vec> history;
    Vec y = start;
    for (int k = 0; k < steps; ++k) {
      if (box && !box->contains(y, 1e-9)) {
        throw OrbitEscape("orbit left the working box");
      }
      Mat pushed = jacobian_at(m, y) * Q;
      Eigen::HouseholderQR<Mat> qr(pushed);
      Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
      Q = qr.householderQ() * Mat::Identity(n, n);
      for (int j = 0; j < n; ++j) {
        const double rjj = R(j, j);
        if (rjj < 0) Q.col(j) = -Q.col(j);
        log_sum[j] += std::log(std::abs(rjj));
      }
      history.push_back(log_sum);
      y = evaluate(m, y, 1);
    }
    // Rates over the tail window: the burn-in of the simultaneous
    // iteration would otherwise contaminate the geometric means.
    const int burn = std::max(0, steps / 2 - 1);
    Vec tail_rates(n);
    const Vec base = burn > 0 ? history[burn - 1] : Vec(Vec::Zero(n));
    for (int j = 0; j < n; ++j) {
      tail_rates[j] = std::exp((log_sum[j] - base[j]) / (steps - burn));
    }
    *rates = tail_rates;
    if (transient) {
      // largest deviation of a partial product from the fitted exponential
      double dev = 0.0;
      for (int k = 0; k < steps; ++k) {
        for (int j = 0; j < n; ++j) {
          dev = std::max(dev,
                         std::abs(history[k][j] -
                                  (k + 1) * std::log(tail_rates[j])));
        }
      }
      *transient = std::exp(dev);
    }
    return Q;
  };

  const SmoothMap back = reversed(map);
  double gap_worst = std::numeric_limits<double>::infinity();
  double lamF = std::numeric_limits<double>::infinity();
  double lamE = 0.0;
  double transient = 1.0;

  auto walk = [&](const Vec& x, int steps) {
    Vec y = x;
    for (int k = 0; k < std::abs(steps); ++k) {
      y = evaluate(map, y, steps > 0 ? 1 : -1);
      if (box && !box->contains(y, 1e-9)) {
        throw OrbitEscape("orbit left the working box");
      }
    }
    return y;
  };

  for (std::size_t i = 0; i < K.size(); ++i) {
    // F: push forward from the backward endpoint up to K[i].
    Vec start = walk(K[i], -iters);
    Vec rates(n);
    double tr = 1.0;
    Mat Q = push_frame(map, start, iters, &rates, &tr);
    out.F_frames[i] = Q.leftCols(d_F);
    gap_worst = std::min(gap_worst, rates[d_F - 1] / rates[d_F]);
    lamF = std::min(lamF, rates[d_F - 1]);
    transient = std::max(transient, tr);

    // E: same construction for the inverse cocycle from the forward endpoint.
    Vec fstart = walk(K[i], iters);
    Vec brates(n);
    Mat Qb = push_frame(back, fstart, iters, &brates, nullptr);
    out.E_frames[i] = Qb.leftCols(n - d_F);
    lamE = std::max(lamE, 1.0 / brates[n - d_F - 1]);
  }

  if (gap_worst < 1.05) {
    throw NoDomination("per-step rate gap " + std::to_string(gap_worst) +
                       " below 1.05");
  }
  out.lambda_F = lamF;
  out.lambda_E = lamE;
  out.transient_C = transient;

  // Transversality and transport residual over the sampled set.
  double trans = M_PI / 2;
  for (std::size_t i = 0; i < K.size(); ++i) {
    Eigen::JacobiSVD<Mat> svd(out.E_frames[i].transpose() * out.F_frames[i]);
    const double c = svd.singularValues().size()
                         ? std::min(1.0, svd.singularValues()[0])
                         : 0.0;
    trans = std::min(trans, std::acos(c));
  }
  out.transversality_min = trans;

  double resid = 0.0;
  for (std::size_t i = 0; i < K.size(); ++i) {
    const Vec img = evaluate(map, K[i], 1);
    int ni = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K.size(); ++j) {
      const double d = distance(K[j], img, map.topology);
      if (d < best) {
        best = d;
        ni = static_cast<int>(j);
      }
    }
    const Mat pushed = orthonormalize(jacobian_at(map, K[i]) * out.F_frames[i]);
    resid = std::max(resid, largest_principal_angle(pushed, out.F_frames[ni]));
  }
  out.invariance_residual = resid;
  return out;
}

ContractionCertificate check_contraction(
    const SmoothMap& map, const ConeField& cone,
    const std::vector<std::vector<Vec>>& orbit_segments, double r, int n0) {
  ContractionCertificate cert;
  cert.r = r;
  double lam_all = std::numeric_limits<double>::infinity();
  bool all_ok = true;

  for (int si = 0; si < static_cast<int>(orbit_segments.size()); ++si) {
    const auto& seg = orbit_segments[si];
    for (int n = n0; n <= 2 * n0; ++n) {
      SegmentCheck chk;
      chk.segment = si;
      chk.steps = n;
      double worst = std::numeric_limits<double>::infinity();
      for (const Vec& x : seg) {
        const Mat J = cocycle_product(map, x, n);
        const Vec y = evaluate(map, x, n);
        const auto samples = cone_samples(cone.frame_at(x), cone.opening_at(x),
                                          16, 1234 + 17 * si);
        for (const Vec& u : samples) {
          const Vec w = J * u;
          const double g = w.norm();
          if (g < 1e-14) chk.nondegenerate = false;
          if (!cone.contains(y, w, 1e-9)) chk.cone_invariant = false;
          worst = std::min(worst, std::min(g, std::pow(g, r)));
        }
      }
      chk.lambda_n = std::pow(worst, 1.0 / n);
      lam_all = std::min(lam_all, chk.lambda_n);
      all_ok = all_ok && chk.cone_invariant && chk.nondegenerate;
      cert.checks.push_back(chk);
    }
  }
  cert.measured_lambda = lam_all;
  cert.pass = all_ok && lam_all > 1.0;
  return cert;
}

BunchingCertificate check_bunched(
    const SmoothMap& map, const ConeField& cone,
    const std::vector<std::vector<Vec>>& orbit_segments, int n0) {
  BunchingCertificate cert;
  double lam_all = std::numeric_limits<double>::infinity();

  for (int si = 0; si < static_cast<int>(orbit_segments.size()); ++si) {
    const auto& seg = orbit_segments[si];
    for (int n = n0; n <= 2 * n0; ++n) {
      SegmentCheck chk;
      chk.segment = si;
      chk.steps = n;
      double lam_seg = std::numeric_limits<double>::infinity();
      for (const Vec& x : seg) {
        const Mat J = cocycle_product(map, x, n);
        const auto inside = cone_samples(cone.frame_at(x), cone.opening_at(x),
                                         16, 9876 + 31 * si);
        const auto outside =
            outside_samples(cone.frame_at(x), 16, 9876 + 31 * si);
        double grow_min = std::numeric_limits<double>::infinity();
        double grow_max = 0.0;
        for (const Vec& u : inside) {
          const double g = (J * u).norm();
          grow_min = std::min(grow_min, g);
          grow_max = std::max(grow_max, g);
        }
        for (const Vec& w : outside) {
          const double gw = (J * w).norm();
          if (gw < 1e-300) continue;
          // gw < lambda^-n * grow_min / grow_max gives the admissible rate
          lam_seg = std::min(lam_seg,
                             std::pow(grow_min / (grow_max * gw), 1.0 / n));
        }
      }
      chk.lambda_n = lam_seg;
      lam_all = std::min(lam_all, lam_seg);
      cert.checks.push_back(chk);
    }
  }
  cert.measured_lambda = lam_all;
  cert.pass = lam_all >= 1.05;
  return cert;
}

double cone_thinness(const SmoothMap& map, const ConeField& cone, const Vec& x,
                     int n, const std::optional<Box>& box) {
  const Vec start = [&] {
    Vec y = x;
    for (int k = 0; k < n; ++k) {
      y = evaluate(map, y, -1);
      if (box && !box->contains(y, 1e-9)) {
        throw OrbitEscape("backward orbit left the working box");
      }
    }
    return y;
  }();

  const Mat J = cocycle_product(map, start, n);
  const auto samples =
      cone_samples(cone.frame_at(start), cone.opening_at(start), 128, 5150);

  std::vector<Vec> image;
  image.reserve(samples.size());
  for (const Vec& u : samples) image.push_back((J * u).normalized());

  // +/- paired samples make the second moment exactly axis-aligned for
  // product maps, so the fit does not perturb the measured tangent.
  Mat moment = Mat::Zero(map.dim, map.dim);
  for (const Vec& w : image) moment += w * w.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> eig(moment);
  Mat P = eig.eigenvectors().rightCols(cone.dim);

  double worst = 0.0;
  for (const Vec& w : image) {
    const Vec wf = P * (P.transpose() * w);
    const Vec we = w - wf;
    worst = std::max(worst, we.norm() / wf.norm());
  }
  return worst;
}

}  // namespace cmkit
