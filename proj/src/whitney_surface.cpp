#include "cmkit/whitney_surface.hpp"

#include "cmkit/strong_manifolds.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cmkit {
namespace {

struct ChartFrame {
  Mat horizontal;  // ambient x d
  Mat vertical;    // ambient x c
};

ChartFrame split_rotation(const Mat& rotation, int d) {
  return {rotation.leftCols(d), rotation.rightCols(rotation.cols() - d)};
}

// Capture set points into chart coordinates; empty result when a captured
// tangent plane is too steep or two samples share a vertical fiber.
bool try_capture(const SampledInvariantSet& K, const SplittingFrame& split,
                 AdaptedChart& chart) {
  const auto frame = split_rotation(chart.rotation, chart.base_dim);
  chart.captured.clear();
  chart.local_u.clear();
  chart.local_h.clear();
  chart.local_slope.clear();

  for (std::size_t i = 0; i < K.points.size(); ++i) {
    const Vec delta = wrap_delta(K.points[i] - chart.center, chart.topology);
    if (delta.norm() > chart.radius) continue;

    int nearest = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < split.points.size(); ++j) {
      const double dj = distance(split.points[j], K.points[i], chart.topology);
      if (dj < bd) {
        bd = dj;
        nearest = static_cast<int>(j);
      }
    }
    const Mat& E = split.E_frames[static_cast<std::size_t>(nearest)];
    const Mat B = chart.rotation.transpose() * E;
    const Mat H = B.topRows(chart.base_dim);
    const Mat V = B.bottomRows(B.rows() - chart.base_dim);
    Eigen::JacobiSVD<Mat> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.singularValues().minCoeff() < 0.2) return false;
    const Mat S = V * svd.solve(Mat::Identity(chart.base_dim, chart.base_dim));
    if (S.norm() > 0.0) {
      Eigen::JacobiSVD<Mat> ssvd(S);
      if (ssvd.singularValues().maxCoeff() > 1.0 + 1e-9) return false;
    }

    chart.captured.push_back(static_cast<int>(i));
    chart.local_u.push_back(frame.horizontal.transpose() * delta);
    chart.local_h.push_back(frame.vertical.transpose() * delta);
    chart.local_slope.push_back(S);
  }

  // vertical injectivity on samples: heights must form a Lipschitz-1 graph
  for (std::size_t a = 0; a < chart.captured.size(); ++a) {
    for (std::size_t b = a + 1; b < chart.captured.size(); ++b) {
      const double du = (chart.local_u[a] - chart.local_u[b]).norm();
      const double dh = (chart.local_h[a] - chart.local_h[b]).norm();
      if (dh > du + 1e-9) return false;
    }
  }
  return !chart.captured.empty();
}

}  // namespace

std::vector<AdaptedChart> build_adapted_charts(const SampledInvariantSet& K,
                                               const SplittingFrame& split,
                                               double target_radius) {
  if (K.points.empty()) throw EmptyResult("no set samples to chart");
  if (split.points.empty() || split.E_frames.empty()) {
    throw SplittingMissing("no center bundle frames for charting");
  }
  const Topology topo =
      K.topology.empty() ? all_lines(static_cast<int>(K.points[0].size()))
                         : K.topology;
  const int ambient = static_cast<int>(K.points[0].size());
  const int d = static_cast<int>(split.E_frames[0].cols());

  std::vector<char> covered(K.points.size(), 0);
  std::vector<AdaptedChart> charts;

  for (std::size_t seed = 0; seed < K.points.size(); ++seed) {
    if (covered[seed]) continue;

    int nearest = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < split.points.size(); ++j) {
      const double dj = distance(split.points[j], K.points[seed], topo);
      if (dj < bd) {
        bd = dj;
        nearest = static_cast<int>(j);
      }
    }

    AdaptedChart chart;
    chart.center = K.points[seed];
    chart.base_dim = d;
    chart.topology = topo;
    chart.radius = target_radius;

    // rotation: orthonormalized center plane first, then its complement
    const Mat E = orthonormalize(split.E_frames[static_cast<std::size_t>(nearest)]);
    Mat R(ambient, ambient);
    R.leftCols(d) = E;
    Eigen::FullPivHouseholderQR<Mat> qr(E);
    const Mat Q = qr.matrixQ();
    R.rightCols(ambient - d) = Q.rightCols(ambient - d);
    chart.rotation = R;

    while (!try_capture(K, split, chart)) {
      chart.radius *= 0.7;
      ++chart.shrinks;
      if (chart.radius < 1e-4) {
        std::ostringstream msg;
        msg << "chart at sample " << seed
            << " cannot satisfy vertical injectivity at any usable radius";
        throw ChartFailure(msg.str());
      }
    }

    for (int idx : chart.captured) covered[static_cast<std::size_t>(idx)] = 1;
    charts.push_back(std::move(chart));
  }
  return charts;
}

LocalGraph fit_local_graph(const AdaptedChart& chart, double residual_tol) {
  const std::size_t n = chart.captured.size();
  if (n == 0) throw ChartFailure("cannot fit an empty chart");
  const int d = chart.base_dim;
  const int c = static_cast<int>(chart.local_h[0].size());

  // Whitney quotient on the raw data: incompatible heights/slopes cannot be
  // interpolated by any C1 graph, so reject before fitting.
  double residual = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      const Vec du = chart.local_u[b] - chart.local_u[a];
      const double len = du.norm();
      if (len < 1e-14) continue;
      const Vec r =
          chart.local_h[b] - chart.local_h[a] - chart.local_slope[a] * du;
      residual = std::max(residual, r.norm() / len);
    }
  }
  if (residual > residual_tol) {
    std::ostringstream msg;
    msg << "Whitney quotient " << residual << " exceeds tolerance "
        << residual_tol;
    throw ResidualTooLarge(msg.str());
  }

  double spacing = chart.radius;
  if (n > 1) {
    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b) {
          nn[a] = std::min(nn[a], (chart.local_u[a] - chart.local_u[b]).norm());
        }
      }
    }
    std::nth_element(nn.begin(), nn.begin() + n / 2, nn.end());
    spacing = std::max(nn[n / 2], 1e-10);
  }
  const double bandwidth = 2.0 * spacing;

  const bool quadratic = n >= 3;
  const int m = quadratic ? 1 + d + d * (d + 1) / 2 : 1 + d;

  auto basis = [d, m, quadratic](const Vec& u) {
    Vec phi(m);
    phi[0] = 1.0;
    for (int k = 0; k < d; ++k) phi[1 + k] = u[k];
    if (quadratic) {
      int p = 1 + d;
      for (int k = 0; k < d; ++k) {
        for (int l = k; l < d; ++l) phi[p++] = u[k] * u[l];
      }
    }
    return phi;
  };
  auto basis_grad = [d, m, quadratic](const Vec& u) {
    Mat g = Mat::Zero(m, d);
    for (int k = 0; k < d; ++k) g(1 + k, k) = 1.0;
    if (quadratic) {
      int p = 1 + d;
      for (int k = 0; k < d; ++k) {
        for (int l = k; l < d; ++l) {
          g(p, k) += u[l];
          g(p, l) += u[k];
          ++p;
        }
      }
    }
    return g;
  };

  struct FitData {
    std::vector<Vec> u, h;
    std::vector<Mat> s;
    double bw;
    int m, c;
    std::function<Vec(const Vec&)> basis;
    std::function<Mat(const Vec&)> basis_grad;
  };
  auto data = std::make_shared<FitData>();
  data->u = chart.local_u;
  data->h = chart.local_h;
  data->s = chart.local_slope;
  data->bw = bandwidth;
  data->m = m;
  data->c = c;
  data->basis = basis;
  data->basis_grad = basis_grad;

  // the local model lives in query-centered coordinates scaled by the
  // bandwidth, so the normal matrix stays well conditioned at any offset
  auto solve_at = [data](const Vec& q) {
    Mat M = Mat::Zero(data->m, data->m);
    Mat rhs = Mat::Zero(data->m, data->c);
    for (std::size_t i = 0; i < data->u.size(); ++i) {
      const Vec t = (data->u[i] - q) / data->bw;
      const double w = std::exp(-t.squaredNorm());
      const Vec phi = data->basis(t);
      const Mat g = data->basis_grad(t);
      M += w * (phi * phi.transpose() + g * g.transpose());
      rhs += w * (phi * data->h[i].transpose() +
                  data->bw * g * data->s[i].transpose());
    }
    M += 1e-12 * M.trace() / data->m * Mat::Identity(data->m, data->m);
    return Mat(M.ldlt().solve(rhs));  // m x c coefficients
  };

  const int dd = d;
  LocalGraph graph;
  graph.whitney_residual = residual;
  graph.bandwidth = bandwidth;
  graph.height = [solve_at](const Vec& q) {
    const Mat A = solve_at(q);
    return Vec(A.row(0).transpose());
  };
  graph.slope = [data, solve_at, dd](const Vec& q) {
    const Mat A = solve_at(q);
    return Mat(A.middleRows(1, dd).transpose() / data->bw);
  };
  return graph;
}

FittedSurface glue_charts(const std::vector<AdaptedChart>& charts,
                          const std::vector<LocalGraph>& graphs,
                          const std::vector<int>& order) {
  if (charts.empty() || charts.size() != graphs.size()) {
    throw std::invalid_argument("need one local graph per chart");
  }
  if (charts[0].base_dim > 2) {
    throw std::invalid_argument("gluing supports base dimension 1 or 2");
  }
  std::vector<int> seq = order;
  if (seq.empty()) {
    seq.resize(charts.size());
    for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<int>(i);
  }

  struct GlueData {
    std::vector<AdaptedChart> charts;
    std::vector<LocalGraph> graphs;
    std::vector<ChartFrame> frames;
    Vec base_c;
    Mat base_h;
    Topology topo;
    int d;
    std::size_t base_k;
  };
  auto data = std::make_shared<GlueData>();
  data->charts = charts;
  data->graphs = graphs;
  data->d = charts[0].base_dim;
  data->base_k = static_cast<std::size_t>(seq[0]);

  const AdaptedChart& first = charts[static_cast<std::size_t>(seq[0])];
  const int d = first.base_dim;
  const auto base = split_rotation(first.rotation, d);
  data->base_c = first.center;
  data->base_h = base.horizontal;
  data->topo = first.topology;
  for (const auto& chart : charts) {
    data->frames.push_back(split_rotation(chart.rotation, d));
  }

  // the glued point over u is a weighted average of the crossings of each
  // chart's graph with the fiber through u, taken along the base vertical
  auto eval = [data](const Vec& u) {
    const int d = data->d;
    const Vec lift = data->base_c + data->base_h * u;
    Vec acc = Vec::Zero(lift.size());
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < data->charts.size(); ++k) {
      const AdaptedChart& ck = data->charts[k];
      const ChartFrame& fk = data->frames[k];
      const LocalGraph& gk = data->graphs[k];
      auto param_of = [&](const Vec& v) {
        const Vec p = ck.center + fk.horizontal * v + fk.vertical * gk.height(v);
        return Vec(data->base_h.transpose() *
                   wrap_delta(p - data->base_c, data->topo));
      };
      Vec v = fk.horizontal.transpose() * wrap_delta(lift - ck.center,
                                                     data->topo);
      bool solved = false;
      for (int iter = 0; iter < 25; ++iter) {
        const Vec r = param_of(v) - u;
        if (r.norm() < 1e-13 * (1.0 + u.norm())) {
          solved = true;
          break;
        }
        Mat J(d, d);
        const double step = 1e-7 * std::max(1.0, v.norm());
        for (int i = 0; i < d; ++i) {
          Vec vp = v, vm = v;
          vp[i] += step;
          vm[i] -= step;
          J.col(i) = (param_of(vp) - param_of(vm)) / (2.0 * step);
        }
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible()) break;
        v -= lu.solve(r);
        if (!v.allFinite() || v.norm() > 3.0 * ck.radius) break;
      }
      if (!solved) continue;
      const double s = v.norm() / ck.radius;
      const Vec p = ck.center + fk.horizontal * v + fk.vertical * gk.height(v);
      const Vec delta = wrap_delta(p - data->base_c, data->topo) -
                        Vec(data->base_h * u);
      // a chart only votes where it holds samples; its fit is data, not
      // extrapolation, within about a bandwidth of them
      double nn = std::numeric_limits<double>::infinity();
      for (const Vec& ui : ck.local_u) nn = std::min(nn, (v - ui).norm());
      const double w = (1.0 - smoothstep5((s - 0.6) / 0.6)) *
                       (1.0 - smoothstep5(nn / gk.bandwidth - 0.5));
      if (w > 0.0) {
        weight_sum += w;
        acc += w * delta;
      }
    }
    if (weight_sum > 1e-14) {
      return wrap_point(lift + acc / weight_sum, data->topo);
    }
    // no chart holds samples near this fiber; extrapolate the base chart
    return wrap_point(lift + Vec(data->frames[data->base_k].vertical *
                                 data->graphs[data->base_k].height(u)),
                      data->topo);
  };

  FittedSurface surf;
  surf.base_point = first.center;
  surf.base_frame = base.horizontal;
  surf.base_dim = d;
  surf.topology = first.topology;
  surf.charts = charts;
  surf.glue_order = seq;
  surf.evaluate = eval;
  surf.tangent_at = [eval, d](const Vec& u) {
    Mat t(eval(u).size(), d);
    const double step = 1e-6 * std::max(1.0, u.norm());
    for (int k = 0; k < d; ++k) {
      Vec up = u, dn = u;
      up[k] += step;
      dn[k] -= step;
      t.col(k) = (eval(up) - eval(dn)) / (2.0 * step);
    }
    return orthonormalize(t);
  };

  // parameter mesh spanning every captured sample, padded by a cell
  double lo[2] = {0.0, 0.0}, hi[2] = {0.0, 0.0};
  bool any = false;
  for (const auto& chart : charts) {
    const auto cf = split_rotation(chart.rotation, d);
    for (std::size_t i = 0; i < chart.captured.size(); ++i) {
      const Vec delta =
          wrap_delta(chart.center - first.center, first.topology) +
          cf.horizontal * chart.local_u[i] + cf.vertical * chart.local_h[i];
      const Vec u = base.horizontal.transpose() * delta;
      for (int k = 0; k < d && k < 2; ++k) {
        lo[k] = any ? std::min(lo[k], u[k]) : u[k];
        hi[k] = any ? std::max(hi[k], u[k]) : u[k];
      }
      any = true;
    }
  }
  const int nodes = 24;
  if (d == 1) {
    for (int i = 0; i <= nodes; ++i) {
      Vec u(1);
      u << lo[0] + (hi[0] - lo[0]) * i / nodes;
      surf.mesh.push_back(u);
    }
  } else {
    for (int i = 0; i <= nodes; ++i) {
      for (int j = 0; j <= nodes; ++j) {
        Vec u(2);
        u << lo[0] + (hi[0] - lo[0]) * i / nodes,
            lo[1] + (hi[1] - lo[1]) * j / nodes;
        surf.mesh.push_back(u);
      }
    }
  }

  // obstruction scan over the finished surface: each chart's own graph must
  // reproduce the glued points over its inner region, and the points must
  // stay a mild-slope graph over every chart's horizontal disk
  std::vector<Vec> cur(surf.mesh.size());
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = eval(surf.mesh[i]);
  for (std::size_t k = 0; k < charts.size(); ++k) {
    const AdaptedChart& ck = charts[k];
    const auto fk = split_rotation(ck.rotation, d);
    std::vector<Vec> vs, hs;
    for (const Vec& p : cur) {
      const Vec delta = wrap_delta(p - ck.center, ck.topology);
      const Vec v = fk.horizontal.transpose() * delta;
      const double s = v.norm() / ck.radius;
      if (s >= 0.9) continue;
      const Vec h = fk.vertical.transpose() * delta;
      vs.push_back(v);
      hs.push_back(h);
      if (s < 0.6 &&
          (h - graphs[k].height(v)).norm() > 0.05 * ck.radius) {
        std::ostringstream msg;
        msg << "chart " << k << " disagrees with the glued surface near "
            << "horizontal offset (" << v.transpose() << ")";
        throw GraphObstruction(msg.str());
      }
    }
    for (std::size_t a = 0; a < vs.size(); ++a) {
      for (std::size_t b = a + 1; b < vs.size(); ++b) {
        const double dv = (vs[a] - vs[b]).norm();
        const double dh = (hs[a] - hs[b]).norm();
        if (dh > 5.0 * dv + 1e-6) {
          std::ostringstream msg;
          msg << "surface is not a graph over chart " << k
              << " near horizontal offset (" << vs[a].transpose() << ")";
          throw GraphObstruction(msg.str());
        }
      }
    }
  }
  return surf;
}

}  // namespace cmkit
