#include "cmkit/common.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace cmkit {

Topology all_lines(int n) { return Topology(static_cast<std::size_t>(n), CoordKind::Line); }

Vec wrap_point(Vec x, const Topology& topo) {
    for (int i = 0; i < x.size(); ++i) {
        if (topo.empty() || topo[static_cast<std::size_t>(i)] == CoordKind::Line) continue;
        x[i] -= std::floor(x[i]);
        if (x[i] >= 1.0) x[i] = 0.0;  // guard against floor rounding at 1-ulp below 1
    }
    return x;
}

Vec wrap_delta(Vec d, const Topology& topo) {
    for (int i = 0; i < d.size(); ++i) {
        if (topo.empty() || topo[static_cast<std::size_t>(i)] == CoordKind::Line) continue;
        d[i] -= std::round(d[i]);
    }
    return d;
}

double distance(const Vec& a, const Vec& b, const Topology& topo) {
    return wrap_delta(a - b, topo).norm();
}

bool Box::contains(const Vec& x, double slack) const {
    for (int i = 0; i < x.size(); ++i)
        if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::atomic<int> g_workers{0};

}  // namespace

std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t s = seed ^ fnv1a(purpose);
    std::uint64_t a = splitmix64(s), b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

Vec random_unit_vector(std::mt19937_64& g, int n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(n);
    do {
        for (int i = 0; i < n; ++i) v[i] = nd(g);
    } while (v.norm() < 1e-12);
    return v / v.norm();
}

int worker_count() {
    int w = g_workers.load();
    if (w > 0) return w;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_worker_count(int workers) { g_workers.store(workers); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    int w = worker_count();
    if (w <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const std::size_t chunk = std::max<std::size_t>(1, n / (static_cast<std::size_t>(w) * 8));
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mx;
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t beg = next.fetch_add(chunk);
                if (beg >= n) return;
                std::size_t end = std::min(n, beg + chunk);
                try {
                    for (std::size_t i = beg; i < end; ++i) body(i);
                } catch (...) {
                    std::scoped_lock lk(err_mx);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

Mat orthonormalize(const Mat& A) {
    Eigen::HouseholderQR<Mat> qr(A);
    Mat Q = qr.householderQ() * Mat::Identity(A.rows(), A.cols());
    Mat R = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
    for (int j = 0; j < Q.cols(); ++j)
        if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    return Q;
}

double largest_principal_angle(const Mat& A, const Mat& B) {
    Mat Qa = orthonormalize(A), Qb = orthonormalize(B);
    Eigen::JacobiSVD<Mat> svd(Qa.transpose() * Qb);
    double c = svd.singularValues().minCoeff();
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

double line_angle(const Vec& a, const Vec& b) {
    double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
    return std::acos(std::clamp(c, 0.0, 1.0));
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x) {
    const double h = 1e-5 * std::max(1.0, x.norm());
    const int n = static_cast<int>(x.size());
    Vec probe = f(x);
    Mat J(probe.size(), n);
    for (int j = 0; j < n; ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return J;
}

double smoothstep5(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

double smoothstep5_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return 30.0 * t * t * (t - 1.0) * (t - 1.0);
}

void require_finite(const Vec& x, const char* what) {
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > 1e12)
        throw NonFinite(std::string(what) + ": value left representable range");
}

}  // namespace cmkit
