#include "cmkit/dynamics.hpp"

#include <cmath>

namespace cmkit {

Vec evaluate(const SmoothMap& map, Vec x, long steps) {
    if (steps < 0 && !map.has_inverse())
        throw MissingInverse("evaluate: negative steps require an inverse");
    const long n = std::labs(steps);
    for (long k = 0; k < n; ++k) {
        x = steps > 0 ? map.forward(x) : map.inverse(x);
        require_finite(x, "evaluate");
        x = wrap_point(std::move(x), map.topology);
    }
    return x;
}

Mat jacobian_at(const SmoothMap& map, const Vec& x) {
    require_finite(x, "jacobian_at");
    Mat J = map.has_jacobian() ? map.jacobian(x) : fd_jacobian(map.forward, x);
    if (!J.allFinite()) throw NonFinite("jacobian_at: overflow");
    return J;
}

Mat inverse_jacobian_at(const SmoothMap& map, const Vec& x) {
    if (!map.has_inverse()) throw MissingInverse("inverse_jacobian_at");
    Vec pre = wrap_point(map.inverse(x), map.topology);
    return jacobian_at(map, pre).inverse();
}

SmoothMap reversed(const SmoothMap& map) {
    if (!map.has_inverse()) throw MissingInverse("reversed: map has no inverse");
    SmoothMap r;
    r.dim = map.dim;
    r.topology = map.topology;
    SmoothMap base = map;  // keep copies alive inside the closures
    r.forward = [base](const Vec& x) { return base.inverse(x); };
    r.inverse = [base](const Vec& x) { return base.forward(x); };
    // D(f^{-1})(x) = (Df at f^{-1}(x))^{-1}
    r.jacobian = [base](const Vec& x) {
        Vec pre = base.inverse(x);
        Mat Jp = base.has_jacobian() ? base.jacobian(pre) : fd_jacobian(base.forward, pre);
        return Mat(Jp.inverse());
    };
    return r;
}

Vec newton_inverse(const SmoothMap& map, const Vec& target, Vec seed, double tol, int max_iters) {
    Vec p = std::move(seed);
    double scale = std::max(1.0, target.norm());
    double res = (map.forward(p) - target).norm();
    for (int it = 0; it < max_iters; ++it) {
        if (res <= tol * scale) return p;
        Mat J = jacobian_at(map, p);
        Vec step = J.partialPivLu().solve(map.forward(p) - target);
        double damp = 1.0;
        for (int half = 0; half < 30; ++half) {
            Vec cand = p - damp * step;
            double r2 = (map.forward(cand) - target).norm();
            if (r2 < res || r2 <= tol * scale) {
                p = cand;
                res = r2;
                break;
            }
            damp *= 0.5;
            if (half == 29) throw NonFinite("newton_inverse: line search stalled");
        }
    }
    if (res <= 1e-9 * scale) return p;  // accept near-solutions at loose tolerance
    throw NonFinite("newton_inverse: no convergence");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

SmoothMap make_linear3() {
    SmoothMap m;
    m.dim = 3;
    m.topology = all_lines(3);
    m.forward = [](const Vec& x) { return Vec(Vec::Map(x.data(), 3).cwiseProduct(Eigen::Vector3d(0.5, 1.0, 3.0))); };
    m.inverse = [](const Vec& x) { return Vec(Vec::Map(x.data(), 3).cwiseProduct(Eigen::Vector3d(2.0, 1.0, 1.0 / 3.0))); };
    m.jacobian = [](const Vec&) { return Mat(Eigen::Vector3d(0.5, 1.0, 3.0).asDiagonal()); };
    return m;
}

SmoothMap make_curved2() {
    SmoothMap m;
    m.dim = 2;
    m.topology = all_lines(2);
    m.forward = [](const Vec& p) {
        Vec y(2);
        y[0] = p[0] + p[0] * p[1];
        y[1] = 2.0 * p[1] + p[0] * p[0];
        return y;
    };
    m.jacobian = [](const Vec& p) {
        Mat J(2, 2);
        J << 1.0 + p[1], p[0], 2.0 * p[0], 2.0;
        return J;
    };
    SmoothMap fwd = m;
    m.inverse = [fwd](const Vec& q) {
        Vec seed(2);
        seed << q[0], q[1] / 2.0;
        return newton_inverse(fwd, q, seed);
    };
    return m;
}

SmoothMap make_saddle3() {
    SmoothMap m;
    m.dim = 3;
    m.topology = all_lines(3);
    m.forward = [](const Vec& p) {
        Vec y(3);
        y[0] = 0.2 * p[0] + 0.1 * p[1] * p[1];
        y[1] = p[1];
        y[2] = 5.0 * p[2] + 0.1 * p[0] * p[1];
        return y;
    };
    m.inverse = [](const Vec& q) {
        Vec p(3);
        p[1] = q[1];
        p[0] = 5.0 * (q[0] - 0.1 * q[1] * q[1]);
        p[2] = (q[2] - 0.1 * p[0] * p[1]) / 5.0;
        return p;
    };
    m.jacobian = [](const Vec& p) {
        Mat J = Mat::Zero(3, 3);
        J(0, 0) = 0.2;
        J(0, 1) = 0.2 * p[1];
        J(1, 1) = 1.0;
        J(2, 0) = 0.1 * p[1];
        J(2, 1) = 0.1 * p[0];
        J(2, 2) = 5.0;
        return J;
    };
    return m;
}

SmoothMap make_henon3(bool coupled) {
    const double a = 6.0, b = 0.4;
    SmoothMap m;
    m.dim = 3;
    m.topology = all_lines(3);
    m.forward = [a, b, coupled](const Vec& p) {
        Vec y(3);
        y[0] = 1.0 - a * p[0] * p[0] + p[1];
        y[1] = b * p[0];
        y[2] = 3.0 * p[2] + (coupled ? 0.1 * p[0] * p[0] : 0.0);
        return y;
    };
    m.inverse = [a, b, coupled](const Vec& q) {
        Vec p(3);
        p[0] = q[1] / b;
        p[1] = q[0] - 1.0 + a * p[0] * p[0];
        p[2] = (q[2] - (coupled ? 0.1 * p[0] * p[0] : 0.0)) / 3.0;
        return p;
    };
    m.jacobian = [a, b, coupled](const Vec& p) {
        Mat J = Mat::Zero(3, 3);
        J(0, 0) = -2.0 * a * p[0];
        J(0, 1) = 1.0;
        J(1, 0) = b;
        J(2, 2) = 3.0;
        if (coupled) J(2, 0) = 0.2 * p[0];
        return J;
    };
    return m;
}

SmoothMap make_solenoid() {
    SmoothMap m;
    m.dim = 3;
    m.topology = {CoordKind::Circle, CoordKind::Line, CoordKind::Line};
    m.forward = [](const Vec& p) {
        Vec y(3);
        y[0] = 2.0 * p[0];
        y[1] = 0.25 * p[1] + 0.4 * std::cos(2.0 * kPi * p[0]);
        y[2] = 0.25 * p[2] + 0.4 * std::sin(2.0 * kPi * p[0]);
        return y;
    };
    // Two algebraic preimage branches (theta/2 and theta/2 + 1/2); the branch
    // whose fiber part stays near the attractor core is the inverse on the
    // working region. The wrong branch is offset by 3.2 in (u,v).
    m.inverse = [](const Vec& q) {
        double th = q[0] - std::floor(q[0]);
        Vec best(3);
        double best_norm = -1.0;
        for (int k = 0; k < 2; ++k) {
            double t = th / 2.0 + 0.5 * k;
            double u = 4.0 * (q[1] - 0.4 * std::cos(2.0 * kPi * t));
            double v = 4.0 * (q[2] - 0.4 * std::sin(2.0 * kPi * t));
            double nn = u * u + v * v;
            if (best_norm < 0.0 || nn < best_norm) {
                best_norm = nn;
                best << t, u, v;
            }
        }
        return best;
    };
    m.jacobian = [](const Vec& p) {
        Mat J = Mat::Zero(3, 3);
        J(0, 0) = 2.0;
        J(1, 0) = -0.8 * kPi * std::sin(2.0 * kPi * p[0]);
        J(1, 1) = 0.25;
        J(2, 0) = 0.8 * kPi * std::cos(2.0 * kPi * p[0]);
        J(2, 2) = 0.25;
        return J;
    };
    return m;
}

SmoothMap make_cat_linear() {
    SmoothMap m;
    m.dim = 2;
    m.topology = {CoordKind::Circle, CoordKind::Circle};
    m.forward = [](const Vec& p) {
        Vec y(2);
        y[0] = 2.0 * p[0] + p[1];
        y[1] = p[0] + p[1];
        return y;
    };
    m.inverse = [](const Vec& q) {
        Vec p(2);
        p[0] = q[0] - q[1];
        p[1] = -q[0] + 2.0 * q[1];
        return p;
    };
    m.jacobian = [](const Vec&) {
        Mat J(2, 2);
        J << 2.0, 1.0, 1.0, 1.0;
        return J;
    };
    return m;
}

SmoothMap make_henon_saddle() {
    const double a = 1.4, b = 0.3;
    SmoothMap m;
    m.dim = 2;
    m.topology = all_lines(2);
    m.forward = [a, b](const Vec& p) {
        Vec y(2);
        y[0] = 1.0 - a * p[0] * p[0] + p[1];
        y[1] = b * p[0];
        return y;
    };
    m.inverse = [a, b](const Vec& q) {
        Vec p(2);
        p[0] = q[1] / b;
        p[1] = q[0] - 1.0 + a * p[0] * p[0];
        return p;
    };
    m.jacobian = [a, b](const Vec& p) {
        Mat J(2, 2);
        J << -2.0 * a * p[0], 1.0, b, 0.0;
        return J;
    };
    return m;
}

Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    Box b;
    b.lo = Vec(static_cast<long>(lo.size()));
    b.hi = Vec(static_cast<long>(hi.size()));
    int i = 0;
    for (double v : lo) b.lo[i++] = v;
    i = 0;
    for (double v : hi) b.hi[i++] = v;
    return b;
}

std::vector<SystemRegistryEntry> build_registry() {
    std::vector<SystemRegistryEntry> reg;

    {
        SystemRegistryEntry e;
        e.name = "linear3";
        e.map = make_linear3();
        e.working_box = make_box({-1, -1, -1}, {1, 1, 1});
        e.known_set = {Vec::Zero(3)};
        e.strong_dim = 1;
        Mat E(3, 2);
        E << 1, 0, 0, 1, 0, 0;
        Mat F(3, 1);
        F << 0, 0, 1;
        e.pinned_E = E;
        e.pinned_F = F;
        // y-axis is the center manifold of the (1,1,1)-saddle grouping
        e.known_scalars["saddle_center_axis"] = 1.0;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "curved2";
        e.map = make_curved2();
        e.working_box = make_box({-0.6, -0.6}, {0.6, 0.6});
        e.known_set = {Vec::Zero(2)};
        e.strong_dim = 1;
        e.known_scalars["d2h_origin"] = -2.0;  // second derivative of the fixed graph at 0
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "saddle3";
        e.map = make_saddle3();
        e.working_box = make_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
        e.known_set = {Vec::Zero(3)};
        e.strong_dim = 1;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "henon_x_expand";
        e.map = make_henon3(false);
        e.working_box = make_box({-2, -2, -1}, {2, 2, 1});
        e.strong_dim = 1;
        Mat E(3, 2);
        E << 1, 0, 0, 1, 0, 0;
        Mat F(3, 1);
        F << 0, 0, 1;
        // The vertical line field {x,y = const} is exactly f-invariant; the
        // graph transform runs over the (x,y) plane with these fibers even
        // though the in-plane expansion is not dominated by the fiber rate.
        e.pinned_E = E;
        e.pinned_F = F;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "henon_x_expand_coupled";
        e.map = make_henon3(true);
        e.working_box = make_box({-2, -2, -1}, {2, 2, 1});
        e.strong_dim = 1;
        Mat E(3, 2);
        E << 1, 0, 0, 1, 0, 0;
        Mat F(3, 1);
        F << 0, 0, 1;
        e.pinned_E = E;
        e.pinned_F = F;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "solenoid";
        e.map = make_solenoid();
        e.working_box = make_box({0, -0.7, -0.7}, {1, 0.7, 0.7});
        e.strong_dim = 1;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "cat_linear";
        e.map = make_cat_linear();
        e.working_box = make_box({0, 0}, {1, 1});
        e.whole_box_invariant = true;
        e.strong_dim = 1;
        // eigenvalue (3+sqrt5)/2 with eigenvector slope (sqrt5-1)/2
        e.known_scalars["unstable_eigenvalue"] = (3.0 + std::sqrt(5.0)) / 2.0;
        e.known_scalars["unstable_slope"] = (std::sqrt(5.0) - 1.0) / 2.0;
        e.known_scalars["stable_eigenvalue"] = (3.0 - std::sqrt(5.0)) / 2.0;
        e.known_scalars["stable_slope"] = -(1.0 + std::sqrt(5.0)) / 2.0;
        reg.push_back(std::move(e));
    }
    {
        SystemRegistryEntry e;
        e.name = "henon_saddle";
        e.map = make_henon_saddle();
        e.working_box = make_box({-1.5, -0.5}, {1.5, 0.5});
        const double a = 1.4, b = 0.3;
        const double xs = (b - 1.0 + std::sqrt((1.0 - b) * (1.0 - b) + 4.0 * a)) / (2.0 * a);
        Vec fp(2);
        fp << xs, b * xs;
        e.known_set = {fp};
        e.strong_dim = 1;
        e.known_scalars["fixed_x"] = xs;
        e.known_scalars["fixed_y"] = b * xs;
        reg.push_back(std::move(e));
    }
    return reg;
}

}  // namespace

const std::vector<SystemRegistryEntry>& builtin_registry() {
    static const std::vector<SystemRegistryEntry> reg = build_registry();
    return reg;
}

const SystemRegistryEntry& registry_lookup(const std::string& name) {
    for (const auto& e : builtin_registry())
        if (e.name == name) return e;
    throw NotFound("registry_lookup: no system named '" + name + "'");
}

SmoothMap polynomial_map(int dim, const std::vector<PolyCoord>& coords,
                         const std::vector<PolyCoord>& inverse_coords, Topology topo) {
    if (static_cast<int>(coords.size()) != dim)
        throw std::invalid_argument("polynomial_map: need one coordinate list per dimension");
    auto eval_poly = [dim](const std::vector<PolyCoord>& cs, const Vec& x) {
        Vec y(dim);
        for (int i = 0; i < dim; ++i) {
            double s = 0.0;
            for (const auto& mono : cs[static_cast<std::size_t>(i)]) {
                double t = mono.coeff;
                for (int j = 0; j < dim; ++j)
                    for (int k = 0; k < mono.exps[static_cast<std::size_t>(j)]; ++k) t *= x[j];
                s += t;
            }
            y[i] = s;
        }
        return y;
    };
    SmoothMap m;
    m.dim = dim;
    m.topology = topo.empty() ? all_lines(dim) : std::move(topo);
    m.forward = [coords, eval_poly](const Vec& x) { return eval_poly(coords, x); };
    if (!inverse_coords.empty())
        m.inverse = [inverse_coords, eval_poly](const Vec& x) { return eval_poly(inverse_coords, x); };
    m.jacobian = [coords, dim](const Vec& x) {
        Mat J = Mat::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) {
            for (const auto& mono : coords[static_cast<std::size_t>(i)]) {
                for (int j = 0; j < dim; ++j) {
                    int ej = mono.exps[static_cast<std::size_t>(j)];
                    if (ej == 0) continue;
                    double t = mono.coeff * ej;
                    for (int l = 0; l < dim; ++l) {
                        int e = mono.exps[static_cast<std::size_t>(l)] - (l == j ? 1 : 0);
                        for (int k = 0; k < e; ++k) t *= x[l];
                    }
                    J(i, j) += t;
                }
            }
        }
        return J;
    };
    return m;
}

}  // namespace cmkit
