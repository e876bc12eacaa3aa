#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmkit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct NonFinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-coordinate topology of the ambient space: a product of lines and
// unit circles (period 1). All charts are global and affine.
enum class CoordKind : std::uint8_t { Line, Circle };
using Topology = std::vector<CoordKind>;

Topology all_lines(int n);

// Wrap circle coordinates into [0,1); line coordinates pass through.
Vec wrap_point(Vec x, const Topology& topo);
// Shortest representative of a displacement: circle entries into [-1/2,1/2).
Vec wrap_delta(Vec d, const Topology& topo);
double distance(const Vec& a, const Vec& b, const Topology& topo);

struct Box {
    Vec lo, hi;
    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Vec& x, double slack = 0.0) const;
    Vec center() const { return 0.5 * (lo + hi); }
    Vec widths() const { return hi - lo; }
    double max_width() const { return (hi - lo).maxCoeff(); }
};

// Deterministic per-purpose RNG substream derived from a single 64-bit seed.
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose);
Vec random_unit_vector(std::mt19937_64& g, int n);

// Deterministic parallel loop: body(i) writes only to slot i of preallocated
// storage; chunk layout is independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);
int worker_count();
void set_worker_count(int workers);

// Orthonormal basis of the column span, deterministic sign convention.
Mat orthonormalize(const Mat& A);
// Largest principal angle between the column spans of two matrices.
double largest_principal_angle(const Mat& A, const Mat& B);
// Angle between two lines spanned by single vectors, in [0, pi/2].
double line_angle(const Vec& a, const Vec& b);

// Central finite differences with step 1e-5 * max(1, |x|).
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x);

// Quintic smoothstep 6t^5 - 15t^4 + 10t^3, clamped to [0,1].
double smoothstep5(double t);
double smoothstep5_deriv(double t);

void require_finite(const Vec& x, const char* what);

}  // namespace cmkit
