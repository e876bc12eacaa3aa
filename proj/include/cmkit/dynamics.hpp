#pragma once

#include "cmkit/common.hpp"

#include <map>
#include <optional>

namespace cmkit {

struct MissingInverse : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A diffeomorphism of a flat ambient space (product of lines and circles).
// `forward`/`inverse` act on unwrapped coordinates; `evaluate` wraps circle
// coordinates after each application.
struct SmoothMap {
    int dim = 0;
    std::function<Vec(const Vec&)> forward;
    std::function<Vec(const Vec&)> inverse;   // empty when not available
    std::function<Mat(const Vec&)> jacobian;  // empty: use finite differences
    Topology topology;

    bool has_inverse() const { return static_cast<bool>(inverse); }
    bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

Vec evaluate(const SmoothMap& map, Vec x, long steps);
Mat jacobian_at(const SmoothMap& map, const Vec& x);
// Jacobian of the inverse map at x, i.e. (Df at f^{-1}(x))^{-1}.
Mat inverse_jacobian_at(const SmoothMap& map, const Vec& x);
// The map itself or its inverse as a SmoothMap (for running pipelines backward).
SmoothMap reversed(const SmoothMap& map);

// Damped Newton solve of forward(p) = target; used for maps whose inverse
// has no closed form. Throws NonFinite on divergence.
Vec newton_inverse(const SmoothMap& map, const Vec& target, Vec seed, double tol = 1e-13,
                   int max_iters = 60);

struct SystemRegistryEntry {
    std::string name;
    SmoothMap map;
    Box working_box;
    std::vector<Vec> known_set;                // seed points of the invariant set
    std::map<std::string, double> known_scalars;
    std::optional<Mat> pinned_E, pinned_F;     // constant splitting frames, when the
                                               // product structure makes them exact
    int strong_dim = 1;                        // fiber dimension d_F for pipelines
    bool whole_box_invariant = false;          // K equals the working box (cat_linear)
};

const std::vector<SystemRegistryEntry>& builtin_registry();
const SystemRegistryEntry& registry_lookup(const std::string& name);

// User-defined polynomial map: per output coordinate, a list of monomials
// (coefficient, exponent per input coordinate). Jacobian is analytic.
struct Monomial {
    double coeff = 0.0;
    std::vector<int> exps;
};
using PolyCoord = std::vector<Monomial>;

SmoothMap polynomial_map(int dim, const std::vector<PolyCoord>& coords,
                         const std::vector<PolyCoord>& inverse_coords = {},
                         Topology topo = {});

}  // namespace cmkit
