#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sipulse {

// Dense T x R matrix of doubles, row-major (time runs over rows,
// channels/regions over columns).
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

inline bool all_finite(const Grid& g) {
    for (double x : g.v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Passband outside (0, Nyquist) or inverted.
struct band_error : argument_error {
    using argument_error::argument_error;
};

// gamma'(t) or 1/gamma(t) requested at t in {0,1}.
struct singularity_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Correlation of constant inputs, division by near-zero channel, etc.
struct degenerate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct architecture_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Checkpoint or manifest hash mismatch.
struct integrity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training loss or SDE state left the finite range.
struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64: decorrelates nearby seeds before they feed an engine.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng make_rng(uint64_t seed) { return Rng(mix_seed(seed)); }

}  // namespace sipulse
