#pragma once

#include "sipulse/core.hpp"

namespace sipulse {

// Noise envelope of the interpolant: gamma(t) = sqrt(2 t (1-t)).
inline double gamma_env(double t) {
    if (t < 0.0 || t > 1.0) throw argument_error("gamma: t must lie in [0,1]");
    return std::sqrt(2.0 * t * (1.0 - t));
}

// gamma'(t) = (1-2t)/sqrt(2t(1-t)); diverges at the endpoints, callers clamp.
inline double gamma_env_dot(double t) {
    if (!(t > 0.0 && t < 1.0))
        throw singularity_error("gamma_dot: undefined at t in {0,1}");
    return (1.0 - 2.0 * t) / std::sqrt(2.0 * t * (1.0 - t));
}

struct InterpolantSample {
    double t = 0.0;
    Grid x_t;          // (1-t) x0 + t x1 + gamma(t) z
    Grid z;            // the injected standard normal draw
    Grid flow_target;  // x1 - x0, independent of t
};

inline InterpolantSample interpolate_with_noise(const Grid& x0, const Grid& x1, double t,
                                                const Grid& z) {
    if (!x0.same_shape(x1) || !x0.same_shape(z))
        throw argument_error("sample_point: shape mismatch");
    if (t < 0.0 || t > 1.0) throw argument_error("sample_point: t must lie in [0,1]");

    InterpolantSample s;
    s.t = t;
    s.z = z;
    s.flow_target = Grid(x0.rows, x0.cols);
    s.x_t = Grid(x0.rows, x0.cols);
    const double g = gamma_env(t);
    for (size_t i = 0; i < x0.v.size(); ++i) {
        s.flow_target.v[i] = x1.v[i] - x0.v[i];
        s.x_t.v[i] = (1.0 - t) * x0.v[i] + t * x1.v[i] + g * z.v[i];
    }
    return s;
}

inline InterpolantSample sample_point(const Grid& x0, const Grid& x1, double t, Rng& rng) {
    Grid z(x0.rows, x0.cols);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& x : z.v) x = gauss(rng);
    return interpolate_with_noise(x0, x1, t, z);
}

// Tweedie relation: s(t,x) = -n(t,x)/gamma(t).
inline Grid score_from_denoiser(const Grid& n, double t) {
    if (!(t > 0.0 && t < 1.0))
        throw singularity_error("score_from_denoiser: undefined at t in {0,1}");
    const double g = gamma_env(t);
    Grid s = n;
    for (double& x : s.v) x = -x / g;
    return s;
}

}  // namespace sipulse
