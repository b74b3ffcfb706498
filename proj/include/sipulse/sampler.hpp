#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "sipulse/core.hpp"
#include "sipulse/interpolant.hpp"
#include "sipulse/network.hpp"
#include "sipulse/signals.hpp"

namespace sipulse {

// A time-conditioned vector field exposing the learned flow v(t,x) and
// denoiser n(t,x). Tests substitute closed-form fields through the same
// interface.
class VectorField {
  public:
    virtual ~VectorField() = default;
    virtual Grid flow(double t, const Grid& x) const = 0;
    virtual Grid denoiser(double t, const Grid& x) const = 0;
};

class NetField : public VectorField {
  public:
    NetField(const NetConfig& cfg, const ad::Params& pv, const ad::Params& pn)
        : cfg_(cfg), pv_(pv), pn_(pn) {}

    Grid flow(double t, const Grid& x) const override {
        return to_grid(net_forward(cfg_, pv_, t, to_tensor(x)));
    }
    Grid denoiser(double t, const Grid& x) const override {
        return to_grid(net_forward(cfg_, pn_, t, to_tensor(x)));
    }

  private:
    NetConfig cfg_;
    const ad::Params& pv_;
    const ad::Params& pn_;
};

enum class DriftKind { Plain, Forward, Backward };

// The gamma' term of the drift admits two printed forms; the consistent one
// is b = v + gamma'(t) n. The alternative b = v - gamma(t) gamma'(t) n is
// kept selectable for comparison.
enum class DriftForm { Consistent, Alternative };

struct SamplerConfig {
    double epsilon = 0.5;  // constant noise schedule
    int steps = 500;
    double t_clamp = 1e-3;
    int n_realizations = 100;
    uint64_t seed = 0;
    std::vector<double> snapshot_times;  // t values to record
    DriftForm form = DriftForm::Consistent;
};

inline void validate(const SamplerConfig& cfg) {
    if (!(cfg.epsilon >= 0.0)) throw argument_error("SamplerConfig: epsilon must be >= 0");
    if (cfg.steps < 2) throw argument_error("SamplerConfig: steps must be >= 2");
    if (!(cfg.t_clamp > 0.0 && cfg.t_clamp < 0.1))
        throw argument_error("SamplerConfig: t_clamp must lie in (0, 0.1)");
    if (cfg.n_realizations < 1)
        throw argument_error("SamplerConfig: n_realizations must be >= 1");
}

inline Grid drift(const VectorField& field, double t, const Grid& x, double epsilon,
                  DriftKind kind, DriftForm form = DriftForm::Consistent) {
    if (!(t > 0.0 && t < 1.0)) throw singularity_error("drift: t outside (0,1)");
    const Grid v = field.flow(t, x);
    const Grid n = field.denoiser(t, x);
    const double g = gamma_env(t);
    const double gdot = gamma_env_dot(t);
    const double ncoef = form == DriftForm::Consistent ? gdot : -g * gdot;

    Grid b(x.rows, x.cols);
    for (size_t i = 0; i < b.v.size(); ++i) b.v[i] = v.v[i] + ncoef * n.v[i];
    if (kind == DriftKind::Plain || epsilon == 0.0) return b;

    const double sign = kind == DriftKind::Forward ? 1.0 : -1.0;
    for (size_t i = 0; i < b.v.size(); ++i) b.v[i] += sign * epsilon * (-n.v[i] / g);
    return b;
}

struct Trajectory {
    std::vector<double> times;  // decreasing t values of recorded states
    std::vector<Grid> states;
    Grid terminal;  // the pulse estimate x_hat_0
};

// Pre-drawn Wiener increments (unscaled by sqrt(2*epsilon)), one per step.
// Used by convergence studies that refine a shared path.
using WienerPath = std::vector<Grid>;

inline WienerPath draw_wiener_path(int steps, int rows, int cols, double dt, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sdt = std::sqrt(dt);
    WienerPath path(steps, Grid(rows, cols));
    for (Grid& g : path)
        for (double& x : g.v) x = sdt * gauss(rng);
    return path;
}

// Euler-Maruyama in reversed time s = 1 - t from the measurement x1 down to
// the pulse estimate. t runs over [t_clamp, 1 - t_clamp] in equal steps.
inline Trajectory reverse_sample(const Grid& x1, const VectorField& field,
                                 const SamplerConfig& cfg, Rng& rng,
                                 const WienerPath* wiener = nullptr) {
    validate(cfg);
    const int steps = cfg.steps;
    const double ds = (1.0 - 2.0 * cfg.t_clamp) / steps;
    const double diffusion = std::sqrt(2.0 * cfg.epsilon);

    WienerPath local;
    if (wiener == nullptr) {
        local = draw_wiener_path(steps, x1.rows, x1.cols, ds, rng);
        wiener = &local;
    } else if (static_cast<int>(wiener->size()) != steps) {
        throw argument_error("reverse_sample: Wiener path length != steps");
    }

    Trajectory traj;
    Grid x = x1;

    // Each requested snapshot time maps to its nearest state on the step
    // grid, so every snapshot is recorded exactly once.
    std::vector<std::pair<int, double>> targets;
    for (double snap : cfg.snapshot_times) {
        int k = static_cast<int>(std::lround((1.0 - cfg.t_clamp - snap) / ds));
        k = std::max(0, std::min(steps, k));
        targets.emplace_back(k, snap);
    }
    std::sort(targets.begin(), targets.end());

    auto record = [&](int k, const Grid& state) {
        const double t = 1.0 - cfg.t_clamp - k * ds;
        for (const auto& [kt, snap] : targets)
            if (kt == k) {
                traj.times.push_back(t);
                traj.states.push_back(state);
            }
    };

    record(0, x);
    for (int k = 0; k < steps; ++k) {
        const double s = cfg.t_clamp + k * ds;
        const double t = 1.0 - s;
        const Grid bB = drift(field, t, x, cfg.epsilon, DriftKind::Backward, cfg.form);
        const Grid& dw = (*wiener)[k];
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += -bB.v[i] * ds + diffusion * dw.v[i];
        if (!all_finite(x))
            throw divergence_error("reverse_sample: state blew up at step " + std::to_string(k) +
                                   " (t = " + std::to_string(t - ds) + ")");
        record(k + 1, x);
    }
    traj.terminal = std::move(x);
    return traj;
}

// N independent realizations with per-realization seeds derived from the
// master seed; results are identical regardless of execution order or the
// number of worker threads.
inline std::vector<Trajectory> ensemble(const Grid& x1, const VectorField& field,
                                        const SamplerConfig& cfg, uint64_t master_seed,
                                        int jobs = 1) {
    validate(cfg);
    const int N = cfg.n_realizations;
    std::vector<Trajectory> out(N);
    std::vector<std::string> errors(N);

    auto run_range = [&](int lo, int hi) {
        for (int k = lo; k < hi; ++k) {
            try {
                Rng rng = make_rng(master_seed ^ static_cast<uint64_t>(k));
                out[k] = reverse_sample(x1, field, cfg, rng);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        }
    };

    jobs = std::max(1, std::min(jobs, N));
    if (jobs == 1) {
        run_range(0, N);
    } else {
        std::vector<std::thread> workers;
        const int chunk = (N + jobs - 1) / jobs;
        for (int w = 0; w < jobs; ++w)
            workers.emplace_back(run_range, w * chunk, std::min(N, (w + 1) * chunk));
        for (std::thread& th : workers) th.join();
    }

    for (int k = 0; k < N; ++k)
        if (!errors[k].empty())
            throw divergence_error("ensemble: realization " + std::to_string(k) + ": " + errors[k]);
    return out;
}

}  // namespace sipulse
