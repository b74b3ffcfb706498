#pragma once

#include <string>
#include <vector>

#include "sipulse/autodiff.hpp"
#include "sipulse/core.hpp"

namespace sipulse {

// Compact time-conditioned 1-D convolutional vector field. Residual conv
// blocks with SiLU, a sinusoidal embedding of t entering as a per-channel
// bias after the first convolution, and a zero-initialized output layer so
// the untrained field starts at the identity map.
struct NetConfig {
    int channels = 5;   // R, input == output
    int hidden = 32;
    int kernel = 5;
    int blocks = 4;
    int time_dim = 32;  // sinusoidal embedding width, must be even
};

inline bool operator==(const NetConfig& a, const NetConfig& b) {
    return a.channels == b.channels && a.hidden == b.hidden && a.kernel == b.kernel &&
           a.blocks == b.blocks && a.time_dim == b.time_dim;
}

inline std::vector<double> time_embedding(double t, int dim) {
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        // frequencies spread geometrically over [1, 1000]
        const double w = std::pow(1000.0, static_cast<double>(i) / std::max(half - 1, 1));
        e[2 * i] = std::sin(w * t);
        e[2 * i + 1] = std::cos(w * t);
    }
    return e;
}

namespace detail {

inline ad::Tensor uniform_init(int ch, int len, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    ad::Tensor t(ch, len);
    for (double& x : t.v) x = u(rng);
    return t;
}

}  // namespace detail

// Fan-in-scaled uniform init; final layer zero.
inline ad::Params init_params(const NetConfig& cfg, uint64_t seed) {
    if (cfg.time_dim % 2 != 0) throw architecture_error("NetConfig: time_dim must be even");
    Rng rng = make_rng(seed);
    ad::Params p;
    p["embed.w"] = detail::uniform_init(cfg.hidden, cfg.time_dim, cfg.time_dim, rng);
    p["embed.b"] = ad::Tensor(cfg.hidden, 1);
    p["conv_in.w"] =
        detail::uniform_init(cfg.hidden, cfg.channels * cfg.kernel, cfg.channels * cfg.kernel, rng);
    p["conv_in.b"] = ad::Tensor(cfg.hidden, 1);
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "block" + std::to_string(b);
        const int fan = cfg.hidden * cfg.kernel;
        p[base + ".conv1.w"] = detail::uniform_init(cfg.hidden, fan, fan, rng);
        p[base + ".conv1.b"] = ad::Tensor(cfg.hidden, 1);
        p[base + ".conv2.w"] = detail::uniform_init(cfg.hidden, fan, fan, rng);
        p[base + ".conv2.b"] = ad::Tensor(cfg.hidden, 1);
    }
    p["conv_out.w"] = ad::Tensor(cfg.channels, cfg.hidden * cfg.kernel);
    p["conv_out.b"] = ad::Tensor(cfg.channels, 1);
    return p;
}

inline void check_params(const NetConfig& cfg, const ad::Params& p) {
    const ad::Params ref = init_params(cfg, 0);
    if (p.size() != ref.size()) throw architecture_error("params: wrong parameter count");
    for (const auto& [name, t] : ref) {
        auto it = p.find(name);
        if (it == p.end() || !it->second.same_shape(t))
            throw architecture_error("params: missing or misshapen '" + name + "'");
        if (!ad::all_finite(it->second))
            throw numeric_error("params: non-finite values in '" + name + "'");
    }
}

namespace detail {

inline void conv1d_plain(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b, int K,
                         ad::Tensor& out) {
    const int cin = x.ch, T = x.len, cout = w.ch, P = (K - 1) / 2;
    out = ad::Tensor(cout, T);
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < T; ++i) {
            double acc = b(o, 0);
            for (int c = 0; c < cin; ++c) {
                const double* wr = &w.v[static_cast<size_t>(o) * w.len + c * K];
                const double* xr = &x.v[static_cast<size_t>(c) * T];
                const int k0 = std::max(0, P - i);
                const int k1 = std::min(K, T + P - i);
                for (int k = k0; k < k1; ++k) acc += wr[k] * xr[i + k - P];
            }
            out(o, i) = acc;
        }
    }
}

inline void silu_inplace(ad::Tensor& x) {
    for (double& y : x.v) y *= 1.0 / (1.0 + std::exp(-y));
}

}  // namespace detail

// Tape-free forward pass for inference; must agree bit-for-bit with the
// traced version below (tested).
inline ad::Tensor net_forward(const NetConfig& cfg, const ad::Params& p, double t,
                              const ad::Tensor& x) {
    if (x.ch != cfg.channels) throw architecture_error("net_forward: channel count mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw argument_error("net_forward: t must lie in [0,1]");
    if (!ad::all_finite(x)) throw numeric_error("net_forward: non-finite input");

    const std::vector<double> e = time_embedding(t, cfg.time_dim);
    const ad::Tensor& ew = p.at("embed.w");
    const ad::Tensor& eb = p.at("embed.b");
    ad::Tensor tbias(cfg.hidden, 1);
    for (int m = 0; m < cfg.hidden; ++m) {
        double acc = eb(m, 0);
        for (int n = 0; n < cfg.time_dim; ++n) acc += ew(m, n) * e[n];
        tbias(m, 0) = acc;
    }

    ad::Tensor h;
    detail::conv1d_plain(x, p.at("conv_in.w"), p.at("conv_in.b"), cfg.kernel, h);
    for (int c = 0; c < h.ch; ++c)
        for (int i = 0; i < h.len; ++i) h(c, i) += tbias(c, 0);
    detail::silu_inplace(h);

    ad::Tensor u, u2;
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "block" + std::to_string(b);
        detail::conv1d_plain(h, p.at(base + ".conv1.w"), p.at(base + ".conv1.b"), cfg.kernel, u);
        detail::silu_inplace(u);
        detail::conv1d_plain(u, p.at(base + ".conv2.w"), p.at(base + ".conv2.b"), cfg.kernel, u2);
        for (size_t i = 0; i < h.size(); ++i) h.v[i] += u2.v[i];
    }

    ad::Tensor out;
    detail::conv1d_plain(h, p.at("conv_out.w"), p.at("conv_out.b"), cfg.kernel, out);
    return out;
}

// Leaf node ids for one parameter set on a tape.
using ParamRefs = std::map<std::string, int>;

inline ParamRefs register_params(ad::Tape& tape, const ad::Params& p) {
    ParamRefs refs;
    for (const auto& [name, t] : p) refs[name] = tape.leaf(t, name);
    return refs;
}

// Traced forward pass for training. Same computation as net_forward.
inline int net_forward_traced(ad::Tape& tape, const NetConfig& cfg, const ParamRefs& p, double t,
                              int x) {
    const std::vector<double> e = time_embedding(t, cfg.time_dim);
    ad::Tensor et(cfg.time_dim, 1);
    for (int n = 0; n < cfg.time_dim; ++n) et(n, 0) = e[n];
    const int ei = tape.leaf(std::move(et), "time_embed");
    const int tbias = tape.matvec(p.at("embed.w"), ei, p.at("embed.b"));

    int h = tape.conv1d(x, p.at("conv_in.w"), p.at("conv_in.b"), cfg.kernel);
    h = tape.bias_broadcast(h, tbias);
    h = tape.silu(h);

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "block" + std::to_string(b);
        int u = tape.conv1d(h, p.at(base + ".conv1.w"), p.at(base + ".conv1.b"), cfg.kernel);
        u = tape.silu(u);
        u = tape.conv1d(u, p.at(base + ".conv2.w"), p.at(base + ".conv2.b"), cfg.kernel);
        h = tape.add(h, u);
    }
    return tape.conv1d(h, p.at("conv_out.w"), p.at("conv_out.b"), cfg.kernel);
}

// --- layout conversion ------------------------------------------------------

// SignalWindow matrices are T x R (time-major); the network runs channel-major.
inline ad::Tensor to_tensor(const Grid& g) {
    ad::Tensor t(g.cols, g.rows);
    for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) t(j, i) = g(i, j);
    return t;
}

inline Grid to_grid(const ad::Tensor& t) {
    Grid g(t.len, t.ch);
    for (int c = 0; c < t.ch; ++c)
        for (int i = 0; i < t.len; ++i) g(i, c) = t(c, i);
    return g;
}

}  // namespace sipulse
