#pragma once

#include "sipulse/autodiff.hpp"
#include "sipulse/core.hpp"

namespace sipulse {

struct AdamState {
    ad::Params m;  // first moments, shape-matched to params
    ad::Params v;  // second moments
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(const ad::Params& params, double lr = 1e-3) {
    AdamState st;
    st.lr = lr;
    for (const auto& [name, t] : params) {
        st.m[name] = ad::Tensor(t.ch, t.len);
        st.v[name] = ad::Tensor(t.ch, t.len);
    }
    return st;
}

// Standard Adam update with bias correction; modifies params and state.
inline void adam_step(ad::Params& params, const ad::Params& grads, AdamState& st) {
    if (!(st.lr > 0.0)) throw argument_error("adam_step: lr must be positive");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));

    for (auto& [name, p] : params) {
        const ad::Tensor& g = grads.at(name);
        if (!g.same_shape(p)) throw argument_error("adam_step: gradient shape mismatch");
        if (!ad::all_finite(g)) throw numeric_error("adam_step: non-finite gradient in '" + name + "'");
        ad::Tensor& m = st.m.at(name);
        ad::Tensor& v = st.v.at(name);
        for (size_t i = 0; i < p.size(); ++i) {
            m.v[i] = st.beta1 * m.v[i] + (1.0 - st.beta1) * g.v[i];
            v.v[i] = st.beta2 * v.v[i] + (1.0 - st.beta2) * g.v[i] * g.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p.v[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace sipulse
