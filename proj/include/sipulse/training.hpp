#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "sipulse/autodiff.hpp"
#include "sipulse/core.hpp"
#include "sipulse/interpolant.hpp"
#include "sipulse/network.hpp"
#include "sipulse/optim.hpp"
#include "sipulse/synth.hpp"

namespace sipulse {

struct TrainConfig {
    double lambda_rcl = 0.1;
    double delta_shift_sec = 9.0;
    int batch_size = 32;
    int epochs = 10;
    double lr = 1e-3;
    uint64_t seed = 0;
    int window_length = 250;
    int stride = 10;
    double t_min = 1e-3;       // training t drawn uniformly on [t_min, 1-t_min]
    double val_fraction = 0.1;  // fraction of subjects held out
    int steps_per_epoch = 0;    // 0: derived from dataset size
};

// 1 - Pearson correlation, computed on flattened residuals. Defined as 0 when
// both residuals are exactly zero so the loss stays continuous at the optimum.
inline double rcl_loss(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.size() < 2)
        throw argument_error("rcl_loss: need equal lengths >= 2");

    bool p_zero = true, q_zero = true;
    for (double x : p) p_zero = p_zero && x == 0.0;
    for (double x : q) q_zero = q_zero && x == 0.0;
    if (p_zero && q_zero) return 0.0;

    const double n = static_cast<double>(p.size());
    double mp = 0.0, mq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        mq += q[i];
    }
    mp /= n;
    mq /= n;

    double cov = 0.0, vp = 0.0, vq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double dp = p[i] - mp;
        const double dq = q[i] - mq;
        cov += dp * dq;
        vp += dp * dp;
        vq += dq * dq;
    }
    if (vp == 0.0 || vq == 0.0)
        throw degenerate_error("rcl_loss: correlation undefined for constant input");
    return 1.0 - cov / std::sqrt(vp * vq);
}

inline double rcl_loss(const Grid& p, const Grid& q) { return rcl_loss(p.v, q.v); }

// Two overlapping window pairs from one subject; the second starts exactly
// delta samples earlier.
struct ShiftedPair {
    Grid x0_a, x1_a;  // window at origin i
    Grid x0_b, x1_b;  // window at origin i - delta
};

inline ShiftedPair sample_shifted_pair(const Dataset& ds, int subject, int origin, int delta,
                                       int window_length) {
    const SubjectTrack& tr = ds.subjects.at(subject);
    const int total = static_cast<int>(tr.x0.size());
    const int R = tr.x1.cols;
    if (origin - delta < 0)
        throw argument_error("sample_shifted_pair: insufficient history before origin");
    if (origin + window_length > total)
        throw argument_error("sample_shifted_pair: window exceeds track");

    auto slice_x1 = [&](int from) {
        Grid g(window_length, R);
        for (int i = 0; i < window_length; ++i)
            for (int j = 0; j < R; ++j) g(i, j) = tr.x1(from + i, j);
        return g;
    };

    ShiftedPair pair;
    pair.x0_a = replicate_channels(tr.x0, origin, window_length, R);
    pair.x1_a = slice_x1(origin);
    pair.x0_b = replicate_channels(tr.x0, origin - delta, window_length, R);
    pair.x1_b = slice_x1(origin - delta);
    return pair;
}

struct LossBreakdown {
    double flow = 0.0;
    double score = 0.0;
    double rcl = 0.0;
    double total = 0.0;
};

namespace detail {

// Pearson correlation of two tape tensors as a scalar node.
inline int pearson_node(ad::Tape& tape, int p, int q) {
    const double n = static_cast<double>(tape.val(p).size());
    const int mp = tape.scale(tape.sum(p), 1.0 / n);
    const int mq = tape.scale(tape.sum(q), 1.0 / n);
    const int pc = tape.sub_scalar(p, mp);
    const int qc = tape.sub_scalar(q, mq);
    const int cov = tape.dot(pc, qc);
    const int denom = tape.s_sqrt(tape.s_mul(tape.dot(pc, pc), tape.dot(qc, qc)));
    return tape.s_div(cov, denom);
}

inline bool all_zero(const ad::Tensor& t) {
    for (double x : t.v)
        if (x != 0.0) return false;
    return true;
}

}  // namespace detail

// Loss of one batch of shifted pairs with both networks, plus parameter
// gradients (averaged over the batch). The same t and the same z are used for
// both windows of each couple so the residual comparison happens at matched
// interpolation time. RCL couples the flow residuals of the two windows.
inline LossBreakdown total_loss(const std::vector<ShiftedPair>& batch, const NetConfig& net,
                                const ad::Params& params_v, const ad::Params& params_n,
                                double lambda_rcl, double t_min, Rng& rng,
                                ad::Params* grads_v = nullptr, ad::Params* grads_n = nullptr) {
    if (batch.empty()) throw argument_error("total_loss: empty batch");
    if (lambda_rcl < 0.0 || !std::isfinite(lambda_rcl))
        throw argument_error("total_loss: lambda_rcl must be finite and >= 0");

    std::uniform_real_distribution<double> ut(t_min, 1.0 - t_min);
    std::normal_distribution<double> gauss(0.0, 1.0);

    if (grads_v)
        for (auto& [k, g] : *grads_v) std::fill(g.v.begin(), g.v.end(), 0.0);
    if (grads_n)
        for (auto& [k, g] : *grads_n) std::fill(g.v.begin(), g.v.end(), 0.0);

    LossBreakdown out;
    const double bscale = 1.0 / static_cast<double>(batch.size());

    for (const ShiftedPair& pair : batch) {
        const double t = ut(rng);
        Grid z(pair.x0_a.rows, pair.x0_a.cols);
        for (double& x : z.v) x = gauss(rng);

        const InterpolantSample sa = interpolate_with_noise(pair.x0_a, pair.x1_a, t, z);
        const InterpolantSample sb = interpolate_with_noise(pair.x0_b, pair.x1_b, t, z);

        ad::Tape tape;
        const ParamRefs rv = register_params(tape, params_v);
        const ParamRefs rn = register_params(tape, params_n);

        const int xa = tape.leaf(to_tensor(sa.x_t), "x_t");
        const int xb = tape.leaf(to_tensor(sb.x_t), "x_t_shift");
        const int ta = tape.leaf(to_tensor(sa.flow_target), "flow_target");
        const int tb = tape.leaf(to_tensor(sb.flow_target), "flow_target_shift");
        const int za = tape.leaf(to_tensor(sa.z), "z");

        const int va = net_forward_traced(tape, net, rv, t, xa);
        const int vb = net_forward_traced(tape, net, rv, t, xb);
        const int na = net_forward_traced(tape, net, rn, t, xa);
        const int nb = net_forward_traced(tape, net, rn, t, xb);

        const int flow = tape.scale(tape.add(tape.mse(va, ta), tape.mse(vb, tb)), 0.5);
        const int score = tape.scale(tape.add(tape.mse(na, za), tape.mse(nb, za)), 0.5);

        int total = tape.add(flow, score);
        double rcl_val = 0.0;
        if (lambda_rcl > 0.0) {
            const int p = tape.sub(ta, va);
            const int q = tape.sub(tb, vb);
            if (detail::all_zero(tape.val(p)) && detail::all_zero(tape.val(q))) {
                rcl_val = 0.0;  // both residuals exactly zero: RCL := 0
            } else {
                const int r = detail::pearson_node(tape, p, q);
                rcl_val = 1.0 - tape.val(r).scalar();
                // 1 - r, folded into the total via the tape
                const int one = tape.leaf(ad::Tensor(1, 1, 1.0), "one");
                const int rcl = tape.sub(one, r);
                total = tape.add(total, tape.scale(rcl, lambda_rcl));
            }
        }

        out.flow += bscale * tape.val(flow).scalar();
        out.score += bscale * tape.val(score).scalar();
        out.rcl += bscale * rcl_val;
        out.total += bscale * tape.val(total).scalar();

        if (grads_v || grads_n) {
            tape.backward(total);
            if (grads_v)
                for (auto& [name, g] : *grads_v) {
                    const ad::Tensor& gg = tape.grad(rv.at(name));
                    for (size_t i = 0; i < g.size(); ++i) g.v[i] += bscale * gg.v[i];
                }
            if (grads_n)
                for (auto& [name, g] : *grads_n) {
                    const ad::Tensor& gg = tape.grad(rn.at(name));
                    for (size_t i = 0; i < g.size(); ++i) g.v[i] += bscale * gg.v[i];
                }
        }
    }

    for (double term : {out.flow, out.score, out.rcl, out.total})
        if (!std::isfinite(term))
            throw numeric_error("total_loss: non-finite loss term (flow=" +
                                std::to_string(out.flow) + " score=" + std::to_string(out.score) +
                                " rcl=" + std::to_string(out.rcl) + ")");
    return out;
}

struct CurveRow {
    long step = 0;
    double flow = 0.0, score = 0.0, rcl = 0.0, total = 0.0, val_total = 0.0;
};

struct TrainResult {
    ad::Params params_v;
    ad::Params params_n;
    AdamState adam_v;
    AdamState adam_n;
    std::vector<CurveRow> curves;
    double best_val = 0.0;
    long best_step = 0;
    ad::Params best_params_v;  // best-validation checkpoint
    ad::Params best_params_n;
};

// Adam over shuffled shifted-pair batches with a subject-level validation
// split. Pure function of (dataset, cfg, net): curves are reproducible.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, const NetConfig& net,
                         const TrainResult* resume = nullptr) {
    if (ds.subjects.empty()) throw argument_error("train: empty dataset");
    const int R = ds.subjects.front().x1.cols;
    if (net.channels != R) throw architecture_error("train: net channels != dataset regions");

    const int delta = static_cast<int>(std::lround(cfg.delta_shift_sec * ds.fs));
    const int total = static_cast<int>(ds.subjects.front().x0.size());
    if (delta + cfg.window_length > total)
        throw argument_error("train: track too short for delta_shift + window_length");

    const int n_subjects = static_cast<int>(ds.subjects.size());
    int n_val = static_cast<int>(std::lround(cfg.val_fraction * n_subjects));
    if (cfg.val_fraction > 0.0 && n_subjects >= 2) n_val = std::max(1, n_val);
    n_val = std::min(n_val, n_subjects - 1);
    const int n_train = n_subjects - n_val;

    Rng rng = make_rng(cfg.seed);

    TrainResult res;
    long start_step = 0;
    if (resume != nullptr) {
        res = *resume;
        start_step = res.adam_v.step;
    } else {
        res.params_v = init_params(net, cfg.seed + 101);
        res.params_n = init_params(net, cfg.seed + 202);
        res.adam_v = make_adam(res.params_v, cfg.lr);
        res.adam_n = make_adam(res.params_n, cfg.lr);
        res.best_val = std::numeric_limits<double>::infinity();
    }

    // Fixed validation batch with frozen (t, z) so the curve tracks parameter
    // movement only.
    Rng val_rng = make_rng(cfg.seed + 7);
    std::vector<ShiftedPair> val_batch;
    {
        const int n_pairs = std::max(4, cfg.batch_size / 2);
        std::uniform_int_distribution<int> uorig(delta, total - cfg.window_length);
        for (int k = 0; k < n_pairs; ++k) {
            const int subj = n_val > 0 ? n_train + k % n_val : k % n_train;
            val_batch.push_back(
                sample_shifted_pair(ds, subj, uorig(val_rng), delta, cfg.window_length));
        }
    }

    ad::Params grads_v = res.params_v;
    ad::Params grads_n = res.params_n;

    const int windows = (total - cfg.window_length - delta) / std::max(cfg.stride, 1) + 1;
    const int steps_per_epoch =
        cfg.steps_per_epoch > 0
            ? cfg.steps_per_epoch
            : std::max(1, n_train * windows / std::max(cfg.batch_size, 1));

    std::uniform_int_distribution<int> usubj(0, n_train - 1);
    std::uniform_int_distribution<int> uorig(delta, total - cfg.window_length);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int it = 0; it < steps_per_epoch; ++it) {
            std::vector<ShiftedPair> batch;
            batch.reserve(cfg.batch_size);
            for (int b = 0; b < cfg.batch_size; ++b)
                batch.push_back(
                    sample_shifted_pair(ds, usubj(rng), uorig(rng), delta, cfg.window_length));

            const LossBreakdown lb = total_loss(batch, net, res.params_v, res.params_n,
                                                cfg.lambda_rcl, cfg.t_min, rng, &grads_v,
                                                &grads_n);
            if (!std::isfinite(lb.total) || lb.total > 1e6)
                throw divergence_error("train: diverged at step " +
                                       std::to_string(res.adam_v.step) +
                                       " (total = " + std::to_string(lb.total) + ")");

            adam_step(res.params_v, grads_v, res.adam_v);
            adam_step(res.params_n, grads_n, res.adam_n);

            // validation pass: frozen batch, frozen noise
            Rng frozen = make_rng(cfg.seed + 7);
            const LossBreakdown vb = total_loss(val_batch, net, res.params_v, res.params_n,
                                                cfg.lambda_rcl, cfg.t_min, frozen);

            CurveRow row;
            row.step = start_step + static_cast<long>(epoch) * steps_per_epoch + it + 1;
            row.flow = lb.flow;
            row.score = lb.score;
            row.rcl = lb.rcl;
            row.total = lb.total;
            row.val_total = vb.total;
            res.curves.push_back(row);

            if (vb.total < res.best_val) {
                res.best_val = vb.total;
                res.best_step = row.step;
                res.best_params_v = res.params_v;
                res.best_params_n = res.params_n;
            }
        }
    }

    if (res.best_params_v.empty()) {
        res.best_params_v = res.params_v;
        res.best_params_n = res.params_n;
    }
    return res;
}

}  // namespace sipulse
