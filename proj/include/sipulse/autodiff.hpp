#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sipulse/core.hpp"

namespace sipulse::ad {

// Channel-major dense tensor: v[c * len + i].
struct Tensor {
    int ch = 0;
    int len = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c, int l, double fill = 0.0) : ch(c), len(l), v(static_cast<size_t>(c) * l, fill) {}

    double& operator()(int c, int i) { return v[static_cast<size_t>(c) * len + i]; }
    double operator()(int c, int i) const { return v[static_cast<size_t>(c) * len + i]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return ch == o.ch && len == o.len; }
    bool is_scalar() const { return ch == 1 && len == 1; }
    double scalar() const { return v[0]; }
};

inline bool all_finite(const Tensor& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

using Params = std::map<std::string, Tensor>;

// Reverse-mode tape. Insertion order is topological order; backward() walks
// it in reverse and accumulates adjoints.
class Tape {
  public:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void(Tape&)> back;  // empty for leaves
        std::string name;
    };

    int leaf(Tensor t, const std::string& name = "leaf") {
        return push(std::move(t), nullptr, name);
    }

    const Tensor& val(int i) const { return nodes_[i].val; }
    Tensor& grad(int i) { return nodes_[i].grad; }
    size_t size() const { return nodes_.size(); }

    // --- elementwise --------------------------------------------------------

    int add(int a, int b) {
        check_shapes(a, b, "add");
        Tensor out = nodes_[a].val;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] += nodes_[b].val.v[i];
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        for (size_t i = 0; i < g.size(); ++i) {
                            tp.nodes_[a].grad.v[i] += g.v[i];
                            tp.nodes_[b].grad.v[i] += g.v[i];
                        }
                    },
                    "add");
    }

    int sub(int a, int b) {
        check_shapes(a, b, "sub");
        Tensor out = nodes_[a].val;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] -= nodes_[b].val.v[i];
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        for (size_t i = 0; i < g.size(); ++i) {
                            tp.nodes_[a].grad.v[i] += g.v[i];
                            tp.nodes_[b].grad.v[i] -= g.v[i];
                        }
                    },
                    "sub");
    }

    int mul(int a, int b) {
        check_shapes(a, b, "mul");
        Tensor out = nodes_[a].val;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] *= nodes_[b].val.v[i];
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        const Tensor& va = tp.nodes_[a].val;
                        const Tensor& vb = tp.nodes_[b].val;
                        for (size_t i = 0; i < g.size(); ++i) {
                            tp.nodes_[a].grad.v[i] += g.v[i] * vb.v[i];
                            tp.nodes_[b].grad.v[i] += g.v[i] * va.v[i];
                        }
                    },
                    "mul");
    }

    int scale(int a, double c) {
        Tensor out = nodes_[a].val;
        for (double& x : out.v) x *= c;
        return push(std::move(out),
                    [a, c](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        for (size_t i = 0; i < g.size(); ++i) tp.nodes_[a].grad.v[i] += c * g.v[i];
                    },
                    "scale");
    }

    int silu(int a) {
        const Tensor& x = nodes_[a].val;
        Tensor out = x;
        for (double& y : out.v) {
            const double s = 1.0 / (1.0 + std::exp(-y));
            y = y * s;
        }
        return push(std::move(out),
                    [a](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        const Tensor& x = tp.nodes_[a].val;
                        for (size_t i = 0; i < g.size(); ++i) {
                            const double s = 1.0 / (1.0 + std::exp(-x.v[i]));
                            tp.nodes_[a].grad.v[i] += g.v[i] * (s + x.v[i] * s * (1.0 - s));
                        }
                    },
                    "silu");
    }

    // --- network building blocks -------------------------------------------

    // x: (Cin, T); w: (Cout, Cin*K) flattened kernels; b: (Cout, 1).
    // Same-length output with zero padding.
    int conv1d(int xi, int wi, int bi, int kernel) {
        const Tensor& x = nodes_[xi].val;
        const Tensor& w = nodes_[wi].val;
        const Tensor& b = nodes_[bi].val;
        const int cin = x.ch, T = x.len, cout = w.ch, K = kernel;
        if (w.len != cin * K || b.ch != cout || b.len != 1)
            throw architecture_error("conv1d: weight/bias shape mismatch");
        const int P = (K - 1) / 2;

        Tensor out(cout, T);
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
        return push(std::move(out),
                    [xi, wi, bi, K](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        const Tensor& x = tp.nodes_[xi].val;
                        const Tensor& w = tp.nodes_[wi].val;
                        Tensor& gx = tp.nodes_[xi].grad;
                        Tensor& gw = tp.nodes_[wi].grad;
                        Tensor& gb = tp.nodes_[bi].grad;
                        const int cin = x.ch, T = x.len, cout = w.ch;
                        const int P = (K - 1) / 2;
                        for (int o = 0; o < cout; ++o) {
                            double gbacc = 0.0;
                            for (int i = 0; i < T; ++i) gbacc += g(o, i);
                            gb(o, 0) += gbacc;
                            for (int c = 0; c < cin; ++c) {
                                const double* wr = &w.v[static_cast<size_t>(o) * w.len + c * K];
                                double* gwr = &gw.v[static_cast<size_t>(o) * w.len + c * K];
                                const double* xr = &x.v[static_cast<size_t>(c) * T];
                                double* gxr = &gx.v[static_cast<size_t>(c) * T];
                                for (int i = 0; i < T; ++i) {
                                    const double gi = g(o, i);
                                    const int k0 = std::max(0, P - i);
                                    const int k1 = std::min(K, T + P - i);
                                    for (int k = k0; k < k1; ++k) {
                                        gwr[k] += gi * xr[i + k - P];
                                        gxr[i + k - P] += gi * wr[k];
                                    }
                                }
                            }
                        }
                    },
                    "conv1d");
    }

    // Per-channel bias broadcast over time: y[c,i] = x[c,i] + e[c].
    int bias_broadcast(int xi, int ei) {
        const Tensor& x = nodes_[xi].val;
        const Tensor& e = nodes_[ei].val;
        if (e.ch != x.ch || e.len != 1)
            throw architecture_error("bias_broadcast: expected (C,1) bias");
        Tensor out = x;
        for (int c = 0; c < x.ch; ++c)
            for (int i = 0; i < x.len; ++i) out(c, i) += e(c, 0);
        return push(std::move(out),
                    [xi, ei](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        Tensor& gx = tp.nodes_[xi].grad;
                        Tensor& ge = tp.nodes_[ei].grad;
                        for (int c = 0; c < g.ch; ++c) {
                            double acc = 0.0;
                            for (int i = 0; i < g.len; ++i) {
                                gx(c, i) += g(c, i);
                                acc += g(c, i);
                            }
                            ge(c, 0) += acc;
                        }
                    },
                    "bias_broadcast");
    }

    // y = W x + b with W: (M, N), x: (N, 1), b: (M, 1).
    int matvec(int wi, int xi, int bi) {
        const Tensor& w = nodes_[wi].val;
        const Tensor& x = nodes_[xi].val;
        const Tensor& b = nodes_[bi].val;
        if (x.len != 1 || w.len != x.ch || b.ch != w.ch || b.len != 1)
            throw architecture_error("matvec: shape mismatch");
        Tensor out(w.ch, 1);
        for (int m = 0; m < w.ch; ++m) {
            double acc = b(m, 0);
            for (int n = 0; n < w.len; ++n) acc += w(m, n) * x(n, 0);
            out(m, 0) = acc;
        }
        return push(std::move(out),
                    [wi, xi, bi](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        const Tensor& w = tp.nodes_[wi].val;
                        const Tensor& x = tp.nodes_[xi].val;
                        Tensor& gw = tp.nodes_[wi].grad;
                        Tensor& gx = tp.nodes_[xi].grad;
                        Tensor& gb = tp.nodes_[bi].grad;
                        for (int m = 0; m < w.ch; ++m) {
                            gb(m, 0) += g(m, 0);
                            for (int n = 0; n < w.len; ++n) {
                                gw(m, n) += g(m, 0) * x(n, 0);
                                gx(n, 0) += g(m, 0) * w(m, n);
                            }
                        }
                    },
                    "matvec");
    }

    // --- reductions and scalar algebra -------------------------------------

    int sum(int a) {
        double acc = 0.0;
        for (double x : nodes_[a].val.v) acc += x;
        Tensor out(1, 1);
        out.v[0] = acc;
        return push(std::move(out),
                    [a](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        for (double& gx : tp.nodes_[a].grad.v) gx += g;
                    },
                    "sum");
    }

    int dot(int a, int b) {
        check_shapes(a, b, "dot");
        double acc = 0.0;
        const Tensor& va = nodes_[a].val;
        const Tensor& vb = nodes_[b].val;
        for (size_t i = 0; i < va.size(); ++i) acc += va.v[i] * vb.v[i];
        Tensor out(1, 1);
        out.v[0] = acc;
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        const Tensor& va = tp.nodes_[a].val;
                        const Tensor& vb = tp.nodes_[b].val;
                        for (size_t i = 0; i < va.size(); ++i) {
                            tp.nodes_[a].grad.v[i] += g * vb.v[i];
                            tp.nodes_[b].grad.v[i] += g * va.v[i];
                        }
                    },
                    "dot");
    }

    // mean((a-b)^2)
    int mse(int a, int b) {
        check_shapes(a, b, "mse");
        const Tensor& va = nodes_[a].val;
        const Tensor& vb = nodes_[b].val;
        const double n = static_cast<double>(va.size());
        double acc = 0.0;
        for (size_t i = 0; i < va.size(); ++i) {
            const double d = va.v[i] - vb.v[i];
            acc += d * d;
        }
        Tensor out(1, 1);
        out.v[0] = acc / n;
        return push(std::move(out),
                    [a, b, n](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        const Tensor& va = tp.nodes_[a].val;
                        const Tensor& vb = tp.nodes_[b].val;
                        for (size_t i = 0; i < va.size(); ++i) {
                            const double d = 2.0 * (va.v[i] - vb.v[i]) / n;
                            tp.nodes_[a].grad.v[i] += g * d;
                            tp.nodes_[b].grad.v[i] -= g * d;
                        }
                    },
                    "mse");
    }

    // y = x - s with scalar node s broadcast to x's shape.
    int sub_scalar(int xi, int si) {
        require_scalar(si, "sub_scalar");
        Tensor out = nodes_[xi].val;
        const double s = nodes_[si].val.v[0];
        for (double& y : out.v) y -= s;
        return push(std::move(out),
                    [xi, si](Tape& tp) {
                        const Tensor& g = tp.nodes_.back_grad();
                        double acc = 0.0;
                        for (size_t i = 0; i < g.size(); ++i) {
                            tp.nodes_[xi].grad.v[i] += g.v[i];
                            acc += g.v[i];
                        }
                        tp.nodes_[si].grad.v[0] -= acc;
                    },
                    "sub_scalar");
    }

    int s_mul(int a, int b) {
        require_scalar(a, "s_mul");
        require_scalar(b, "s_mul");
        Tensor out(1, 1);
        out.v[0] = nodes_[a].val.v[0] * nodes_[b].val.v[0];
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        tp.nodes_[a].grad.v[0] += g * tp.nodes_[b].val.v[0];
                        tp.nodes_[b].grad.v[0] += g * tp.nodes_[a].val.v[0];
                    },
                    "s_mul");
    }

    int s_div(int a, int b) {
        require_scalar(a, "s_div");
        require_scalar(b, "s_div");
        Tensor out(1, 1);
        out.v[0] = nodes_[a].val.v[0] / nodes_[b].val.v[0];
        return push(std::move(out),
                    [a, b](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        const double vb = tp.nodes_[b].val.v[0];
                        const double va = tp.nodes_[a].val.v[0];
                        tp.nodes_[a].grad.v[0] += g / vb;
                        tp.nodes_[b].grad.v[0] -= g * va / (vb * vb);
                    },
                    "s_div");
    }

    int s_sqrt(int a) {
        require_scalar(a, "s_sqrt");
        Tensor out(1, 1);
        out.v[0] = std::sqrt(nodes_[a].val.v[0]);
        const double y = out.v[0];
        return push(std::move(out),
                    [a, y](Tape& tp) {
                        const double g = tp.nodes_.back_grad().v[0];
                        tp.nodes_[a].grad.v[0] += g * 0.5 / y;
                    },
                    "s_sqrt");
    }

    // --- backward -----------------------------------------------------------

    void backward(int loss) {
        if (!nodes_[loss].val.is_scalar())
            throw argument_error("backward: loss node must be a scalar");
        for (Node& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
        nodes_[loss].grad.v[0] = 1.0;
        for (int i = loss; i >= 0; --i) {
            if (!nodes_[i].back) continue;
            cursor_ = i;
            nodes_[i].back(*this);
        }
    }

  private:
    // Small indirection so backward lambdas can reach "the grad of the node
    // being differentiated" without capturing their own index twice.
    struct NodeVec : std::vector<Node> {
        int cursor = 0;
        const Tensor& back_grad() const { return (*this)[cursor].grad; }
    };

    int push(Tensor val, std::function<void(Tape&)> back, const std::string& name) {
        if (!all_finite(val)) throw numeric_error("non-finite value produced by op '" + name + "'");
        Node n;
        n.grad = Tensor(val.ch, val.len);
        n.val = std::move(val);
        n.back = std::move(back);
        n.name = name;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void check_shapes(int a, int b, const char* op) const {
        if (!nodes_[a].val.same_shape(nodes_[b].val))
            throw architecture_error(std::string(op) + ": shape mismatch");
    }

    void require_scalar(int a, const char* op) const {
        if (!nodes_[a].val.is_scalar())
            throw argument_error(std::string(op) + ": scalar operand required");
    }

    NodeVec nodes_;
    int& cursor_ = nodes_.cursor;
};

// Central finite differences of a scalar-valued function of named params,
// compared against tape gradients on a random coordinate subsample.
// Returns the max relative error observed.
inline double grad_check(const std::function<double(const Params&)>& f,
                         const std::function<Params(const Params&)>& tape_grads,
                         const Params& params, double fd_step, int min_coords, Rng& rng) {
    if (fd_step <= 0.0) throw argument_error("grad_check: fd_step must be positive");

    const Params analytic = tape_grads(params);

    std::vector<std::pair<std::string, size_t>> coords;
    for (const auto& [name, t] : params)
        for (size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
    std::shuffle(coords.begin(), coords.end(), rng);
    const size_t n = std::min(coords.size(), static_cast<size_t>(std::max(min_coords, 1)));

    double max_rel = 0.0;
    for (size_t k = 0; k < n; ++k) {
        const auto& [name, i] = coords[k];
        Params p = params;
        p[name].v[i] += fd_step;
        const double fp = f(p);
        p[name].v[i] -= 2.0 * fd_step;
        const double fm = f(p);
        const double fd = (fp - fm) / (2.0 * fd_step);
        const double an = analytic.at(name).v[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
    return max_rel;
}

}  // namespace sipulse::ad
