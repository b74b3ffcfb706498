#include <gtest/gtest.h>

#include "sipulse/autodiff.hpp"

using namespace sipulse;
using ad::Params;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_tensor(int ch, int len, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Tensor t(ch, len);
    for (double& x : t.v) x = g(rng);
    return t;
}

// Naive sliding-window convolution oracle with explicit zero padding,
// independent of the tape's pointer-arithmetic implementation.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int K) {
    const int P = (K - 1) / 2;
    Tensor out(w.ch, x.len);
    for (int o = 0; o < w.ch; ++o)
        for (int i = 0; i < x.len; ++i) {
            double acc = b(o, 0);
            for (int c = 0; c < x.ch; ++c)
                for (int k = 0; k < K; ++k) {
                    const int src = i + k - P;
                    if (src < 0 || src >= x.len) continue;
                    acc += w(o, c * K + k) * x(c, src);
                }
            out(o, i) = acc;
        }
    return out;
}

}  // namespace

TEST(Tape, ElementwiseValues) {
    Tape tp;
    Tensor a(1, 3), b(1, 3);
    a.v = {1.0, -2.0, 3.0};
    b.v = {0.5, 4.0, -1.0};
    const int ia = tp.leaf(a), ib = tp.leaf(b);
    EXPECT_EQ(tp.val(tp.add(ia, ib)).v, (std::vector<double>{1.5, 2.0, 2.0}));
    EXPECT_EQ(tp.val(tp.sub(ia, ib)).v, (std::vector<double>{0.5, -6.0, 4.0}));
    EXPECT_EQ(tp.val(tp.mul(ia, ib)).v, (std::vector<double>{0.5, -8.0, -3.0}));
    EXPECT_EQ(tp.val(tp.scale(ia, 2.0)).v, (std::vector<double>{2.0, -4.0, 6.0}));

    const int is = tp.silu(ia);
    for (int i = 0; i < 3; ++i) {
        const double x = a.v[i];
        EXPECT_NEAR(tp.val(is).v[i], x / (1.0 + std::exp(-x)), 1e-15);
    }
}

TEST(Tape, ShapeMismatchThrows) {
    Tape tp;
    const int a = tp.leaf(Tensor(1, 3, 1.0));
    const int b = tp.leaf(Tensor(1, 4, 1.0));
    EXPECT_THROW(tp.add(a, b), architecture_error);
    EXPECT_THROW(tp.mse(a, b), architecture_error);
    EXPECT_THROW(tp.backward(a), argument_error);  // non-scalar loss
}

TEST(Tape, NonFiniteValueDetected) {
    Tape tp;
    Tensor a(1, 2);
    a.v = {1e308, 1e308};
    const int ia = tp.leaf(a);
    try {
        tp.add(ia, ia);  // overflows to inf
        FAIL() << "expected numeric_error";
    } catch (const numeric_error& e) {
        EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
    }
}

TEST(Tape, Conv1dMatchesNaiveOracle) {
    Rng rng = make_rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        std::uniform_int_distribution<int> uc(1, 4), ul(3, 20);
        const int cin = uc(rng), cout = uc(rng), T = ul(rng), K = 5;
        const Tensor x = random_tensor(cin, T, rng);
        const Tensor w = random_tensor(cout, cin * K, rng);
        const Tensor b = random_tensor(cout, 1, rng);

        Tape tp;
        const int y = tp.conv1d(tp.leaf(x), tp.leaf(w), tp.leaf(b), K);
        const Tensor ref = conv_oracle(x, w, b, K);
        ASSERT_TRUE(tp.val(y).same_shape(ref));
        for (size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(tp.val(y).v[i], ref.v[i], 1e-12);
    }
}

TEST(Tape, MatvecValueAndShapes) {
    Tape tp;
    Tensor w(2, 3), x(3, 1), b(2, 1);
    w.v = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    x.v = {1.0, 0.0, -1.0};
    b.v = {10.0, 20.0};
    const int y = tp.matvec(tp.leaf(w), tp.leaf(x), tp.leaf(b));
    EXPECT_EQ(tp.val(y).v, (std::vector<double>{8.0, 18.0}));

    EXPECT_THROW(tp.matvec(tp.leaf(w), tp.leaf(Tensor(2, 1)), tp.leaf(b)), architecture_error);
}

TEST(Tape, BackwardSimpleChain) {
    // d/da mean((2a - b)^2) at a scalar: 2 * (2a - b) * 2
    Tape tp;
    Tensor a(1, 1), b(1, 1);
    a.v = {1.5};
    b.v = {1.0};
    const int ia = tp.leaf(a), ib = tp.leaf(b);
    const int loss = tp.mse(tp.scale(ia, 2.0), ib);
    EXPECT_NEAR(tp.val(loss).scalar(), 4.0, 1e-15);
    tp.backward(loss);
    EXPECT_NEAR(tp.grad(ia).v[0], 8.0, 1e-15);
    EXPECT_NEAR(tp.grad(ib).v[0], -4.0, 1e-15);
}

TEST(Tape, BackwardAccumulatesSharedNodes) {
    // loss = sum(a * a): grad must accumulate both operand contributions, 2a
    Tape tp;
    Tensor a(1, 3);
    a.v = {1.0, -2.0, 0.5};
    const int ia = tp.leaf(a);
    const int loss = tp.sum(tp.mul(ia, ia));
    tp.backward(loss);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(tp.grad(ia).v[i], 2.0 * a.v[i], 1e-15);
}

TEST(Tape, ScalarAlgebraGradients) {
    // loss = sqrt(sum(a)/dot(a,b)) checked against hand derivative via fd
    auto build = [](const Params& p, Tape& tp, int& loss) {
        const int ia = tp.leaf(p.at("a"), "a");
        const int ib = tp.leaf(p.at("b"), "b");
        loss = tp.s_sqrt(tp.s_div(tp.sum(ia), tp.dot(ia, ib)));
        return std::pair(ia, ib);
    };
    Params p;
    p["a"] = Tensor(1, 3);
    p["a"].v = {1.0, 2.0, 3.0};
    p["b"] = Tensor(1, 3);
    p["b"].v = {0.5, 1.0, 2.0};

    auto f = [&](const Params& q) {
        Tape tp;
        int loss = 0;
        build(q, tp, loss);
        return tp.val(loss).scalar();
    };
    auto grads = [&](const Params& q) {
        Tape tp;
        int loss = 0;
        auto [ia, ib] = build(q, tp, loss);
        tp.backward(loss);
        Params g;
        g["a"] = tp.grad(ia);
        g["b"] = tp.grad(ib);
        return g;
    };
    Rng rng = make_rng(1);
    EXPECT_LT(ad::grad_check(f, grads, p, 1e-6, 6, rng), 1e-5);
}

TEST(Tape, GradCheckRandomShapesThroughConvStack) {
    // full pipeline: conv1d -> bias_broadcast -> silu -> mse against a target
    Rng shape_rng = make_rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        std::uniform_int_distribution<int> uc(1, 3), ul(4, 12);
        const int cin = uc(shape_rng), cout = uc(shape_rng), T = ul(shape_rng), K = 3;
        Rng rng = make_rng(100 + trial);
        Params p;
        p["x"] = random_tensor(cin, T, rng, 0.5);
        p["w"] = random_tensor(cout, cin * K, rng, 0.5);
        p["b"] = random_tensor(cout, 1, rng, 0.5);
        p["e"] = random_tensor(cout, 1, rng, 0.5);
        const Tensor target = random_tensor(cout, T, rng, 0.5);

        auto build = [&](const Params& q, Tape& tp, std::map<std::string, int>& idx) {
            idx["x"] = tp.leaf(q.at("x"));
            idx["w"] = tp.leaf(q.at("w"));
            idx["b"] = tp.leaf(q.at("b"));
            idx["e"] = tp.leaf(q.at("e"));
            const int y = tp.silu(tp.bias_broadcast(tp.conv1d(idx["x"], idx["w"], idx["b"], K),
                                                    idx["e"]));
            return tp.mse(y, tp.leaf(target));
        };
        auto f = [&](const Params& q) {
            Tape tp;
            std::map<std::string, int> idx;
            return tp.val(build(q, tp, idx)).scalar();
        };
        auto grads = [&](const Params& q) {
            Tape tp;
            std::map<std::string, int> idx;
            tp.backward(build(q, tp, idx));
            Params g;
            for (const auto& [name, i] : idx) g[name] = tp.grad(i);
            return g;
        };
        Rng pick = make_rng(7 + trial);
        EXPECT_LT(ad::grad_check(f, grads, p, 1e-6, 25, pick), 1e-5)
            << "cin=" << cin << " cout=" << cout << " T=" << T;
    }
}

TEST(Tape, SubScalarBroadcast) {
    Tape tp;
    Tensor x(1, 3);
    x.v = {1.0, 2.0, 3.0};
    Tensor s(1, 1);
    s.v = {2.0};
    const int ix = tp.leaf(x), is = tp.leaf(s);
    const int y = tp.sub_scalar(ix, is);
    EXPECT_EQ(tp.val(y).v, (std::vector<double>{-1.0, 0.0, 1.0}));
    const int loss = tp.sum(tp.mul(y, y));
    tp.backward(loss);
    // d/ds sum((x-s)^2) = -2 sum(x-s)
    EXPECT_NEAR(tp.grad(is).v[0], 0.0, 1e-15);
    EXPECT_NEAR(tp.grad(ix).v[0], -2.0, 1e-15);
}

TEST(GradCheck, RejectsBadStep) {
    Params p;
    p["a"] = Tensor(1, 1, 1.0);
    Rng rng = make_rng(1);
    auto f = [](const Params& q) { return q.at("a").v[0]; };
    auto g = [](const Params& q) {
        Params out;
        out["a"] = Tensor(1, 1, 1.0);
        return out;
    };
    EXPECT_THROW(ad::grad_check(f, g, p, 0.0, 1, rng), argument_error);
}
