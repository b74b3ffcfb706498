#include <gtest/gtest.h>

#include "sipulse/network.hpp"
#include "sipulse/optim.hpp"

using namespace sipulse;

namespace {

NetConfig small_cfg() {
    NetConfig cfg;
    cfg.channels = 3;
    cfg.hidden = 8;
    cfg.kernel = 5;
    cfg.blocks = 2;
    cfg.time_dim = 8;
    return cfg;
}

ad::Tensor random_input(const NetConfig& cfg, int T, uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ad::Tensor x(cfg.channels, T);
    for (double& v : x.v) v = g(rng);
    return x;
}

}  // namespace

TEST(TimeEmbedding, StructureAndRange) {
    const auto e = time_embedding(0.37, 16);
    ASSERT_EQ(e.size(), 16u);
    for (double v : e) EXPECT_LE(std::abs(v), 1.0);
    // first pair is (sin t, cos t) at unit frequency
    EXPECT_NEAR(e[0], std::sin(0.37), 1e-15);
    EXPECT_NEAR(e[1], std::cos(0.37), 1e-15);
    // embeddings of distinct times differ
    const auto e2 = time_embedding(0.9, 16);
    EXPECT_NE(e, e2);
}

TEST(InitParams, ShapesSeededAndZeroFinal) {
    const NetConfig cfg = small_cfg();
    const ad::Params p = init_params(cfg, 42);
    EXPECT_NO_THROW(check_params(cfg, p));

    for (double v : p.at("conv_out.w").v) EXPECT_EQ(v, 0.0);
    for (double v : p.at("conv_out.b").v) EXPECT_EQ(v, 0.0);

    const ad::Params p2 = init_params(cfg, 42);
    EXPECT_EQ(p.at("conv_in.w").v, p2.at("conv_in.w").v);
    const ad::Params p3 = init_params(cfg, 43);
    EXPECT_NE(p.at("conv_in.w").v, p3.at("conv_in.w").v);

    NetConfig odd = cfg;
    odd.time_dim = 7;
    EXPECT_THROW(init_params(odd, 1), architecture_error);
}

TEST(CheckParams, DetectsMissingMisshapenNonFinite) {
    const NetConfig cfg = small_cfg();
    ad::Params p = init_params(cfg, 1);

    ad::Params missing = p;
    missing.erase("block0.conv1.w");
    EXPECT_THROW(check_params(cfg, missing), architecture_error);

    ad::Params wrong = p;
    wrong["conv_in.w"] = ad::Tensor(1, 1);
    EXPECT_THROW(check_params(cfg, wrong), architecture_error);

    ad::Params nan = p;
    nan["embed.w"].v[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(check_params(cfg, nan), numeric_error);
}

TEST(NetForward, ZeroInitGivesZeroOutput) {
    const NetConfig cfg = small_cfg();
    const ad::Params p = init_params(cfg, 5);
    const ad::Tensor x = random_input(cfg, 20, 9);
    const ad::Tensor y = net_forward(cfg, p, 0.5, x);
    ASSERT_EQ(y.ch, cfg.channels);
    ASSERT_EQ(y.len, 20);
    for (double v : y.v) EXPECT_EQ(v, 0.0);
}

TEST(NetForward, InputValidation) {
    const NetConfig cfg = small_cfg();
    const ad::Params p = init_params(cfg, 5);
    EXPECT_THROW(net_forward(cfg, p, 0.5, ad::Tensor(cfg.channels + 1, 10)),
                 architecture_error);
    EXPECT_THROW(net_forward(cfg, p, -0.1, ad::Tensor(cfg.channels, 10)), argument_error);
    EXPECT_THROW(net_forward(cfg, p, 1.1, ad::Tensor(cfg.channels, 10)), argument_error);
    ad::Tensor bad(cfg.channels, 10);
    bad.v[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(net_forward(cfg, p, 0.5, bad), numeric_error);
}

TEST(NetForward, PlainAndTracedAgreeBitForBit) {
    const NetConfig cfg = small_cfg();
    ad::Params p = init_params(cfg, 11);
    // perturb the zero output layer so the comparison is nontrivial
    Rng rng = make_rng(12);
    std::normal_distribution<double> g(0.0, 0.1);
    for (double& v : p["conv_out.w"].v) v = g(rng);
    for (double& v : p["conv_out.b"].v) v = g(rng);

    const ad::Tensor x = random_input(cfg, 17, 13);
    for (double t : {0.001, 0.25, 0.5, 0.999}) {
        const ad::Tensor plain = net_forward(cfg, p, t, x);

        ad::Tape tape;
        const ParamRefs refs = register_params(tape, p);
        const int xi = tape.leaf(x, "x");
        const int yi = net_forward_traced(tape, cfg, refs, t, xi);
        EXPECT_EQ(plain.v, tape.val(yi).v) << "t=" << t;
    }
}

TEST(NetForward, TimeConditioningChangesOutput) {
    const NetConfig cfg = small_cfg();
    ad::Params p = init_params(cfg, 11);
    Rng rng = make_rng(12);
    std::normal_distribution<double> g(0.0, 0.1);
    for (double& v : p["conv_out.w"].v) v = g(rng);

    const ad::Tensor x = random_input(cfg, 17, 13);
    const ad::Tensor y1 = net_forward(cfg, p, 0.1, x);
    const ad::Tensor y2 = net_forward(cfg, p, 0.9, x);
    EXPECT_NE(y1.v, y2.v);
}

TEST(NetForward, GradCheckThroughWholeNetwork) {
    NetConfig cfg = small_cfg();
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.time_dim = 4;
    ad::Params p = init_params(cfg, 3);
    Rng prng = make_rng(4);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& [name, t] : p)
        for (double& v : t.v) v = g(prng);

    const ad::Tensor x = random_input(cfg, 9, 5);
    const ad::Tensor target = random_input(cfg, 9, 6);
    const double t = 0.4;

    auto f = [&](const ad::Params& q) {
        ad::Tape tape;
        const ParamRefs refs = register_params(tape, q);
        const int yi = net_forward_traced(tape, cfg, refs, t, tape.leaf(x));
        return tape.val(tape.mse(yi, tape.leaf(target))).scalar();
    };
    auto grads = [&](const ad::Params& q) {
        ad::Tape tape;
        const ParamRefs refs = register_params(tape, q);
        const int yi = net_forward_traced(tape, cfg, refs, t, tape.leaf(x));
        tape.backward(tape.mse(yi, tape.leaf(target)));
        ad::Params out;
        for (const auto& [name, i] : refs) out[name] = tape.grad(i);
        return out;
    };
    Rng rng = make_rng(77);
    EXPECT_LT(ad::grad_check(f, grads, p, 1e-6, 40, rng), 1e-4);
}

TEST(LayoutConversion, RoundTrip) {
    Grid g(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) g(i, j) = 10 * i + j;
    const ad::Tensor t = to_tensor(g);
    ASSERT_EQ(t.ch, 3);
    ASSERT_EQ(t.len, 4);
    EXPECT_EQ(t(2, 1), g(1, 2));
    const Grid back = to_grid(t);
    EXPECT_EQ(back.v, g.v);
}

TEST(Adam, ConvergesOnQuadraticAndMatchesHandStep) {
    // single parameter, loss = 0.5 x^2, grad = x
    ad::Params p;
    p["x"] = ad::Tensor(1, 1, 1.0);
    AdamState st = make_adam(p, 0.1);

    // first step with bias correction: m_hat = g, v_hat = g^2, so the update
    // is lr * g / (|g| + eps) = lr * sign(g) regardless of magnitude
    ad::Params grad;
    grad["x"] = ad::Tensor(1, 1, 1.0);
    adam_step(p, grad, st);
    EXPECT_NEAR(p["x"].v[0], 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-12);

    // full optimization drives x to zero
    ad::Params q;
    q["x"] = ad::Tensor(1, 1, 5.0);
    AdamState st2 = make_adam(q, 0.1);
    for (int it = 0; it < 500; ++it) {
        ad::Params g2;
        g2["x"] = ad::Tensor(1, 1, q["x"].v[0]);
        adam_step(q, g2, st2);
    }
    EXPECT_LT(std::abs(q["x"].v[0]), 1e-3);
}

TEST(Adam, RejectsShapeMismatchAndNonFinite) {
    ad::Params p;
    p["x"] = ad::Tensor(2, 2, 1.0);
    AdamState st = make_adam(p, 0.1);
    ad::Params wrong;
    wrong["x"] = ad::Tensor(1, 2, 1.0);
    EXPECT_THROW(adam_step(p, wrong, st), argument_error);
    ad::Params bad;
    bad["x"] = ad::Tensor(2, 2, 1.0);
    bad["x"].v[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(adam_step(p, bad, st), numeric_error);
}
