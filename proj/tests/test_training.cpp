#include <gtest/gtest.h>

#include "sipulse/training.hpp"

using namespace sipulse;

namespace {

NetConfig tiny_net(int channels) {
    NetConfig net;
    net.channels = channels;
    net.hidden = 4;
    net.kernel = 3;
    net.blocks = 1;
    net.time_dim = 4;
    return net;
}

Dataset tiny_dataset(double duration_sec, uint64_t seed = 9) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.region_gains = {1.0, 0.7};
    return make_dataset(cfg, 2, duration_sec, 25.0);
}

}  // namespace

TEST(RclLoss, KnownValues) {
    const std::vector<double> p = {1.0, 2.0, 3.0, 4.0};
    EXPECT_NEAR(rcl_loss(p, p), 0.0, 1e-15);

    std::vector<double> neg = p;
    for (double& x : neg) x = -x;
    EXPECT_NEAR(rcl_loss(p, neg), 2.0, 1e-15);

    // hand-computed Pearson for {1,2,3} vs {1,3,2}: cov=1, sd=sqrt(2) each
    EXPECT_NEAR(rcl_loss(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, 3.0, 2.0}), 1.0 - 0.5, 1e-15);

    EXPECT_EQ(rcl_loss(std::vector<double>{0.0, 0.0, 0.0}, std::vector<double>{0.0, 0.0, 0.0}), 0.0);
}

TEST(RclLoss, Errors) {
    EXPECT_THROW(rcl_loss(std::vector<double>{1.0}, std::vector<double>{1.0}), argument_error);
    EXPECT_THROW(rcl_loss(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0, 3.0}), argument_error);
    // constant (but nonzero) input has undefined correlation
    EXPECT_THROW(rcl_loss(std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{1.0, 2.0, 3.0}), degenerate_error);
}

TEST(RclLoss, AffineInvariance) {
    Rng rng = make_rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> p(40), q(40);
    for (size_t i = 0; i < p.size(); ++i) {
        p[i] = g(rng);
        q[i] = g(rng);
    }
    const double base = rcl_loss(p, q);

    std::vector<double> p2 = p;
    for (double& x : p2) x = 3.0 * x + 7.0;  // positive affine map
    EXPECT_NEAR(rcl_loss(p2, q), base, 1e-12);

    std::vector<double> p3 = p;
    for (double& x : p3) x = -x;  // negation flips the correlation
    EXPECT_NEAR(rcl_loss(p3, q), 2.0 - base, 1e-12);
}

TEST(RclLoss, GridOverloadMatchesVector) {
    Grid a(2, 2), b(2, 2);
    a.v = {1.0, 2.0, 3.0, 5.0};
    b.v = {2.0, 1.0, 4.0, 4.0};
    EXPECT_EQ(rcl_loss(a, b), rcl_loss(a.v, b.v));
}

TEST(SampleShiftedPair, ShapesAndShiftRelation) {
    const Dataset ds = tiny_dataset(20.0);
    const int W = 50, delta = 30, origin = 100;
    const ShiftedPair pair = sample_shifted_pair(ds, 0, origin, delta, W);
    ASSERT_EQ(pair.x0_a.rows, W);
    ASSERT_EQ(pair.x0_a.cols, 2);
    ASSERT_TRUE(pair.x1_a.same_shape(pair.x0_a));

    const SubjectTrack& tr = ds.subjects[0];
    for (int i = 0; i < W; ++i) {
        EXPECT_EQ(pair.x0_a(i, 0), tr.x0[origin + i]);
        EXPECT_EQ(pair.x0_b(i, 1), tr.x0[origin - delta + i]);
        EXPECT_EQ(pair.x1_a(i, 1), tr.x1(origin + i, 1));
        EXPECT_EQ(pair.x1_b(i, 0), tr.x1(origin - delta + i, 0));
    }
}

TEST(SampleShiftedPair, BoundsChecked) {
    const Dataset ds = tiny_dataset(20.0);
    EXPECT_THROW(sample_shifted_pair(ds, 0, 10, 30, 50), argument_error);   // origin < delta
    EXPECT_THROW(sample_shifted_pair(ds, 0, 480, 30, 50), argument_error);  // past track end
}

TEST(TotalLoss, ZeroTargetsGiveZeroFlowAndRcl) {
    // x0 == x1 makes the flow target vanish; with zero-output networks the
    // flow residuals of both windows are exactly zero, so RCL := 0 applies
    const Dataset ds = tiny_dataset(20.0);
    const NetConfig net = tiny_net(2);
    const ad::Params pv = init_params(net, 1);
    const ad::Params pn = init_params(net, 2);

    ShiftedPair pair = sample_shifted_pair(ds, 0, 100, 30, 20);
    pair.x1_a = pair.x0_a;
    pair.x1_b = pair.x0_b;

    Rng rng = make_rng(5);
    const LossBreakdown lb = total_loss({pair}, net, pv, pn, 0.1, 1e-3, rng);
    EXPECT_EQ(lb.flow, 0.0);
    EXPECT_EQ(lb.rcl, 0.0);
    EXPECT_GT(lb.score, 0.0);  // denoiser must still predict the injected z
    EXPECT_NEAR(lb.total, lb.score, 1e-15);
}

TEST(TotalLoss, ZeroInitBreakdownMatchesDirectComputation) {
    // zero-output networks: flow loss is the mean squared flow target, score
    // loss the mean squared z, and RCL is 1 - Pearson of the two flow targets
    const Dataset ds = tiny_dataset(20.0);
    const NetConfig net = tiny_net(2);
    const ad::Params pv = init_params(net, 1);
    const ad::Params pn = init_params(net, 2);

    const ShiftedPair pair = sample_shifted_pair(ds, 0, 100, 30, 20);
    const double lambda = 0.25;

    Rng rng = make_rng(5);
    const LossBreakdown lb = total_loss({pair}, net, pv, pn, lambda, 1e-3, rng);

    // replay the same draws: one uniform t, then one z per grid entry
    Rng replay = make_rng(5);
    std::uniform_real_distribution<double> ut(1e-3, 1.0 - 1e-3);
    (void)ut(replay);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double z2 = 0.0;
    const size_t n = pair.x0_a.v.size();
    for (size_t i = 0; i < n; ++i) {
        const double z = gauss(replay);
        z2 += z * z;
    }
    z2 /= static_cast<double>(n);

    double f2a = 0.0, f2b = 0.0;
    std::vector<double> ta(n), tb(n);
    for (size_t i = 0; i < n; ++i) {
        ta[i] = pair.x1_a.v[i] - pair.x0_a.v[i];
        tb[i] = pair.x1_b.v[i] - pair.x0_b.v[i];
        f2a += ta[i] * ta[i];
        f2b += tb[i] * tb[i];
    }
    const double flow_expect = 0.5 * (f2a + f2b) / static_cast<double>(n);

    // targets are stored time-major but the network consumes channel-major;
    // reorder before correlating, matching the traced computation
    Grid gta(pair.x0_a.rows, pair.x0_a.cols), gtb = gta;
    for (size_t i = 0; i < n; ++i) {
        gta.v[i] = ta[i];
        gtb.v[i] = tb[i];
    }
    const double rcl_expect = rcl_loss(to_tensor(gta).v, to_tensor(gtb).v);

    EXPECT_NEAR(lb.flow, flow_expect, 1e-12);
    EXPECT_NEAR(lb.score, z2, 1e-12);
    EXPECT_NEAR(lb.rcl, rcl_expect, 1e-12);
    EXPECT_NEAR(lb.total, lb.flow + lb.score + lambda * lb.rcl, 1e-12);
}

TEST(TotalLoss, ArgumentValidation) {
    const NetConfig net = tiny_net(2);
    const ad::Params pv = init_params(net, 1);
    const ad::Params pn = init_params(net, 2);
    Rng rng = make_rng(1);
    EXPECT_THROW(total_loss({}, net, pv, pn, 0.1, 1e-3, rng), argument_error);

    const Dataset ds = tiny_dataset(20.0);
    const ShiftedPair pair = sample_shifted_pair(ds, 0, 100, 30, 20);
    EXPECT_THROW(total_loss({pair}, net, pv, pn, -0.1, 1e-3, rng), argument_error);
}

TEST(TotalLoss, GradientsMatchFiniteDifferences) {
    const Dataset ds = tiny_dataset(20.0);
    NetConfig net = tiny_net(2);
    const ShiftedPair pair = sample_shifted_pair(ds, 0, 100, 30, 10);

    // random (nonzero) parameters so every path through the loss is active
    ad::Params pv = init_params(net, 1);
    ad::Params pn = init_params(net, 2);
    Rng prng = make_rng(3);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& [k, t] : pv)
        for (double& x : t.v) x = g(prng);
    for (auto& [k, t] : pn)
        for (double& x : t.v) x = g(prng);

    const double lambda = 0.3;
    // frozen rng per evaluation so the loss is a deterministic function
    auto eval = [&](const ad::Params& v, const ad::Params& n, ad::Params* gv, ad::Params* gn) {
        Rng rng = make_rng(42);
        return total_loss({pair}, net, v, n, lambda, 1e-3, rng, gv, gn);
    };

    ad::Params gv = pv, gn = pn;
    eval(pv, pn, &gv, &gn);

    auto check = [&](const ad::Params& params, bool is_v) {
        auto f = [&](const ad::Params& q) {
            return is_v ? eval(q, pn, nullptr, nullptr).total : eval(pv, q, nullptr, nullptr).total;
        };
        auto grads = [&](const ad::Params&) { return is_v ? gv : gn; };
        Rng rng = make_rng(is_v ? 11 : 12);
        return ad::grad_check(f, grads, params, 1e-6, 20, rng);
    };
    EXPECT_LT(check(pv, true), 2e-4);
    EXPECT_LT(check(pn, false), 2e-4);
}

TEST(Train, TinyRunIsDeterministicAndTracksValidation) {
    const Dataset ds = tiny_dataset(15.0);
    const NetConfig net = tiny_net(2);
    TrainConfig cfg;
    cfg.window_length = 50;
    cfg.delta_shift_sec = 4.0;  // 100 samples at fs = 25
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 3;
    cfg.seed = 17;

    const TrainResult a = train(ds, cfg, net);
    ASSERT_EQ(a.curves.size(), 3u);
    for (const CurveRow& row : a.curves) {
        EXPECT_TRUE(std::isfinite(row.total));
        EXPECT_GE(row.flow, 0.0);
        EXPECT_GE(row.score, 0.0);
    }
    EXPECT_EQ(a.curves.back().step, 3);
    EXPECT_LE(a.best_val, a.curves.front().val_total);
    EXPECT_NO_THROW(check_params(net, a.best_params_v));
    EXPECT_NO_THROW(check_params(net, a.best_params_n));

    const TrainResult b = train(ds, cfg, net);
    ASSERT_EQ(b.curves.size(), a.curves.size());
    for (size_t i = 0; i < a.curves.size(); ++i) {
        EXPECT_EQ(a.curves[i].total, b.curves[i].total);
        EXPECT_EQ(a.curves[i].val_total, b.curves[i].val_total);
    }
}

TEST(Train, ResumeContinuesStepCount) {
    const Dataset ds = tiny_dataset(15.0);
    const NetConfig net = tiny_net(2);
    TrainConfig cfg;
    cfg.window_length = 50;
    cfg.delta_shift_sec = 4.0;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 2;
    cfg.seed = 17;

    const TrainResult first = train(ds, cfg, net);
    const TrainResult second = train(ds, cfg, net, &first);
    ASSERT_EQ(second.curves.size(), 4u);
    EXPECT_EQ(second.curves.back().step, 4);
    EXPECT_EQ(second.adam_v.step, 4);
}

TEST(Train, RejectsBadConfigurations) {
    const Dataset ds = tiny_dataset(15.0);
    TrainConfig cfg;
    cfg.window_length = 50;
    cfg.delta_shift_sec = 20.0;  // 500 samples, longer than the track
    EXPECT_THROW(train(ds, cfg, tiny_net(2)), argument_error);

    cfg.delta_shift_sec = 4.0;
    EXPECT_THROW(train(ds, cfg, tiny_net(3)), architecture_error);

    Dataset empty;
    EXPECT_THROW(train(empty, cfg, tiny_net(2)), argument_error);
}

TEST(Train, LossDecreasesOnAverage) {
    const Dataset ds = tiny_dataset(15.0);
    const NetConfig net = tiny_net(2);
    TrainConfig cfg;
    cfg.window_length = 50;
    cfg.delta_shift_sec = 4.0;
    cfg.batch_size = 4;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 30;
    cfg.lr = 1e-2;
    cfg.seed = 23;

    const TrainResult r = train(ds, cfg, net);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 5; ++i) {
        head += r.curves[i].val_total / 5.0;
        tail += r.curves[r.curves.size() - 1 - i].val_total / 5.0;
    }
    EXPECT_LT(tail, head);
}
