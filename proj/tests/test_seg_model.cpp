#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "xfuse/metrics.hpp"
#include "xfuse/seg_model.hpp"

using namespace xfuse;

namespace {

SegConfig tiny_cfg() {
    SegConfig cfg;
    cfg.encoder.size = 16;
    cfg.encoder.patch = 2;
    cfg.encoder.width = 4;
    cfg.encoder.depths = {1, 1};
    cfg.encoder.heads = {2, 2};
    cfg.encoder.window = 4;
    cfg.decoder_widths = {6, 4};
    return cfg;
}

SegConfig small_cfg() {
    SegConfig cfg;
    cfg.encoder.size = 32;
    cfg.encoder.patch = 4;
    cfg.encoder.width = 8;
    cfg.encoder.depths = {1, 1};
    cfg.encoder.heads = {2, 2};
    cfg.encoder.window = 4;
    cfg.decoder_widths = {16, 8, 8};
    return cfg;
}

Tensor random_image(size_t S, Rng& rng) {
    Tensor img({3, S, S});
    for (size_t i = 0; i < img.numel(); ++i) img.at(i) = rng.uniform();
    return img;
}

Tensor random_mask(size_t S, Rng& rng) {
    Tensor m({1, S, S});
    for (size_t i = 0; i < m.numel(); ++i) m.at(i) = rng.bernoulli(0.1) ? 1.0 : 0.0;
    return m;
}

double seg_loss_eval(const SegModel& m, const Tensor& img, const Tensor& mask) {
    return bce_with_logits(nullptr, seg_forward(nullptr, m, img), mask).item();
}

std::vector<Sample> fixed_batch(size_t n, size_t S, uint64_t seed) {
    SynthConfig scfg;
    scfg.size = S;
    scfg.seed = seed;
    std::vector<Sample> batch;
    for (size_t i = 0; i < n; ++i) batch.push_back(make_sample(scfg, i));
    return batch;
}

} // namespace

TEST(SegConfigCheck, RejectsBadShapes) {
    SegConfig cfg = tiny_cfg();
    cfg.decoder_widths = {6, 4, 2};
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = tiny_cfg();
    cfg.encoder.size = 20;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = tiny_cfg();
    cfg.encoder.patch = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = tiny_cfg();
    cfg.encoder.heads = {3, 2};
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = tiny_cfg();
    cfg.dropout = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    EXPECT_NO_THROW(tiny_cfg().validate());
    EXPECT_NO_THROW(SegConfig{}.validate());
}

TEST(SegForward, OutputMatchesInputDims) {
    Rng rng(3);
    for (const SegConfig& cfg : {tiny_cfg(), small_cfg()}) {
        SegModel m = make_seg_model(cfg, rng);
        Tensor img = random_image(cfg.encoder.size, rng);
        Tensor logits = seg_forward(nullptr, m, img);
        ASSERT_EQ(logits.rank(), 3u);
        EXPECT_EQ(logits.dim(0), 1u);
        EXPECT_EQ(logits.dim(1), cfg.encoder.size);
        EXPECT_EQ(logits.dim(2), cfg.encoder.size);
    }
}

TEST(SegForward, BadSpatialSizeThrows) {
    Rng rng(4);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    EXPECT_THROW(seg_forward(nullptr, m, Tensor({3, 8, 8}, 0.1)), ShapeError);
    EXPECT_THROW(seg_forward(nullptr, m, Tensor({1, 16, 16}, 0.1)), ShapeError);
    EXPECT_THROW(seg_forward(nullptr, m, Tensor({3, 16, 8}, 0.1)), ShapeError);
}

TEST(SegForward, ZeroFinalConvGivesHalfProbabilities) {
    Rng rng(5);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    for (size_t i = 0; i < m.params["out.w"].numel(); ++i) m.params["out.w"].at(i) = 0.0;
    m.params["out.b"].at(0) = 0.0;
    Tensor img = random_image(16, rng);
    Tensor logits = seg_forward(nullptr, m, img);
    for (size_t i = 0; i < logits.numel(); ++i) EXPECT_DOUBLE_EQ(logits.at(i), 0.0);
    Tensor map = generate_lesion_map(m, img);
    for (size_t i = 0; i < map.numel(); ++i) EXPECT_DOUBLE_EQ(map.at(i), 0.5);
}

TEST(SegForward, GradientsMatchFiniteDifferences) {
    Rng rng(6);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    Tensor img = random_image(16, rng);
    Tensor mask = random_mask(16, rng);

    Graph g;
    Tensor loss = bce_with_logits(&g, seg_forward(&g, m, img), mask);
    zero_grads(m.params);
    g.backward(loss);

    Rng pick(7);
    for (const char* name : {"dec1.c1.w", "enc.s0.b0.at.wq", "enc.embed.w", "out.w", "enc.m0.w",
                             "dec0.c2.b", "enc.s1.b0.mlp.w1", "enc.s0.b0.ln1.g"}) {
        Tensor p = m.params.at(name);
        ASSERT_TRUE(p.has_grad()) << name;
        for (int probe = 0; probe < 3; ++probe) {
            const size_t i = pick.below(p.numel());
            const double h = 1e-5, keep = p.at(i);
            p.at(i) = keep + h;
            const double up = seg_loss_eval(m, img, mask);
            p.at(i) = keep - h;
            const double dn = seg_loss_eval(m, img, mask);
            p.at(i) = keep;
            const double fd = (up - dn) / (2 * h);
            EXPECT_LT(oracles::rel_err(p.grad_ref()[i], fd), 1e-4)
                << name << "[" << i << "] analytic " << p.grad_ref()[i] << " fd " << fd;
        }
    }
}

TEST(SegTrainStep, AllZeroWeightsGiveLogTwoLoss) {
    Rng rng(8);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    for (auto& [name, p] : m.params)
        for (size_t i = 0; i < p.numel(); ++i) p.at(i) = 0.0;
    SgdState state;
    state.attach(m.params);
    std::vector<Sample> batch = fixed_batch(2, 16, 11);
    Rng step_rng(9);
    const double loss = seg_train_step(m, state, batch, step_rng);
    EXPECT_NEAR(loss, std::log(2.0), 1e-12);
}

TEST(SegTrainStep, RejectsBadBatches) {
    Rng rng(10);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    SgdState state;
    state.attach(m.params);
    Rng step_rng(1);

    std::vector<Sample> empty;
    EXPECT_THROW(seg_train_step(m, state, empty, step_rng), ValidationError);

    std::vector<Sample> no_mask = fixed_batch(1, 16, 12);
    no_mask[0].mask = Tensor();
    EXPECT_THROW(seg_train_step(m, state, no_mask, step_rng), ValidationError);

    std::vector<Sample> soft = fixed_batch(1, 16, 12);
    soft[0].mask.at(0) = 0.25;
    EXPECT_THROW(seg_train_step(m, state, soft, step_rng), ValidationError);

    std::vector<Sample> wrong = fixed_batch(1, 16, 12);
    wrong[0].mask = Tensor({1, 8, 8}, 0.0);
    EXPECT_THROW(seg_train_step(m, state, wrong, step_rng), ValidationError);
}

TEST(SegTrainStep, DeterministicTrajectory) {
    std::vector<Sample> batch = fixed_batch(2, 16, 13);
    std::vector<double> runs[2];
    for (int r = 0; r < 2; ++r) {
        Rng rng(14);
        SegModel m = make_seg_model(tiny_cfg(), rng);
        SgdState state;
        state.attach(m.params);
        Rng step_rng(15);
        for (int step = 0; step < 5; ++step) runs[r].push_back(seg_train_step(m, state, batch, step_rng));
    }
    for (int step = 0; step < 5; ++step) EXPECT_EQ(runs[0][step], runs[1][step]) << step;
}

TEST(SegTrainStep, OverfitsAFixedBatch) {
    std::vector<Sample> batch = fixed_batch(8, 32, 16);
    Rng rng(17);
    SegModel m = make_seg_model(small_cfg(), rng);
    SgdState state;
    state.attach(m.params);
    Rng step_rng(18);
    std::vector<double> losses;
    for (int step = 0; step < 400; ++step) losses.push_back(seg_train_step(m, state, batch, step_rng));
    EXPECT_LT(losses.back(), 0.1 * losses.front())
        << "first " << losses.front() << " last " << losses.back();

    // window means over 20 steps never increase (no dropout configured)
    for (size_t w = 20; w < losses.size(); w += 20) {
        double prev = 0, cur = 0;
        for (size_t i = 0; i < 20; ++i) {
            prev += losses[w - 20 + i];
            if (w + i < losses.size()) cur += losses[w + i];
        }
        EXPECT_LE(cur, prev + 1e-9) << "window at " << w;
    }
}

TEST(LesionMap, RangeAndDeterminism) {
    Rng rng(19);
    SegModel m = make_seg_model(tiny_cfg(), rng);
    Tensor img = random_image(16, rng);
    Tensor a = generate_lesion_map(m, img);
    Tensor b = generate_lesion_map(m, img);
    ASSERT_EQ(a.numel(), b.numel());
    for (size_t i = 0; i < a.numel(); ++i) {
        EXPECT_GT(a.at(i), 0.0);
        EXPECT_LT(a.at(i), 1.0);
        EXPECT_TRUE(std::isfinite(a.at(i)));
        EXPECT_EQ(a.at(i), b.at(i));
    }
}

TEST(LesionMap, PerfectMapBinarizesToPerfectDice) {
    std::vector<Sample> batch = fixed_batch(4, 16, 20);
    for (const Sample& s : batch) {
        Tensor probs(s.mask.shape());
        for (size_t i = 0; i < probs.numel(); ++i) probs.at(i) = s.mask.at(i) == 1.0 ? 0.99 : 0.01;
        Tensor hard = binarize(probs, 0.5);
        EXPECT_DOUBLE_EQ(dice(hard, s.mask), 1.0);
        EXPECT_DOUBLE_EQ(iou(hard, s.mask), 1.0);
    }
}
