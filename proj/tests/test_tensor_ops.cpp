#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "xfuse/ops.hpp"

using namespace xfuse;

TEST(Tensor, ConstructionAndAccess) {
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_DOUBLE_EQ(t.at(5), 1.5);
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    EXPECT_THROW(Tensor({2}, {1.0, 2.0}).item(), ContractError);
    EXPECT_DOUBLE_EQ(Tensor::scalar(4.25).item(), 4.25);
}

TEST(Tensor, ReshapeChecksElementCount) {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor r = t.reshape({3, 2});
    EXPECT_EQ(r.dim(0), 3u);
    EXPECT_DOUBLE_EQ(r.at(5), 5.0);
    EXPECT_THROW(t.reshape({4, 2}), ShapeError);
}

TEST(Matmul, IdentityHandAndZero) {
    Tensor I({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(nullptr, I, a);
    for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out.at(i), a.at(i));

    Tensor row({1, 2}, {1, 2});
    Tensor col({2, 1}, {3, 4});
    EXPECT_DOUBLE_EQ(matmul(nullptr, row, col).item(), 11.0);

    Tensor z({2, 2}, 0.0);
    Tensor az = matmul(nullptr, a, z);
    for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(az.at(i), 0.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    Tensor a({2, 3}, 1.0), b({2, 2}, 1.0);
    try {
        matmul(nullptr, a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
    }
}

TEST(MatmulNT, MatchesExplicitTranspose) {
    Rng rng(7);
    Tensor a({3, 4});
    Tensor b({2, 4});
    for (size_t i = 0; i < a.numel(); ++i) a.at(i) = rng.uniform(-2, 2);
    for (size_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-2, 2);
    Tensor bt = transpose2d(nullptr, b);
    Tensor want = matmul(nullptr, a, bt);
    Tensor got = matmul_nt(nullptr, a, b);
    for (size_t i = 0; i < want.numel(); ++i) EXPECT_DOUBLE_EQ(got.at(i), want.at(i));
}

TEST(SoftmaxRows, SpecValues) {
    Tensor x({1, 3}, {5, 5, 5});
    Tensor y = softmax_rows(nullptr, x);
    for (size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.at(i), 1.0 / 3.0, 1e-15);

    Tensor single({4, 1}, {3, -1, 0, 9});
    Tensor ys = softmax_rows(nullptr, single);
    for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(ys.at(i), 1.0);

    Tensor pair({1, 2}, {0.0, std::log(3.0)});
    Tensor yp = softmax_rows(nullptr, pair);
    EXPECT_NEAR(yp.at(0), 0.25, 1e-15);
    EXPECT_NEAR(yp.at(1), 0.75, 1e-15);
}

TEST(SoftmaxRows, RowsSumToOneAndShiftInvariant) {
    Rng rng(11);
    Tensor x({8, 13});
    for (size_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-30, 30);
    Tensor y = softmax_rows(nullptr, x);
    for (size_t r = 0; r < 8; ++r) {
        double s = 0.0;
        for (size_t c = 0; c < 13; ++c) s += y.at(r * 13 + c);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    Tensor shifted = x.clone();
    for (size_t c = 0; c < 13; ++c) shifted.at(3 * 13 + c) += 41.5;
    Tensor y2 = softmax_rows(nullptr, shifted);
    for (size_t c = 0; c < 13; ++c) EXPECT_NEAR(y2.at(3 * 13 + c), y.at(3 * 13 + c), 1e-12);
}

TEST(BceWithLogits, SpecValues) {
    EXPECT_NEAR(bce_with_logits(nullptr, Tensor({1}, {0.0}), Tensor({1}, {0.0})).item(),
                std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_with_logits(nullptr, Tensor({1}, {1.0}), Tensor({1}, {0.0})).item(),
                1.0 + std::log1p(std::exp(-1.0)), 1e-15);
    const double huge = bce_with_logits(nullptr, Tensor({1}, {1e4}), Tensor({1}, {1.0})).item();
    EXPECT_TRUE(std::isfinite(huge));
    EXPECT_NEAR(huge, 0.0, 1e-12);
}

TEST(BceWithLogits, MatchesNaiveFormAndStaysFinite) {
    Rng rng(3);
    std::vector<double> logits(64), targets(64);
    for (size_t i = 0; i < 64; ++i) {
        logits[i] = rng.uniform(-10, 10);
        targets[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const double got =
        bce_with_logits(nullptr, Tensor({64}, logits), Tensor({64}, targets)).item();
    EXPECT_NEAR(got, oracles::bce_naive(logits, targets), 1e-9);

    Tensor big({2}, {1e6, -1e6});
    Tensor y({2}, {0.0, 1.0});
    EXPECT_TRUE(std::isfinite(bce_with_logits(nullptr, big, y).item()));
}

TEST(BceWithLogits, RejectsNonBinaryTargets) {
    EXPECT_THROW(bce_with_logits(nullptr, Tensor({1}, {0.0}), Tensor({1}, {0.5})),
                 ValidationError);
}

TEST(LayerNorm, SpecValues) {
    Tensor gain({3}, 1.0), bias({3}, 0.0);
    Tensor c({1, 3}, {7, 7, 7});
    Tensor yc = layer_norm(nullptr, c, gain, bias);
    for (size_t i = 0; i < 3; ++i) EXPECT_NEAR(yc.at(i), 0.0, 1e-12);

    Tensor g2({2}, 1.0), b2({2}, 0.0);
    Tensor x({1, 2}, {1, 3});
    Tensor y = layer_norm(nullptr, x, g2, b2, 1e-12);
    EXPECT_NEAR(y.at(0), -1.0, 1e-9);
    EXPECT_NEAR(y.at(1), 1.0, 1e-9);

    Tensor gz({2}, 0.0), bz({2}, {2.5, -4.0});
    Tensor yz = layer_norm(nullptr, x, gz, bz);
    EXPECT_DOUBLE_EQ(yz.at(0), 2.5);
    EXPECT_DOUBLE_EQ(yz.at(1), -4.0);

    EXPECT_THROW(layer_norm(nullptr, x, g2, b2, 0.0), ConfigError);
}

TEST(Conv2d, SpecValues) {
    Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w1({1, 1, 1, 1}, {1.0});
    Tensor b0({1}, 0.0);
    Tensor ident = conv2d(nullptr, x, w1, b0, 0);
    for (size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(ident.at(i), x.at(i));

    Tensor ones({1, 3, 3}, 1.0);
    Tensor w9({1, 1, 3, 3}, 1.0);
    Tensor center = conv2d(nullptr, ones, w9, b0, 0);
    EXPECT_EQ(center.numel(), 1u);
    EXPECT_DOUBLE_EQ(center.item(), 9.0);

    Tensor wz({2, 1, 3, 3}, 0.0);
    Tensor bb({2}, {1.5, -2.0});
    Tensor yb = conv2d(nullptr, ones, wz, bb, 1);
    EXPECT_EQ(yb.dim(0), 2u);
    EXPECT_EQ(yb.dim(1), 3u);
    for (size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(yb.at(i), 1.5);
    for (size_t i = 9; i < 18; ++i) EXPECT_DOUBLE_EQ(yb.at(i), -2.0);
}

TEST(Conv2d, SamePaddingKeepsDimsAndChecksChannels) {
    Tensor x({3, 8, 8}, 0.25);
    Tensor w({5, 3, 3, 3}, 0.1);
    Tensor b({5}, 0.0);
    Tensor y = conv2d(nullptr, x, w, b, 1);
    EXPECT_EQ(y.dim(0), 5u);
    EXPECT_EQ(y.dim(1), 8u);
    EXPECT_EQ(y.dim(2), 8u);

    Tensor wbad({5, 4, 3, 3}, 0.1);
    EXPECT_THROW(conv2d(nullptr, x, wbad, b, 1), ShapeError);
    Tensor tiny({3, 1, 1}, 0.0);
    EXPECT_THROW(conv2d(nullptr, tiny, w, b, 0), ShapeError);
}

TEST(UpsampleNearest2x, SpecValues) {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor y = upsample_nearest_2x(nullptr, x);
    const double want[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    ASSERT_EQ(y.numel(), 16u);
    for (size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(y.at(i), want[i]);

    Tensor c({2, 3, 3}, 0.75);
    Tensor yc = upsample_nearest_2x(nullptr, c);
    for (size_t i = 0; i < yc.numel(); ++i) EXPECT_DOUBLE_EQ(yc.at(i), 0.75);
}

TEST(Dropout, IdentityModes) {
    Rng rng(5);
    Tensor x({4, 4});
    for (size_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1, 1);

    Tensor eval_out = dropout(nullptr, x, 0.5, rng, false);
    for (size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(eval_out.at(i), x.at(i));

    Tensor p0 = dropout(nullptr, x, 0.0, rng, true);
    for (size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(p0.at(i), x.at(i));

    EXPECT_THROW(dropout(nullptr, x, 1.0, rng, true), ConfigError);
    EXPECT_THROW(dropout(nullptr, x, -0.1, rng, true), ConfigError);
}

TEST(Dropout, SurvivorFractionAndMean) {
    Rng rng(97);
    const size_t n = 100000;
    Tensor x({n}, 1.0);
    Tensor y = dropout(nullptr, x, 0.5, rng, true);
    size_t survivors = 0;
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (y.at(i) != 0.0) {
            ++survivors;
            EXPECT_DOUBLE_EQ(y.at(i), 2.0);
        }
        mean += y.at(i);
    }
    mean /= static_cast<double>(n);
    EXPECT_NEAR(static_cast<double>(survivors) / n, 0.5, 0.01);
    EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(GatherAndConcat, RoundTripsAndErrors) {
    Tensor x({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
    Tensor picked = gather_rows(nullptr, x, {3, 1}, {2, 2});
    EXPECT_DOUBLE_EQ(picked.at(0), 30.0);
    EXPECT_DOUBLE_EQ(picked.at(3), 11.0);
    EXPECT_THROW(gather_rows(nullptr, x, {4}, {1, 2}), ShapeError);
    EXPECT_THROW(gather_rows(nullptr, x, {0}, {2, 2}), ShapeError);

    Tensor e = gather_elems(nullptr, x, {7, 0}, {2});
    EXPECT_DOUBLE_EQ(e.at(0), 31.0);
    EXPECT_DOUBLE_EQ(e.at(1), 0.0);
    EXPECT_THROW(gather_elems(nullptr, x, {8}, {1}), ShapeError);

    Tensor a({2, 1}, {1, 2});
    Tensor b({2, 2}, {3, 4, 5, 6});
    Tensor cc = concat_cols(nullptr, {a, b});
    EXPECT_EQ(cc.dim(1), 3u);
    EXPECT_DOUBLE_EQ(cc.at(0), 1.0);
    EXPECT_DOUBLE_EQ(cc.at(2), 4.0);
    EXPECT_DOUBLE_EQ(cc.at(3), 2.0);
    EXPECT_THROW(concat_cols(nullptr, {a, Tensor({3, 1}, 0.0)}), ShapeError);

    Tensor p({1, 2, 2}, {1, 2, 3, 4});
    Tensor q({2, 2, 2}, 9.0);
    Tensor cf = concat_first(nullptr, {p, q});
    EXPECT_EQ(cf.dim(0), 3u);
    EXPECT_DOUBLE_EQ(cf.at(0), 1.0);
    EXPECT_DOUBLE_EQ(cf.at(4), 9.0);
    EXPECT_THROW(concat_first(nullptr, {p, Tensor({1, 3, 2}, 0.0)}), ShapeError);

    Tensor sc = slice_cols(nullptr, b, 1, 2);
    EXPECT_DOUBLE_EQ(sc.at(0), 4.0);
    EXPECT_DOUBLE_EQ(sc.at(1), 6.0);
    EXPECT_THROW(slice_cols(nullptr, b, 1, 3), ShapeError);
}

TEST(Activations, ForwardValues) {
    Tensor x({5}, {-2, -0.5, 0, 0.5, 2});
    Tensor r = relu(nullptr, x);
    EXPECT_DOUBLE_EQ(r.at(0), 0.0);
    EXPECT_DOUBLE_EQ(r.at(4), 2.0);

    Tensor s = sigmoid(nullptr, x);
    EXPECT_NEAR(s.at(2), 0.5, 1e-15);
    EXPECT_NEAR(s.at(4), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);

    Tensor ge = gelu(nullptr, x);
    EXPECT_NEAR(ge.at(2), 0.0, 1e-15);
    // x·Φ(x) at x=2 with Φ from the error function
    EXPECT_NEAR(ge.at(4), 2.0 * 0.5 * std::erfc(-2.0 / std::sqrt(2.0)), 1e-12);
}

TEST(Reductions, MeanAndSum) {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_DOUBLE_EQ(sum_all(nullptr, x).item(), 21.0);
    EXPECT_DOUBLE_EQ(mean_all(nullptr, x).item(), 3.5);
    Tensor m = mean_rows(nullptr, x);
    EXPECT_DOUBLE_EQ(m.at(0), 2.5);
    EXPECT_DOUBLE_EQ(m.at(1), 3.5);
    EXPECT_DOUBLE_EQ(m.at(2), 4.5);
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
    Rng rng(123);
    Tensor a({7, 9}), b({9, 5});
    for (size_t i = 0; i < a.numel(); ++i) a.at(i) = rng.uniform(-3, 3);
    for (size_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-3, 3);
    Tensor y1 = matmul(nullptr, a, b);
    Tensor y2 = matmul(nullptr, a, b);
    for (size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.at(i), y2.at(i));
    Tensor s1 = softmax_rows(nullptr, y1);
    Tensor s2 = softmax_rows(nullptr, y2);
    for (size_t i = 0; i < s1.numel(); ++i) EXPECT_EQ(s1.at(i), s2.at(i));
}

TEST(RngStreams, DeterministicAndIndependent) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 16; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    bool differs = false;
    for (int i = 0; i < 16; ++i) differs |= (a.next_u64() != c.next_u64());
    EXPECT_TRUE(differs);

    Rng root(7);
    Rng s1 = root.derive("weights");
    Rng s2 = root.derive("weights");
    Rng s3 = root.derive("data");
    EXPECT_EQ(s1.next_u64(), s2.next_u64());
    EXPECT_NE(s1.next_u64(), s3.next_u64());
    EXPECT_NE(root.derive(0).next_u64(), root.derive(1).next_u64());
}

TEST(RngStreams, UniformRangeAndNormalMoments) {
    Rng rng(2024);
    double mn = 1.0, mx = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    EXPECT_LT(mn, 0.01);
    EXPECT_GT(mx, 0.99);

    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sq / n, 1.0, 0.03);

    for (int i = 0; i < 1000; ++i) ASSERT_LT(rng.below(17), 17u);
}
