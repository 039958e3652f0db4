#include <gtest/gtest.h>

#include "xfuse/config.hpp"

namespace xfuse {
namespace {

TEST(ConfigParse, DefaultsSurviveSerializeParseRoundTrip) {
    RunConfig a;
    a.stage = "train-seg";
    a.milestones = {3, 7};
    a.seg_ckpt = "runs/seg.ckpt";
    const std::string text = serialize_run_config(a);
    const RunConfig b = parse_run_config(text);
    EXPECT_EQ(serialize_run_config(b), text);
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(b.seed, a.seed);
    EXPECT_EQ(b.depths, a.depths);
    EXPECT_EQ(b.heads, a.heads);
    EXPECT_EQ(b.milestones, (std::vector<size_t>{3, 7}));
    EXPECT_EQ(b.stage, "train-seg");
    EXPECT_EQ(b.seg_ckpt, "runs/seg.ckpt");
    EXPECT_DOUBLE_EQ(b.lr, a.lr);
    EXPECT_DOUBLE_EQ(b.head_dropout, a.head_dropout);
}

TEST(ConfigParse, CommentsBlanksAndSpacingAreTolerated) {
    const std::string text =
        "# run settings\n"
        "\n"
        "  seed =  9   # trailing comment\n"
        "fusion=off\n"
        "\tepochs\t=\t5\n"
        "depths = 1,1\n";
    const RunConfig c = parse_run_config(text);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_FALSE(c.fusion);
    EXPECT_EQ(c.epochs, 5u);
    EXPECT_EQ(c.depths, (std::vector<size_t>{1, 1}));
    EXPECT_TRUE(c.transfer);
}

TEST(ConfigParse, RejectsUnknownDuplicateAndMalformedLines) {
    EXPECT_THROW(parse_run_config("learning_rate = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
    EXPECT_THROW(parse_run_config("seed 1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("= 4\n"), ConfigError);
    EXPECT_THROW(parse_run_config("lr = fast\n"), ConfigError);
    EXPECT_THROW(parse_run_config("seed = -3\n"), ConfigError);
    EXPECT_THROW(parse_run_config("fusion = maybe\n"), ConfigError);
    EXPECT_THROW(parse_run_config("depths = 2,,2\n"), ConfigError);
    try {
        parse_run_config("seed = 1\nbogus = 2\n");
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
    }
}

TEST(ConfigParse, BoolSpellings) {
    EXPECT_TRUE(parse_run_config("fusion = on\n").fusion);
    EXPECT_TRUE(parse_run_config("fusion = true\n").fusion);
    EXPECT_TRUE(parse_run_config("fusion = 1\n").fusion);
    EXPECT_FALSE(parse_run_config("fusion = off\n").fusion);
    EXPECT_FALSE(parse_run_config("fusion = false\n").fusion);
    EXPECT_FALSE(parse_run_config("fusion = 0\n").fusion);
}

TEST(ConfigValidate, CoreInvariants) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());

    RunConfig bad = c;
    bad.lr = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.batch = 0;
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.epochs = 10;
    bad.milestones = {4, 4};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad.milestones = {4, 11};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad.milestones = {0};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad.milestones = {4, 8};
    EXPECT_NO_THROW(bad.validate());
    bad.epochs = 4;
    bad.seg_epochs = 25;
    bad.milestones = {21, 24};
    EXPECT_NO_THROW(bad.validate());
    bad.milestones = {21, 26};
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.train_frac = 0.5;
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.stage = "deploy";
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.momentum = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = c;
    bad.lr_factor = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ConfigHash, CoversResultFieldsAndIgnoresArtifactPaths) {
    const RunConfig base;
    const uint64_t h = config_hash(base);

    RunConfig c = base;
    c.seed = 2;
    EXPECT_NE(config_hash(c), h);

    c = base;
    c.fusion = false;
    EXPECT_NE(config_hash(c), h);

    c = base;
    c.lr = 0.02;
    EXPECT_NE(config_hash(c), h);

    c = base;
    c.depths = {2, 2, 2};
    EXPECT_NE(config_hash(c), h);

    c = base;
    c.out = "elsewhere";
    c.maps = "elsewhere/maps";
    c.seg_ckpt = "elsewhere/seg.ckpt";
    c.cls_ckpt = "elsewhere/cls.ckpt";
    c.stage = "ablate";
    EXPECT_EQ(config_hash(c), h);
}

TEST(ConfigProjection, ModelAndDataViewsCarryTheRightFields) {
    RunConfig c;
    c.size = 32;
    c.patch = 2;
    c.width = 8;
    c.window = 4;
    c.depths = {1, 1};
    c.heads = {2, 2};
    c.decoder_widths = {16, 8};
    c.fusion = false;
    c.fusion_heads = 2;
    c.head_dropout = 0.25;
    c.seed = 77;
    c.train_frac = 0.5;
    c.val_frac = 0.25;
    c.test_frac = 0.25;

    const SegConfig s = seg_config(c);
    EXPECT_EQ(s.encoder.size, 32u);
    EXPECT_EQ(s.encoder.patch, 2u);
    EXPECT_EQ(s.encoder.width, 8u);
    EXPECT_EQ(s.decoder_widths, (std::vector<size_t>{16, 8}));
    EXPECT_NO_THROW(s.validate());

    const ClsConfig k = cls_config(c);
    EXPECT_FALSE(k.fusion);
    EXPECT_EQ(k.fusion_heads, 2u);
    EXPECT_DOUBLE_EQ(k.head_dropout, 0.25);

    const SynthConfig d = synth_config(c);
    EXPECT_EQ(d.size, 32u);
    EXPECT_EQ(d.seed, 77u);
    EXPECT_DOUBLE_EQ(d.train_frac, 0.5);
}

TEST(ConfigSchedule, MilestoneDefaultsAndOverrides) {
    RunConfig c;
    c.epochs = 30;
    EXPECT_EQ(run_milestones(c, c.epochs), (std::vector<size_t>{18, 26}));
    c.milestones = {5, 9};
    EXPECT_EQ(run_milestones(c, c.epochs), (std::vector<size_t>{5, 9}));

    c.seg_epochs = 0;
    c.epochs = 12;
    EXPECT_EQ(seg_epoch_count(c), 12u);
    c.seg_epochs = 4;
    EXPECT_EQ(seg_epoch_count(c), 4u);
}

TEST(ConfigFile, MissingFileIsAnError) {
    EXPECT_THROW(load_run_config("/nonexistent/xfuse.cfg"), ConfigError);
}

} // namespace
} // namespace xfuse
