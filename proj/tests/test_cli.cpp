#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "xfuse/csv.hpp"

namespace xfuse {
namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the pipeline binary with the given arguments and captures both streams.
RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string base = ::testing::TempDir() + "xfuse_cli_io" + std::to_string(counter++);
    const std::string out_path = base + ".out", err_path = base + ".err";
    const std::string cmd =
        std::string(XFUSE_BIN) + " " + args + " > " + out_path + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out_path);
    r.err = read_text_file(err_path);
    return r;
}

std::string tiny_config_file() {
    static const std::string path = [] {
        const std::string p = ::testing::TempDir() + "xfuse_cli_tiny.cfg";
        std::ofstream f(p);
        f << "seed = 12\nsamples = 60\nsize = 16\npatch = 2\nwidth = 4\nwindow = 4\n"
             "depths = 1,1\nheads = 2,2\ndecoder_widths = 6,4\nfusion_heads = 2\n"
             "train_frac = 0.5\nval_frac = 0.25\ntest_frac = 0.25\nbatch = 10\nepochs = 1\n";
        return p;
    }();
    return path;
}

bool same_file_bytes(const std::string& a, const std::string& b) {
    return read_text_file(a) == read_text_file(b);
}

TEST(Cli, NoSubcommandPrintsUsageAndFails) {
    const RunResult r = run_cli("");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("usage:"), std::string::npos);
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, EvalWithoutCheckpointFlagFailsWithUsage) {
    const RunResult r = run_cli("eval --out " + ::testing::TempDir() + "xfuse_cli_eval");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("--cls-ckpt"), std::string::npos);
    EXPECT_NE(r.err.find("usage:"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndFlagFail) {
    EXPECT_EQ(run_cli("deploy").exit_code, 1);
    EXPECT_EQ(run_cli("synth --turbo 9").exit_code, 1);
    EXPECT_EQ(run_cli("synth --seed").exit_code, 1);
}

TEST(Cli, InvalidOverrideValueFailsBeforeAnyWork) {
    const std::string out = ::testing::TempDir() + "xfuse_cli_badval";
    std::filesystem::remove_all(out);
    const RunResult r = run_cli("synth --seed banana --out " + out);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, SynthTwiceProducesIdenticalTrees) {
    const std::string d1 = ::testing::TempDir() + "xfuse_cli_d1";
    const std::string d2 = ::testing::TempDir() + "xfuse_cli_d2";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    ASSERT_EQ(run_cli("synth --seed 7 --samples 10 --size 16 --out " + d1).exit_code, 0);
    ASSERT_EQ(run_cli("synth --seed 7 --samples 10 --size 16 --out " + d2).exit_code, 0);

    size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const std::string rel =
            std::filesystem::relative(entry.path(), d1).string();
        EXPECT_TRUE(same_file_bytes(entry.path().string(), d2 + "/" + rel)) << rel;
    }
    EXPECT_EQ(files, 11u);
}

TEST(Cli, PipelineRunsAndPlotReproducesEvalSvgs) {
    const std::string out = ::testing::TempDir() + "xfuse_cli_pipe";
    std::filesystem::remove_all(out);
    const std::string cfg = " --config " + tiny_config_file() + " --out " + out;

    const RunResult seg = run_cli("train-seg" + cfg);
    ASSERT_EQ(seg.exit_code, 0) << seg.err;
    EXPECT_NE(seg.out.find("val_dice,"), std::string::npos);

    ASSERT_EQ(run_cli("gen-maps" + cfg + " --seg-ckpt " + out + "/seg.ckpt").exit_code, 0);
    const RunResult cls = run_cli("train-cls" + cfg + " --transfer off");
    ASSERT_EQ(cls.exit_code, 0) << cls.err;
    EXPECT_NE(cls.out.find("threshold,"), std::string::npos);

    const RunResult ev = run_cli("eval" + cfg + " --cls-ckpt " + out + "/cls.ckpt");
    ASSERT_EQ(ev.exit_code, 0) << ev.err;
    EXPECT_NE(ev.out.find("metric,value"), std::string::npos);
    EXPECT_NE(ev.out.find("auc,"), std::string::npos);

    const std::string plots = out + "/plots";
    ASSERT_EQ(run_cli("plot --roc " + out + "/roc.csv --confusion " + out +
                      "/confusion.csv --out " + plots)
                  .exit_code,
              0);
    EXPECT_TRUE(same_file_bytes(out + "/roc.svg", plots + "/roc.svg"));
    EXPECT_TRUE(same_file_bytes(out + "/confusion.svg", plots + "/confusion.svg"));
}

TEST(Cli, TrainClsWithTransferNeedsSegCheckpoint) {
    const std::string out = ::testing::TempDir() + "xfuse_cli_needseg";
    const RunResult r =
        run_cli("train-cls --config " + tiny_config_file() + " --out " + out + " --transfer on");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("--seg-ckpt"), std::string::npos);
}

TEST(Cli, MalformedRocCsvNamesTheLine) {
    const std::string dir = ::testing::TempDir() + "xfuse_cli_badcsv";
    std::filesystem::create_directories(dir);
    write_text_file(dir + "/bad.csv", "threshold,fpr,tpr\n1,0,0\n0.5,0.1\n");
    const RunResult r = run_cli("plot --roc " + dir + "/bad.csv --out " + dir);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("line 3"), std::string::npos);
}

TEST(Cli, CorruptCheckpointIsARuntimeFailure) {
    const std::string dir = ::testing::TempDir() + "xfuse_cli_corrupt";
    std::filesystem::create_directories(dir);
    write_text_file(dir + "/bad.ckpt", "not a checkpoint at all");
    const RunResult r = run_cli("eval --config " + tiny_config_file() + " --out " + dir +
                                " --cls-ckpt " + dir + "/bad.ckpt");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_FALSE(r.err.empty());
}

} // namespace
} // namespace xfuse
