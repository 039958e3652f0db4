#include <cstdio>
#include <string>
#include <vector>

#include "xfuse/harness.hpp"

namespace {

using namespace xfuse;

void usage(std::FILE* to) {
    std::fputs(
        "usage: xfuse <subcommand> [flags]\n"
        "\n"
        "subcommands:\n"
        "  synth       write the synthetic dataset (sample bundles + manifest)\n"
        "  train-seg   train the lesion segmenter on the pixel-labeled split\n"
        "  gen-maps    run a segmentation checkpoint over every sample\n"
        "  train-cls   train the dual-stream classifier on images + maps\n"
        "  eval        score a classifier checkpoint on the test split\n"
        "  ablate      run the 2x2 fusion x transfer grid over paired seeds\n"
        "  plot        render SVG plots from roc/confusion CSV files\n"
        "\n"
        "flags:\n"
        "  --config FILE      key = value settings file\n"
        "  --seed N --epochs N --size N --samples N --batch N --seeds N\n"
        "  --fusion on|off --transfer on|off\n"
        "  --out DIR          artifact directory (default: out)\n"
        "  --seg-ckpt FILE    segmentation checkpoint (gen-maps, train-cls)\n"
        "  --cls-ckpt FILE    classifier checkpoint (eval)\n"
        "  --maps DIR         lesion-map directory (default: OUT/maps)\n"
        "  --roc FILE --confusion FILE   plot inputs\n",
        to);
}

struct Invocation {
    std::string subcommand;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string roc_path;
    std::string confusion_path;
};

// Maps a CLI flag to the config key it overrides.
const std::pair<const char*, const char*> kFlagKeys[] = {
    {"--seed", "seed"},         {"--epochs", "epochs"},   {"--size", "size"},
    {"--samples", "samples"},   {"--batch", "batch"},     {"--seeds", "seeds"},
    {"--fusion", "fusion"},     {"--transfer", "transfer"}, {"--out", "out"},
    {"--seg-ckpt", "seg_ckpt"}, {"--cls-ckpt", "cls_ckpt"}, {"--maps", "maps"},
};

Invocation parse_argv(int argc, char** argv) {
    Invocation inv;
    if (argc < 2) throw ConfigError("missing subcommand");
    inv.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string flag = argv[i];
        auto value = [&]() -> std::string {
            if (i + 1 >= argc) throw ConfigError("flag " + flag + " needs a value");
            return argv[++i];
        };
        if (flag == "--config") {
            inv.config_path = value();
            continue;
        }
        if (flag == "--roc") {
            inv.roc_path = value();
            continue;
        }
        if (flag == "--confusion") {
            inv.confusion_path = value();
            continue;
        }
        bool matched = false;
        for (const auto& [name, key] : kFlagKeys) {
            if (flag == name) {
                inv.overrides.emplace_back(key, value());
                matched = true;
                break;
            }
        }
        if (!matched) throw ConfigError("unknown flag " + flag);
    }
    return inv;
}

RocCurve roc_from_csv(const std::string& path) {
    const Csv table = parse_csv(read_text_file(path));
    if (table.header != std::vector<std::string>{"threshold", "fpr", "tpr"})
        throw ValidationError(path + ": expected header threshold,fpr,tpr");
    if (table.rows.empty()) throw ValidationError(path + ": curve has no points");
    RocCurve curve;
    for (size_t i = 0; i < table.rows.size(); ++i)
        curve.points.push_back({csv_number(table.rows[i][0], i), csv_number(table.rows[i][1], i),
                                csv_number(table.rows[i][2], i)});
    return curve;
}

ConfusionMatrix confusion_from_csv(const std::string& path) {
    const Csv table = parse_csv(read_text_file(path));
    if (table.header != std::vector<std::string>{"tp", "fp", "tn", "fn"})
        throw ValidationError(path + ": expected header tp,fp,tn,fn");
    if (table.rows.size() != 1) throw ValidationError(path + ": expected exactly one data row");
    ConfusionMatrix cm;
    cm.tp = static_cast<size_t>(csv_number(table.rows[0][0], 0));
    cm.fp = static_cast<size_t>(csv_number(table.rows[0][1], 0));
    cm.tn = static_cast<size_t>(csv_number(table.rows[0][2], 0));
    cm.fn = static_cast<size_t>(csv_number(table.rows[0][3], 0));
    return cm;
}

int dispatch(const Invocation& inv) {
    RunConfig cfg;
    if (!inv.config_path.empty()) cfg = load_run_config(inv.config_path);
    for (const auto& [key, value] : inv.overrides) apply_config_key(cfg, key, value);
    cfg.stage = inv.subcommand;
    cfg.validate();

    if (inv.subcommand == "synth") {
        const size_t n = export_dataset(cfg);
        std::printf("samples,%zu\n", n);
        return 0;
    }
    if (inv.subcommand == "train-seg") {
        const SegTrainResult r = train_seg(cfg);
        std::printf("best_epoch,%zu\nval_dice,%.17g\ncheckpoint,%s\n", r.best_epoch,
                    r.best_val_dice, seg_ckpt_path(cfg).c_str());
        return 0;
    }
    if (inv.subcommand == "gen-maps") {
        if (cfg.seg_ckpt.empty()) throw ConfigError("gen-maps needs --seg-ckpt FILE");
        const Checkpoint seg = load_checkpoint(cfg.seg_ckpt);
        const MapsResult r = gen_maps(cfg, seg);
        std::printf("maps,%zu\ndir,%s\n", r.count, r.dir.c_str());
        return 0;
    }
    if (inv.subcommand == "train-cls") {
        if (cfg.transfer && cfg.seg_ckpt.empty())
            throw ConfigError("train-cls with transfer on needs --seg-ckpt FILE");
        Checkpoint seg;
        if (cfg.transfer) seg = load_checkpoint(cfg.seg_ckpt);
        const Corpus corpus = build_corpus(cfg);
        std::vector<size_t> needed = corpus.splits.train;
        needed.insert(needed.end(), corpus.splits.val.begin(), corpus.splits.val.end());
        const MapStore maps = load_maps(cfg, corpus, needed);
        const ClsTrainResult r = train_cls(cfg, maps, cfg.transfer ? &seg : nullptr);
        std::printf("best_epoch,%zu\nval_auc,%.17g\nthreshold,%.17g\ncheckpoint,%s\n",
                    r.best_epoch, r.best_val_auc, r.threshold, cls_ckpt_path(cfg).c_str());
        return 0;
    }
    if (inv.subcommand == "eval") {
        if (cfg.cls_ckpt.empty()) throw ConfigError("eval needs --cls-ckpt FILE");
        const Checkpoint cls = load_checkpoint(cfg.cls_ckpt);
        const Corpus corpus = build_corpus(cfg);
        const MapStore maps = load_maps(cfg, corpus, corpus.splits.test);
        const EvalReport r = evaluate(cfg, cls, maps);
        std::fputs(read_text_file(cfg.out + "/report.csv").c_str(), stdout);
        return 0;
    }
    if (inv.subcommand == "ablate") {
        const AblateResult r = ablate(cfg);
        std::fputs(r.table_csv.c_str(), stdout);
        return 0;
    }
    if (inv.subcommand == "plot") {
        if (inv.roc_path.empty() && inv.confusion_path.empty())
            throw ConfigError("plot needs --roc FILE and/or --confusion FILE");
        if (!inv.roc_path.empty())
            write_text_file(cfg.out + "/roc.svg", roc_svg(roc_from_csv(inv.roc_path)));
        if (!inv.confusion_path.empty())
            write_text_file(cfg.out + "/confusion.svg",
                            confusion_svg(confusion_from_csv(inv.confusion_path)));
        return 0;
    }
    throw ConfigError("unknown subcommand '" + inv.subcommand + "'");
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(parse_argv(argc, argv));
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n\n", e.what());
        usage(stderr);
        return 1;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ManifestError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const xfuse::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
