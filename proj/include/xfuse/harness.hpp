#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "cls_model.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "metrics.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "seg_model.hpp"
#include "svg.hpp"
#include "synth.hpp"

namespace xfuse {

// The working set of one run: every sample is a pure function of the run
// seed, so corpora are rebuilt in memory instead of read back from disk.
struct Corpus {
    std::vector<Sample> samples;
    Splits splits;
};

inline Corpus build_corpus(const RunConfig& cfg) {
    const SynthConfig scfg = synth_config(cfg);
    scfg.validate();
    Corpus c;
    c.samples.resize(cfg.samples);
    parallel_for(cfg.samples, [&](size_t i) { c.samples[i] = make_sample(scfg, i); });
    c.splits = make_splits(scfg, cfg.samples);
    return c;
}

// Metadata rides in f64 slots, so identifying hashes keep only the low 32
// bits, which a double represents exactly.
inline double config_hash_meta(const RunConfig& cfg) {
    return static_cast<double>(config_hash(cfg) & 0xffffffffull);
}

inline std::string seg_ckpt_path(const RunConfig& cfg) {
    return cfg.seg_ckpt.empty() ? cfg.out + "/seg.ckpt" : cfg.seg_ckpt;
}

inline std::string cls_ckpt_path(const RunConfig& cfg) {
    return cfg.cls_ckpt.empty() ? cfg.out + "/cls.ckpt" : cfg.cls_ckpt;
}

inline std::string maps_dir(const RunConfig& cfg) {
    return cfg.maps.empty() ? cfg.out + "/maps" : cfg.maps;
}

namespace detail {

inline ModelParams clone_params(const ModelParams& src) {
    ModelParams out;
    for (const auto& [name, t] : src) out.emplace(name, t.clone());
    return out;
}

inline void shuffle_indices(std::vector<size_t>& v, Rng& rng) {
    for (size_t i = v.size(); i-- > 1;) {
        const size_t j = rng.below(i + 1);
        std::swap(v[i], v[j]);
    }
}

// Overwrites model parameter values with checkpoint tensors. The checkpoint
// must carry exactly the model's parameter set.
inline void load_params_into(ModelParams& dst, const Checkpoint& ckpt) {
    std::string missing, extra;
    for (const auto& [name, p] : dst) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            missing += (missing.empty() ? "" : ", ") + name;
        } else if (it->second.shape() != p.shape()) {
            throw ContractError("checkpoint tensor '" + name + "' does not match the model shape");
        }
    }
    for (const auto& [name, t] : ckpt.tensors)
        if (!dst.count(name)) extra += (extra.empty() ? "" : ", ") + name;
    if (!missing.empty())
        throw ContractError("checkpoint is missing model parameters: " + missing);
    if (!extra.empty())
        throw ContractError("checkpoint carries parameters the model does not have: " + extra);
    for (auto& [name, p] : dst) {
        const Tensor& src = ckpt.tensors.at(name);
        std::memcpy(p.data(), src.data(), p.numel() * sizeof(double));
    }
}

inline std::string list_ids(const std::vector<std::string>& ids) {
    std::string s;
    const size_t shown = std::min<size_t>(ids.size(), 10);
    for (size_t i = 0; i < shown; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > shown) s += " (and " + std::to_string(ids.size() - shown) + " more)";
    return s;
}

inline double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

} // namespace detail

// ------------------------------------------------------------ segmentation

struct SegTrainResult {
    Checkpoint ckpt;
    std::string history_csv;
    size_t best_epoch = 0;
    double best_val_dice = 0.0;
};

// Mean Dice of thresholded lesion maps against ground-truth masks.
inline double mean_map_dice(const SegModel& model, const Corpus& corpus,
                            const std::vector<size_t>& idx, size_t S) {
    if (idx.empty()) return 0.0;
    std::vector<double> per(idx.size());
    parallel_for(idx.size(), [&](size_t k) {
        const Sample& s = corpus.samples[idx[k]];
        const Tensor map = generate_lesion_map(model, preprocess(s.image, S));
        per[k] = dice(binarize(map, 0.5), s.mask);
    });
    return detail::mean_of(per);
}

// Trains the segmenter on the pixel-labeled train split and keeps the latest
// epoch with the best validation Dice, so ties favor the longer-trained
// weights. Writes the checkpoint and a per-epoch CSV log under cfg.out.
inline SegTrainResult train_seg(const RunConfig& cfg) {
    cfg.validate();
    SegConfig scfg = seg_config(cfg);
    scfg.validate();
    const Corpus corpus = build_corpus(cfg);
    if (corpus.splits.train.empty() || corpus.splits.val.empty())
        throw ConfigError("train_seg: train and validation splits must be non-empty");

    Rng root(cfg.seed);
    Rng init_rng = root.derive("seg-init");
    SegModel model = make_seg_model(scfg, init_rng);
    SgdState state;
    state.momentum = cfg.momentum;
    state.weight_decay = cfg.weight_decay;
    state.attach(model.params);
    Rng train_rng = root.derive("seg-train");
    Rng aug_rng = root.derive("seg-aug");
    Rng shuffle_rng = root.derive("seg-shuffle");

    const size_t epochs = seg_epoch_count(cfg);
    const std::vector<size_t> milestones = run_milestones(cfg, epochs);

    Csv history;
    history.header = {"epoch", "lr", "train_loss", "val_dice"};

    SegTrainResult r;
    ModelParams best = detail::clone_params(model.params);
    double best_dice = -1.0;

    std::vector<size_t> order = corpus.splits.train;
    for (size_t epoch = 1; epoch <= epochs; ++epoch) {
        state.lr = lr_at_epoch(cfg.lr, milestones, cfg.lr_factor, epoch);
        detail::shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (size_t b = 0; b < order.size(); b += cfg.batch) {
            std::vector<Sample> batch;
            for (size_t k = b; k < std::min(order.size(), b + cfg.batch); ++k) {
                Sample aug = augment(aug_rng, corpus.samples[order[k]]);
                aug.image = preprocess(aug.image, cfg.size);
                batch.push_back(std::move(aug));
            }
            const double loss = seg_train_step(model, state, batch, train_rng);
            ++steps;
            if (!std::isfinite(loss))
                throw DivergenceError("train_seg: non-finite loss at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(steps));
            loss_sum += loss;
        }
        const double val_dice = mean_map_dice(model, corpus, corpus.splits.val, cfg.size);
        history.rows.push_back({csv_field(epoch), csv_field(state.lr),
                                csv_field(loss_sum / static_cast<double>(steps)),
                                csv_field(val_dice)});
        if (val_dice >= best_dice) {
            best_dice = val_dice;
            r.best_epoch = epoch;
            best = detail::clone_params(model.params);
        }
    }

    r.best_val_dice = best_dice < 0.0 ? 0.0 : best_dice;
    r.ckpt.kind = ModelKind::Segmentation;
    r.ckpt.tensors = std::move(best);
    r.ckpt.metadata["epoch"] = static_cast<double>(r.best_epoch);
    r.ckpt.metadata["seed"] = static_cast<double>(cfg.seed & 0xffffffffull);
    r.ckpt.metadata["config"] = config_hash_meta(cfg);
    r.ckpt.metadata["val_dice"] = r.best_val_dice;
    r.history_csv = csv_text(history);
    save_checkpoint(r.ckpt, seg_ckpt_path(cfg));
    write_text_file(cfg.out + "/seg_history.csv", r.history_csv);
    return r;
}

// -------------------------------------------------------------- lesion maps

struct MapsResult {
    std::string dir;
    std::string manifest_csv;
    size_t count = 0;
};

// Runs the segmenter over every sample and stores one map file per id plus a
// manifest. Pure function of (checkpoint, config), so reruns overwrite with
// identical bytes.
inline MapsResult gen_maps(const RunConfig& cfg, const Checkpoint& seg_ckpt) {
    cfg.validate();
    if (seg_ckpt.kind != ModelKind::Segmentation)
        throw CheckpointError(CheckpointError::Kind::ModelKind,
                              "gen_maps: checkpoint does not hold a segmentation model");
    SegConfig scfg = seg_config(cfg);
    scfg.validate();
    Rng init_rng = Rng(cfg.seed).derive("seg-init");
    SegModel model = make_seg_model(scfg, init_rng);
    detail::load_params_into(model.params, seg_ckpt);

    const Corpus corpus = build_corpus(cfg);
    const std::string dir = maps_dir(cfg);
    std::filesystem::create_directories(dir);

    std::vector<std::string> split_of(corpus.samples.size(), "train");
    for (size_t i : corpus.splits.val) split_of[i] = "val";
    for (size_t i : corpus.splits.test) split_of[i] = "test";

    parallel_for(corpus.samples.size(), [&](size_t i) {
        const Sample& s = corpus.samples[i];
        Checkpoint file;
        file.kind = ModelKind::TensorBundle;
        file.tensors.emplace("map", generate_lesion_map(model, preprocess(s.image, cfg.size)));
        file.metadata["label"] = static_cast<double>(s.label);
        save_checkpoint(file, dir + "/" + s.id + ".xfus");
    });

    Csv manifest;
    manifest.header = {"id", "split", "label"};
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        manifest.rows.push_back(
            {corpus.samples[i].id, split_of[i], std::to_string(corpus.samples[i].label)});
    MapsResult r;
    r.dir = dir;
    r.count = corpus.samples.size();
    r.manifest_csv = csv_text(manifest);
    write_text_file(dir + "/manifest.csv", r.manifest_csv);
    return r;
}

// In-memory lesion-map table keyed by sample id.
struct MapStore {
    std::map<std::string, Tensor> by_id;

    const Tensor& at(const std::string& id) const {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ManifestError("missing lesion map for id " + id);
        return it->second;
    }
};

// Loads the maps for the given sample indices; any absent or malformed file
// makes the whole load fail with the offending ids listed.
inline MapStore load_maps(const RunConfig& cfg, const Corpus& corpus,
                          const std::vector<size_t>& indices) {
    const std::string dir = maps_dir(cfg);
    MapStore store;
    std::vector<std::string> missing;
    for (size_t i : indices) {
        const Sample& s = corpus.samples[i];
        if (store.by_id.count(s.id)) continue;
        const std::string path = dir + "/" + s.id + ".xfus";
        if (!std::filesystem::exists(path)) {
            missing.push_back(s.id);
            continue;
        }
        Checkpoint file = load_checkpoint(path);
        auto it = file.tensors.find("map");
        if (file.kind != ModelKind::TensorBundle || it == file.tensors.end())
            throw ManifestError("map file for id " + s.id + " is not a single-map bundle");
        const Shape want{1, cfg.size, cfg.size};
        if (it->second.shape() != want)
            throw ManifestError("map for id " + s.id + " has the wrong spatial size");
        store.by_id.emplace(s.id, it->second);
    }
    if (!missing.empty())
        throw ManifestError("missing lesion maps for ids: " + detail::list_ids(missing));
    return store;
}

inline std::vector<size_t> all_indices(const Corpus& corpus) {
    std::vector<size_t> idx(corpus.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

// ---------------------------------------------------------- classification

struct ClsTrainResult {
    Checkpoint ckpt;
    std::string history_csv;
    size_t best_epoch = 0;
    double best_val_auc = 0.0;
    double threshold = 0.5;
    TransferManifest manifest;
};

// Classifier probabilities for the given sample indices.
inline std::vector<double> cls_scores(const ClsModel& model, const Corpus& corpus,
                                      const MapStore& maps, const std::vector<size_t>& idx,
                                      size_t S) {
    std::vector<double> scores(idx.size());
    parallel_for(idx.size(), [&](size_t k) {
        const Sample& s = corpus.samples[idx[k]];
        const Tensor logit = cls_forward(nullptr, model, preprocess(s.image, S), maps.at(s.id));
        scores[k] = 1.0 / (1.0 + std::exp(-logit.item()));
    });
    return scores;
}

inline std::vector<int> labels_at(const Corpus& corpus, const std::vector<size_t>& idx) {
    std::vector<int> labels(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) labels[k] = corpus.samples[idx[k]].label;
    return labels;
}

// Trains the classifier variant selected by the fusion/transfer flags, keeps
// the latest epoch with the best validation AUC, and stores the
// validation-ROC operating threshold in the checkpoint metadata.
inline ClsTrainResult train_cls(const RunConfig& cfg, const MapStore& maps,
                                const Checkpoint* seg_ckpt) {
    cfg.validate();
    ClsConfig ccfg = cls_config(cfg);
    ccfg.validate();
    const Corpus corpus = build_corpus(cfg);
    if (corpus.splits.train.empty() || corpus.splits.val.empty())
        throw ConfigError("train_cls: train and validation splits must be non-empty");
    {
        std::vector<std::string> missing;
        for (const std::vector<size_t>* split : {&corpus.splits.train, &corpus.splits.val})
            for (size_t i : *split)
                if (!maps.by_id.count(corpus.samples[i].id)) missing.push_back(corpus.samples[i].id);
        if (!missing.empty())
            throw ManifestError("missing lesion maps for ids: " + detail::list_ids(missing));
    }

    Rng root(cfg.seed);
    SegModel seg;
    const SegModel* seg_ptr = nullptr;
    if (cfg.transfer) {
        if (!seg_ckpt)
            throw ContractError("train_cls: transfer is on but no segmentation checkpoint given");
        if (seg_ckpt->kind != ModelKind::Segmentation)
            throw CheckpointError(CheckpointError::Kind::ModelKind,
                                  "train_cls: transfer checkpoint is not a segmentation model");
        Rng seg_rng = root.derive("seg-init");
        seg = make_seg_model(seg_config(cfg), seg_rng);
        detail::load_params_into(seg.params, *seg_ckpt);
        seg_ptr = &seg;
    }

    ClsTrainResult r;
    Rng init_rng = root.derive("cls-init");
    ClsModel model = ablation_variant(ccfg, cfg.fusion, cfg.transfer, seg_ptr, init_rng, &r.manifest);
    SgdState state;
    state.momentum = cfg.momentum;
    state.weight_decay = cfg.weight_decay;
    state.attach(model.params);
    Rng train_rng = root.derive("cls-train");
    Rng aug_rng = root.derive("cls-aug");
    Rng shuffle_rng = root.derive("cls-shuffle");

    const std::vector<size_t> milestones = run_milestones(cfg, cfg.epochs);

    Csv history;
    history.header = {"epoch", "lr", "train_loss", "val_auc"};

    ModelParams best = detail::clone_params(model.params);
    double best_auc = -1.0;

    std::vector<size_t> order = corpus.splits.train;
    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        state.lr = lr_at_epoch(cfg.lr, milestones, cfg.lr_factor, epoch);
        detail::shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (size_t b = 0; b < order.size(); b += cfg.batch) {
            std::vector<FusedExample> batch;
            for (size_t k = b; k < std::min(order.size(), b + cfg.batch); ++k) {
                const Sample& raw = corpus.samples[order[k]];
                Sample joint;
                joint.image = raw.image;
                joint.mask = maps.at(raw.id);
                joint.label = raw.label;
                Sample aug = augment(aug_rng, joint);
                batch.push_back({preprocess(aug.image, cfg.size), aug.mask, raw.label});
            }
            const double loss = cls_train_step(model, state, batch, train_rng);
            ++steps;
            if (!std::isfinite(loss))
                throw DivergenceError("train_cls: non-finite loss at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(steps));
            loss_sum += loss;
        }
        const std::vector<double> val_scores =
            cls_scores(model, corpus, maps, corpus.splits.val, cfg.size);
        const double val_auc = auc(val_scores, labels_at(corpus, corpus.splits.val));
        history.rows.push_back({csv_field(epoch), csv_field(state.lr),
                                csv_field(loss_sum / static_cast<double>(steps)),
                                csv_field(val_auc)});
        if (val_auc >= best_auc) {
            best_auc = val_auc;
            r.best_epoch = epoch;
            best = detail::clone_params(model.params);
        }
    }

    for (auto& [name, p] : model.params)
        std::memcpy(p.data(), best.at(name).data(), p.numel() * sizeof(double));
    const std::vector<double> val_scores =
        cls_scores(model, corpus, maps, corpus.splits.val, cfg.size);
    const RocCurve val_roc = roc_curve(val_scores, labels_at(corpus, corpus.splits.val));
    r.threshold = optimal_threshold(val_roc);
    r.best_val_auc = auc(val_roc);

    r.ckpt.kind = ModelKind::Classification;
    r.ckpt.tensors = std::move(best);
    r.ckpt.metadata["epoch"] = static_cast<double>(r.best_epoch);
    r.ckpt.metadata["seed"] = static_cast<double>(cfg.seed & 0xffffffffull);
    r.ckpt.metadata["config"] = config_hash_meta(cfg);
    r.ckpt.metadata["val_auc"] = r.best_val_auc;
    r.ckpt.metadata["threshold"] = r.threshold;
    r.ckpt.metadata["fusion"] = cfg.fusion ? 1.0 : 0.0;
    r.ckpt.metadata["transfer"] = cfg.transfer ? 1.0 : 0.0;
    r.history_csv = csv_text(history);
    save_checkpoint(r.ckpt, cls_ckpt_path(cfg));
    write_text_file(cfg.out + "/cls_history.csv", r.history_csv);
    return r;
}

// ------------------------------------------------------------------- eval

struct EvalReport {
    double dice = 0.0;
    double iou = 0.0;
    double acc = 0.0;
    double auc = 0.0;
    std::optional<double> tpr, tnr;
    double threshold = 0.5;
    bool threshold_fallback = false;
    size_t samples = 0;
    double config = 0.0;
};

// Scores the test split at the stored operating threshold and writes report,
// ROC and confusion CSVs plus SVG renderings under cfg.out.
inline EvalReport evaluate(const RunConfig& cfg, const Checkpoint& cls_ckpt,
                           const MapStore& maps) {
    cfg.validate();
    if (cls_ckpt.kind != ModelKind::Classification)
        throw CheckpointError(CheckpointError::Kind::ModelKind,
                              "evaluate: checkpoint does not hold a classifier");
    ClsConfig ccfg = cls_config(cfg);
    ccfg.validate();
    const Corpus corpus = build_corpus(cfg);
    if (corpus.splits.test.empty()) throw ConfigError("evaluate: test split is empty");
    {
        std::vector<std::string> missing;
        for (size_t i : corpus.splits.test)
            if (!maps.by_id.count(corpus.samples[i].id)) missing.push_back(corpus.samples[i].id);
        if (!missing.empty())
            throw ManifestError("missing lesion maps for ids: " + detail::list_ids(missing));
    }

    Rng init_rng = Rng(cfg.seed).derive("cls-init");
    ClsModel model = make_cls_model(ccfg, init_rng);
    detail::load_params_into(model.params, cls_ckpt);

    const std::vector<size_t>& test = corpus.splits.test;
    const std::vector<double> scores = cls_scores(model, corpus, maps, test, cfg.size);
    const std::vector<int> labels = labels_at(corpus, test);

    EvalReport r;
    r.samples = test.size();
    r.config = config_hash_meta(cfg);
    auto th = cls_ckpt.metadata.find("threshold");
    if (th == cls_ckpt.metadata.end()) {
        r.threshold = 0.5;
        r.threshold_fallback = true;
    } else {
        r.threshold = th->second;
    }

    const RocCurve curve = roc_curve(scores, labels);
    r.auc = auc(curve);
    const ConfusionMatrix cm = confusion(scores, labels, r.threshold);
    const Rates rates = tpr_tnr_acc(cm);
    r.acc = rates.acc;
    r.tpr = rates.tpr;
    r.tnr = rates.tnr;

    std::vector<double> dice_per(test.size()), iou_per(test.size());
    parallel_for(test.size(), [&](size_t k) {
        const Sample& s = corpus.samples[test[k]];
        const Tensor pred = binarize(maps.at(s.id), 0.5);
        dice_per[k] = dice(pred, s.mask);
        iou_per[k] = iou(pred, s.mask);
    });
    r.dice = detail::mean_of(dice_per);
    r.iou = detail::mean_of(iou_per);

    Csv roc_table;
    roc_table.header = {"threshold", "fpr", "tpr"};
    for (const RocPoint& p : curve.points)
        roc_table.rows.push_back({csv_field(p.threshold), csv_field(p.fpr), csv_field(p.tpr)});

    Csv cm_table;
    cm_table.header = {"tp", "fp", "tn", "fn"};
    cm_table.rows.push_back(
        {csv_field(cm.tp), csv_field(cm.fp), csv_field(cm.tn), csv_field(cm.fn)});

    const double nan = std::numeric_limits<double>::quiet_NaN();
    Csv report;
    report.header = {"metric", "value"};
    report.rows = {
        {"dice", csv_field(r.dice)},
        {"iou", csv_field(r.iou)},
        {"acc", csv_field(r.acc)},
        {"auc", csv_field(r.auc)},
        {"tpr", csv_field(r.tpr.value_or(nan))},
        {"tnr", csv_field(r.tnr.value_or(nan))},
        {"threshold", csv_field(r.threshold)},
        {"threshold_fallback", csv_field(static_cast<size_t>(r.threshold_fallback ? 1 : 0))},
        {"samples", csv_field(r.samples)},
        {"config", csv_field(r.config)},
    };

    write_text_file(cfg.out + "/roc.csv", csv_text(roc_table));
    write_text_file(cfg.out + "/confusion.csv", csv_text(cm_table));
    write_text_file(cfg.out + "/report.csv", csv_text(report));
    write_text_file(cfg.out + "/roc.svg", roc_svg(curve));
    write_text_file(cfg.out + "/confusion.svg", confusion_svg(cm));
    return r;
}

// ----------------------------------------------------------------- ablation

struct AblateCell {
    bool fusion = false;
    bool transfer = false;
    std::vector<double> acc, auc;
    double mean_acc = 0.0;
    double mean_auc = 0.0;
};

struct AblateResult {
    std::vector<AblateCell> cells;
    std::string table_csv;
    std::string seeds_csv;
};

// Runs the 2x2 {fusion} x {transfer} grid over cfg.seeds paired seeds. Each
// seed trains one segmenter, generates one shared map set, then trains and
// evaluates all four classifier variants on identical data.
inline AblateResult ablate(const RunConfig& cfg) {
    cfg.validate();
    const std::pair<bool, bool> grid[4] = {
        {false, false}, {true, false}, {false, true}, {true, true}};

    AblateResult res;
    res.cells.resize(4);
    for (int c = 0; c < 4; ++c) {
        res.cells[c].fusion = grid[c].first;
        res.cells[c].transfer = grid[c].second;
    }

    Csv seeds_table;
    seeds_table.header = {"seed", "fusion", "transfer", "acc", "auc"};

    for (size_t s = 0; s < cfg.seeds; ++s) {
        RunConfig seed_cfg = cfg;
        seed_cfg.seed = cfg.seed + s;
        seed_cfg.seeds = 1;
        seed_cfg.out = cfg.out + "/seed" + std::to_string(seed_cfg.seed);
        seed_cfg.maps = seed_cfg.out + "/maps";
        seed_cfg.seg_ckpt.clear();
        seed_cfg.cls_ckpt.clear();

        RunConfig seg_run = seed_cfg;
        seg_run.stage = "train-seg";
        const SegTrainResult seg = train_seg(seg_run);

        RunConfig maps_run = seed_cfg;
        maps_run.stage = "gen-maps";
        gen_maps(maps_run, seg.ckpt);

        const Corpus corpus = build_corpus(seed_cfg);
        const MapStore maps = load_maps(seed_cfg, corpus, all_indices(corpus));

        for (int c = 0; c < 4; ++c) {
            RunConfig cell = seed_cfg;
            cell.fusion = grid[c].first;
            cell.transfer = grid[c].second;
            cell.out = seed_cfg.out + std::string("/cell-f") + (cell.fusion ? "1" : "0") + "t" +
                       (cell.transfer ? "1" : "0");
            cell.stage = "train-cls";
            const ClsTrainResult cls =
                train_cls(cell, maps, cell.transfer ? &seg.ckpt : nullptr);
            cell.stage = "eval";
            const EvalReport rep = evaluate(cell, cls.ckpt, maps);
            res.cells[c].acc.push_back(rep.acc);
            res.cells[c].auc.push_back(rep.auc);
            seeds_table.rows.push_back({csv_field(static_cast<size_t>(seed_cfg.seed)),
                                        cell.fusion ? "on" : "off", cell.transfer ? "on" : "off",
                                        csv_field(rep.acc), csv_field(rep.auc)});
        }
    }

    Csv table;
    table.header = {"fusion", "transfer", "acc", "auc"};
    for (AblateCell& cell : res.cells) {
        cell.mean_acc = detail::mean_of(cell.acc);
        cell.mean_auc = detail::mean_of(cell.auc);
        table.rows.push_back({cell.fusion ? "on" : "off", cell.transfer ? "on" : "off",
                              csv_field(cell.mean_acc), csv_field(cell.mean_auc)});
    }
    res.table_csv = csv_text(table);
    res.seeds_csv = csv_text(seeds_table);
    write_text_file(cfg.out + "/ablation.csv", res.table_csv);
    write_text_file(cfg.out + "/ablation_seeds.csv", res.seeds_csv);
    return res;
}

// --------------------------------------------------------- dataset export

// Writes every sample as a tensor bundle plus an `id,split,label` manifest.
inline size_t export_dataset(const RunConfig& cfg) {
    cfg.validate();
    const Corpus corpus = build_corpus(cfg);
    const std::string dir = cfg.out + "/data";
    std::filesystem::create_directories(dir);

    std::vector<std::string> split_of(corpus.samples.size(), "train");
    for (size_t i : corpus.splits.val) split_of[i] = "val";
    for (size_t i : corpus.splits.test) split_of[i] = "test";

    parallel_for(corpus.samples.size(), [&](size_t i) {
        const Sample& s = corpus.samples[i];
        Checkpoint file;
        file.kind = ModelKind::TensorBundle;
        file.tensors.emplace("image", s.image);
        file.tensors.emplace("mask", s.mask);
        file.metadata["label"] = static_cast<double>(s.label);
        save_checkpoint(file, dir + "/" + s.id + ".xfus");
    });

    std::string manifest;
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        manifest += corpus.samples[i].id + "," + split_of[i] + "," +
                    std::to_string(corpus.samples[i].label) + "\n";
    write_text_file(dir + "/manifest.txt", manifest);
    return corpus.samples.size();
}

} // namespace xfuse
