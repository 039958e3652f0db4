#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "cls_model.hpp"
#include "rng.hpp"
#include "seg_model.hpp"
#include "synth.hpp"

namespace xfuse {

// Every knob one run reads, parsed from flat `key = value` text. Defaults
// are desk-scale; larger settings (size 640, 50 epochs) are legal inputs.
struct RunConfig {
    uint64_t seed = 1;
    std::string stage; // synth | train-seg | gen-maps | train-cls | eval | ablate | plot

    // data
    size_t samples = 800;
    size_t size = 64;
    double train_frac = 0.396;
    double val_frac = 0.123;
    double test_frac = 0.481;

    // model scale
    size_t patch = 4;
    size_t width = 24;
    size_t window = 4;
    std::vector<size_t> depths{2, 2};
    std::vector<size_t> heads{3, 6};
    std::vector<size_t> decoder_widths{32, 16, 8};
    size_t fusion_heads = 3;
    double dropout = 0.0;
    double head_dropout = 0.1;
    bool rel_bias = false;

    // optimizer
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    size_t batch = 16;
    size_t epochs = 30;
    size_t seg_epochs = 0; // 0: reuse `epochs` for the segmentation phase
    std::vector<size_t> milestones; // empty: 60% and 85% of epochs
    double lr_factor = 0.1;

    // experiment
    bool fusion = true;
    bool transfer = true;
    size_t seeds = 5;

    // paths
    std::string out = "out";
    std::string seg_ckpt;
    std::string cls_ckpt;
    std::string maps;

    void validate() const;
};

namespace detail {

inline uint64_t parse_u64_value(const std::string& v, const std::string& key) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || v[0] == '-')
        throw ConfigError("config: key '" + key + "' needs an unsigned integer, got '" + v + "'");
    return x;
}

inline double parse_double_value(const std::string& v, const std::string& key) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
    return x;
}

inline bool parse_bool_value(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' needs on/off, got '" + v + "'");
}

inline std::vector<size_t> parse_list_value(const std::string& v, const std::string& key) {
    std::vector<size_t> out;
    if (v.empty()) return out;
    size_t start = 0;
    while (true) {
        const size_t comma = v.find(',', start);
        const std::string item = v.substr(start, comma == std::string::npos ? comma : comma - start);
        out.push_back(parse_u64_value(item, key));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::string fmt_u64(uint64_t v) { return std::to_string(v); }

inline std::string fmt_double_17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<size_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

} // namespace detail

inline void RunConfig::validate() const {
    static const std::vector<std::string> kStages{
        "", "synth", "train-seg", "gen-maps", "train-cls", "eval", "ablate", "plot"};
    bool stage_ok = false;
    for (const std::string& s : kStages) stage_ok |= (s == stage);
    if (!stage_ok) throw ConfigError("config: unknown stage '" + stage + "'");
    if (samples == 0) throw ConfigError("config: samples must be positive");
    if (train_frac <= 0.0 || val_frac < 0.0 || test_frac < 0.0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("config: split fractions must be non-negative and sum to 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
    if (batch == 0) throw ConfigError("config: batch must be at least 1");
    if (lr_factor <= 0.0 || lr_factor > 1.0) throw ConfigError("config: lr_factor must be in (0,1]");
    if (seeds == 0) throw ConfigError("config: seeds must be at least 1");
    const size_t longest_run = std::max(epochs, seg_epochs);
    for (size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1 || milestones[i] > longest_run)
            throw ConfigError("config: milestone " + std::to_string(milestones[i]) +
                              " outside 1.." + std::to_string(longest_run));
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw ConfigError("config: milestones must be strictly increasing");
    }
    if (dropout < 0.0 || dropout >= 1.0 || head_dropout < 0.0 || head_dropout >= 1.0)
        throw ConfigError("config: dropout must be in [0,1)");
    if (out.empty()) throw ConfigError("config: out directory must be set");
}

// Model/data views assembled from the flat run settings.
inline EncoderConfig encoder_config(const RunConfig& cfg) {
    EncoderConfig e;
    e.size = cfg.size;
    e.patch = cfg.patch;
    e.width = cfg.width;
    e.depths = cfg.depths;
    e.heads = cfg.heads;
    e.window = cfg.window;
    e.rel_bias = cfg.rel_bias;
    return e;
}

inline SegConfig seg_config(const RunConfig& cfg) {
    SegConfig s;
    s.encoder = encoder_config(cfg);
    s.decoder_widths = cfg.decoder_widths;
    s.dropout = cfg.dropout;
    return s;
}

inline ClsConfig cls_config(const RunConfig& cfg) {
    ClsConfig c;
    c.encoder = encoder_config(cfg);
    c.fusion = cfg.fusion;
    c.fusion_heads = cfg.fusion_heads;
    c.dropout = cfg.dropout;
    c.head_dropout = cfg.head_dropout;
    return c;
}

inline SynthConfig synth_config(const RunConfig& cfg) {
    SynthConfig s;
    s.size = cfg.size;
    s.seed = cfg.seed;
    s.train_frac = cfg.train_frac;
    s.val_frac = cfg.val_frac;
    s.test_frac = cfg.test_frac;
    return s;
}

inline std::vector<size_t> run_milestones(const RunConfig& cfg, size_t epochs) {
    return cfg.milestones.empty() ? default_milestones(epochs) : cfg.milestones;
}

inline size_t seg_epoch_count(const RunConfig& cfg) {
    return cfg.seg_epochs == 0 ? cfg.epochs : cfg.seg_epochs;
}

// Canonical text form: every key, one per line, fixed order. Hashing this
// string identifies the configuration.
inline std::string serialize_run_config(const RunConfig& c) {
    using namespace detail;
    std::string s;
    auto kv = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    kv("batch", fmt_u64(c.batch));
    kv("cls_ckpt", c.cls_ckpt);
    kv("decoder_widths", fmt_list(c.decoder_widths));
    kv("depths", fmt_list(c.depths));
    kv("dropout", fmt_double_17(c.dropout));
    kv("epochs", fmt_u64(c.epochs));
    kv("fusion", c.fusion ? "on" : "off");
    kv("fusion_heads", fmt_u64(c.fusion_heads));
    kv("head_dropout", fmt_double_17(c.head_dropout));
    kv("heads", fmt_list(c.heads));
    kv("lr", fmt_double_17(c.lr));
    kv("lr_factor", fmt_double_17(c.lr_factor));
    kv("maps", c.maps);
    kv("milestones", fmt_list(c.milestones));
    kv("momentum", fmt_double_17(c.momentum));
    kv("out", c.out);
    kv("patch", fmt_u64(c.patch));
    kv("rel_bias", c.rel_bias ? "on" : "off");
    kv("samples", fmt_u64(c.samples));
    kv("seed", fmt_u64(c.seed));
    kv("seeds", fmt_u64(c.seeds));
    kv("seg_ckpt", c.seg_ckpt);
    kv("seg_epochs", fmt_u64(c.seg_epochs));
    kv("size", fmt_u64(c.size));
    kv("stage", c.stage);
    kv("test_frac", fmt_double_17(c.test_frac));
    kv("train_frac", fmt_double_17(c.train_frac));
    kv("transfer", c.transfer ? "on" : "off");
    kv("val_frac", fmt_double_17(c.val_frac));
    kv("weight_decay", fmt_double_17(c.weight_decay));
    kv("width", fmt_u64(c.width));
    kv("window", fmt_u64(c.window));
    return s;
}

// Hash over the result-affecting fields only. Artifact locations (out, maps,
// checkpoint paths) and the subcommand name do not change what a run
// computes, so checkpoints stay byte-identical across output directories.
inline uint64_t config_hash(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.stage.clear();
    c.out.clear();
    c.seg_ckpt.clear();
    c.cls_ckpt.clear();
    c.maps.clear();
    const std::string s = serialize_run_config(c);
    return detail::fnv1a64(s.data(), s.size());
}

// Applies one `key = value` assignment. Unknown keys are errors.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "seed") c.seed = parse_u64_value(value, key);
    else if (key == "stage") c.stage = value;
    else if (key == "samples") c.samples = parse_u64_value(value, key);
    else if (key == "size") c.size = parse_u64_value(value, key);
    else if (key == "train_frac") c.train_frac = parse_double_value(value, key);
    else if (key == "val_frac") c.val_frac = parse_double_value(value, key);
    else if (key == "test_frac") c.test_frac = parse_double_value(value, key);
    else if (key == "patch") c.patch = parse_u64_value(value, key);
    else if (key == "width") c.width = parse_u64_value(value, key);
    else if (key == "window") c.window = parse_u64_value(value, key);
    else if (key == "depths") c.depths = parse_list_value(value, key);
    else if (key == "heads") c.heads = parse_list_value(value, key);
    else if (key == "decoder_widths") c.decoder_widths = parse_list_value(value, key);
    else if (key == "fusion_heads") c.fusion_heads = parse_u64_value(value, key);
    else if (key == "dropout") c.dropout = parse_double_value(value, key);
    else if (key == "head_dropout") c.head_dropout = parse_double_value(value, key);
    else if (key == "rel_bias") c.rel_bias = parse_bool_value(value, key);
    else if (key == "lr") c.lr = parse_double_value(value, key);
    else if (key == "momentum") c.momentum = parse_double_value(value, key);
    else if (key == "weight_decay") c.weight_decay = parse_double_value(value, key);
    else if (key == "batch") c.batch = parse_u64_value(value, key);
    else if (key == "epochs") c.epochs = parse_u64_value(value, key);
    else if (key == "seg_epochs") c.seg_epochs = parse_u64_value(value, key);
    else if (key == "milestones") c.milestones = parse_list_value(value, key);
    else if (key == "lr_factor") c.lr_factor = parse_double_value(value, key);
    else if (key == "fusion") c.fusion = parse_bool_value(value, key);
    else if (key == "transfer") c.transfer = parse_bool_value(value, key);
    else if (key == "seeds") c.seeds = parse_u64_value(value, key);
    else if (key == "out") c.out = value;
    else if (key == "seg_ckpt") c.seg_ckpt = value;
    else if (key == "cls_ckpt") c.cls_ckpt = value;
    else if (key == "maps") c.maps = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped,
// repeated keys are rejected.
inline RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, int> seen;
    size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        const size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? eol : eol - pos);
        ++line_no;
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " has no '='");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: line " + std::to_string(line_no) + " has an empty key");
        if (++seen[key] > 1)
            throw ConfigError("config: line " + std::to_string(line_no) + " repeats key '" + key +
                              "'");
        apply_config_key(cfg, key, value);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw ConfigError("config: cannot open " + path);
    std::string text;
    char buf[1 << 14];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
    std::fclose(f);
    return parse_run_config(text);
}

} // namespace xfuse
