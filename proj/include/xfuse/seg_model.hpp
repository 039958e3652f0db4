#pragma once

#include <string>
#include <vector>

#include "swin_encoder.hpp"
#include "synth.hpp"

namespace xfuse {

// U-shaped segmenter: windowed-attention encoder, then an upsampling
// convolutional decoder back to full resolution with skip connections at the
// grids the encoder produced, ending in a 1x1 conv to one logit per pixel.
struct SegConfig {
    EncoderConfig encoder;
    std::vector<size_t> decoder_widths{32, 16, 8};
    double dropout = 0.0;

    // Doublings needed from the bottleneck grid back to the input size.
    size_t levels() const {
        size_t l = encoder.stages() - 1, p = encoder.patch;
        while (p > 1) {
            p /= 2;
            ++l;
        }
        return l;
    }

    // Index of the encoder stage whose grid matches decoder level u, or
    // stages() when the level is below the patch stride and has no skip.
    size_t skip_stage(size_t u) const {
        return u + 2 <= encoder.stages() ? encoder.stages() - 2 - u : encoder.stages();
    }

    void validate() const {
        encoder.validate();
        if (decoder_widths.size() != levels())
            throw ConfigError("segmenter: " + std::to_string(decoder_widths.size()) +
                              " decoder widths for " + std::to_string(levels()) + " levels");
        for (size_t w : decoder_widths)
            if (w == 0) throw ConfigError("segmenter: zero decoder width");
        if (dropout < 0.0 || dropout >= 1.0)
            throw ConfigError("segmenter: dropout must be in [0,1)");
    }
};

struct SegModel {
    SegConfig cfg;
    ModelParams params;
};

inline SegModel make_seg_model(const SegConfig& cfg, Rng& rng) {
    cfg.validate();
    SegModel m;
    m.cfg = cfg;
    init_encoder(m.params, "enc.", cfg.encoder, 3, rng);
    size_t in_ch = cfg.encoder.out_width();
    for (size_t u = 0; u < cfg.levels(); ++u) {
        const size_t s = cfg.skip_stage(u);
        const size_t cat = in_ch + (s < cfg.encoder.stages() ? cfg.encoder.stage_width(s) : 0);
        const size_t out_ch = cfg.decoder_widths[u];
        const std::string pre = "dec" + std::to_string(u);
        m.params[pre + ".c1.w"] = glorot_uniform({out_ch, cat, 3, 3}, cat * 9, out_ch * 9, rng);
        m.params[pre + ".c1.b"] = make_param({out_ch});
        m.params[pre + ".c2.w"] = glorot_uniform({out_ch, out_ch, 3, 3}, out_ch * 9, out_ch * 9, rng);
        m.params[pre + ".c2.b"] = make_param({out_ch});
        in_ch = out_ch;
    }
    m.params["out.w"] = glorot_uniform({1, in_ch, 1, 1}, in_ch, 1, rng);
    // Pixel logits start at the sparse-lesion base rate (sigmoid(-4), about
    // 2% positive) rather than at 0.5.
    m.params["out.b"] = make_param({1}, -4.0);
    return m;
}

// [3,S,S] image -> [1,S,S] pixel logits.
inline Tensor seg_forward(Graph* g, const SegModel& m, const Tensor& img, Rng* rng = nullptr,
                          bool training = false) {
    const SegConfig& cfg = m.cfg;
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != cfg.encoder.size ||
        img.dim(2) != cfg.encoder.size)
        throw ShapeError("seg_forward: input " + shape_str(img.shape()) + " vs expected [3," +
                         std::to_string(cfg.encoder.size) + "," + std::to_string(cfg.encoder.size) +
                         "]");
    Rng fallback(0);
    Rng& r = rng ? *rng : fallback;
    std::vector<Tensor> stages;
    Tensor x = run_encoder(g, m.params, "enc.", cfg.encoder, img, cfg.dropout, r, training, &stages);
    size_t grid = cfg.encoder.out_grid();
    Tensor y = tokens_to_image(g, x, grid, grid);
    for (size_t u = 0; u < cfg.levels(); ++u) {
        y = upsample_nearest_2x(g, y);
        grid *= 2;
        const size_t s = cfg.skip_stage(u);
        if (s < cfg.encoder.stages())
            y = concat_first(g, {y, tokens_to_image(g, stages[s], grid, grid)});
        const std::string pre = "dec" + std::to_string(u);
        y = relu(g, conv2d(g, y, named_param(m.params, pre + ".c1.w"),
                           named_param(m.params, pre + ".c1.b"), 1));
        y = relu(g, conv2d(g, y, named_param(m.params, pre + ".c2.w"),
                           named_param(m.params, pre + ".c2.b"), 1));
    }
    return conv2d(g, y, named_param(m.params, "out.w"), named_param(m.params, "out.b"), 0);
}

namespace detail {

inline void check_seg_batch(const SegModel& m, const std::vector<Sample>& batch) {
    if (batch.empty()) throw ValidationError("seg train step: empty batch");
    const size_t S = m.cfg.encoder.size;
    for (const Sample& s : batch) {
        if (!s.has_mask()) throw ValidationError("seg train step: sample '" + s.id + "' has no mask");
        if (s.mask.rank() != 3 || s.mask.dim(0) != 1 || s.mask.dim(1) != S || s.mask.dim(2) != S)
            throw ValidationError("seg train step: mask " + shape_str(s.mask.shape()) +
                                  " vs expected [1," + std::to_string(S) + "," + std::to_string(S) +
                                  "]");
        for (size_t i = 0; i < s.mask.numel(); ++i)
            if (s.mask.at(i) != 0.0 && s.mask.at(i) != 1.0)
                throw ValidationError("seg train step: non-binary mask in sample '" + s.id + "'");
    }
}

} // namespace detail

// One optimizer step on the batch-mean of the per-pixel logistic loss.
inline double seg_train_step(SegModel& m, SgdState& state, const std::vector<Sample>& batch,
                             Rng& rng) {
    detail::check_seg_batch(m, batch);
    Graph g;
    Tensor total;
    for (size_t i = 0; i < batch.size(); ++i) {
        Tensor logits = seg_forward(&g, m, batch[i].image, &rng, true);
        Tensor sample_loss = bce_with_logits(&g, logits, batch[i].mask);
        total = i == 0 ? sample_loss : add(&g, total, sample_loss);
    }
    Tensor loss = scale(&g, total, 1.0 / static_cast<double>(batch.size()));
    zero_grads(m.params);
    g.backward(loss);
    sgd_step(m.params, state);
    return loss.item();
}

// Per-pixel lesion probabilities, deterministic (no dropout, no graph).
inline Tensor generate_lesion_map(const SegModel& m, const Tensor& img) {
    return sigmoid(nullptr, seg_forward(nullptr, m, img));
}

} // namespace xfuse
