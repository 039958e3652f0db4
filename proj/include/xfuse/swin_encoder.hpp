#pragma once

#include <string>
#include <vector>

#include "attention.hpp"
#include "optim.hpp"

namespace xfuse {

// Shape of one windowed-attention encoder: patch embedding, `depths[s]` blocks
// per stage, a patch merge between stages. Stage s runs at grid
// (size/patch)/2^s with width width*2^s.
struct EncoderConfig {
    size_t size = 64;
    size_t patch = 4;
    size_t width = 24;
    std::vector<size_t> depths{2, 2};
    std::vector<size_t> heads{3, 6};
    size_t window = 4;
    bool rel_bias = false;

    size_t stages() const { return depths.size(); }
    size_t stage_width(size_t s) const { return width << s; }
    size_t stage_grid(size_t s) const { return (size / patch) >> s; }
    size_t out_width() const { return stage_width(stages() - 1); }
    size_t out_grid() const { return stage_grid(stages() - 1); }
    size_t out_tokens() const { return out_grid() * out_grid(); }

    void validate() const {
        if (size == 0 || patch == 0 || width == 0 || window == 0)
            throw ConfigError("encoder: size, patch, width, window must be positive");
        if ((patch & (patch - 1)) != 0)
            throw ConfigError("encoder: patch " + std::to_string(patch) + " must be a power of two");
        if (depths.empty() || depths.size() != heads.size())
            throw ConfigError("encoder: depths and heads must be non-empty and aligned");
        const size_t unit = patch * window * (size_t{1} << (stages() - 1));
        if (size % unit != 0)
            throw ConfigError("encoder: size " + std::to_string(size) + " not divisible by patch*window*2^(stages-1) = " +
                              std::to_string(unit));
        for (size_t s = 0; s < stages(); ++s) {
            if (depths[s] == 0) throw ConfigError("encoder: stage " + std::to_string(s) + " has zero depth");
            if (heads[s] == 0 || stage_width(s) % heads[s] != 0)
                throw ConfigError("encoder: stage " + std::to_string(s) + " width " +
                                  std::to_string(stage_width(s)) + " not divisible by " +
                                  std::to_string(heads[s]) + " heads");
        }
    }
};

inline const Tensor& named_param(const ModelParams& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("missing parameter '" + name + "'");
    return it->second;
}

// [H*W, C] raster-ordered tokens -> [C, H, W] image layout.
inline Tensor tokens_to_image(Graph* g, const Tensor& x, size_t H, size_t W) {
    if (x.rank() != 2 || x.dim(0) != H * W)
        throw ShapeError("tokens_to_image: " + shape_str(x.shape()) + " vs grid " +
                         std::to_string(H) + "x" + std::to_string(W));
    return reshape_op(g, transpose2d(g, x), {x.dim(1), H, W});
}

namespace detail {

inline std::string block_key(const std::string& pre, size_t s, size_t b) {
    return pre + "s" + std::to_string(s) + ".b" + std::to_string(b);
}

inline void init_attention(ModelParams& p, const std::string& pre, size_t d, size_t heads,
                           size_t window, bool rel, Rng& rng) {
    p[pre + ".wq"] = glorot_uniform({d, d}, d, d, rng);
    p[pre + ".wk"] = glorot_uniform({d, d}, d, d, rng);
    p[pre + ".wv"] = glorot_uniform({d, d}, d, d, rng);
    p[pre + ".wo"] = glorot_uniform({d, d}, d, d, rng);
    if (rel) {
        const size_t span = 2 * window - 1;
        p[pre + ".rel"] = make_param({span * span, heads});
    }
}

inline AttentionParams attention_at(const ModelParams& p, const std::string& pre, size_t heads,
                                    size_t window, bool rel) {
    AttentionParams a;
    a.W_q = named_param(p, pre + ".wq");
    a.W_k = named_param(p, pre + ".wk");
    a.W_v = named_param(p, pre + ".wv");
    a.W_out = named_param(p, pre + ".wo");
    a.heads = heads;
    if (rel) {
        a.rel_table = named_param(p, pre + ".rel");
        a.rel_index = rel_pos_index(window);
    }
    return a;
}

inline void init_block(ModelParams& p, const std::string& pre, size_t d, size_t heads,
                       size_t window, bool rel, Rng& rng) {
    p[pre + ".ln1.g"] = make_param({d}, 1.0);
    p[pre + ".ln1.b"] = make_param({d});
    p[pre + ".ln2.g"] = make_param({d}, 1.0);
    p[pre + ".ln2.b"] = make_param({d});
    init_attention(p, pre + ".at", d, heads, window, rel, rng);
    p[pre + ".mlp.w1"] = glorot_uniform({d, 4 * d}, d, 4 * d, rng);
    p[pre + ".mlp.b1"] = make_param({4 * d});
    p[pre + ".mlp.w2"] = glorot_uniform({4 * d, d}, 4 * d, d, rng);
    p[pre + ".mlp.b2"] = make_param({d});
}

inline SwinBlockParams block_at(const ModelParams& p, const std::string& pre, size_t heads,
                                size_t window, bool rel) {
    SwinBlockParams b;
    b.ln1_gain = named_param(p, pre + ".ln1.g");
    b.ln1_bias = named_param(p, pre + ".ln1.b");
    b.ln2_gain = named_param(p, pre + ".ln2.g");
    b.ln2_bias = named_param(p, pre + ".ln2.b");
    b.attn = attention_at(p, pre + ".at", heads, window, rel);
    b.mlp.W1 = named_param(p, pre + ".mlp.w1");
    b.mlp.b1 = named_param(p, pre + ".mlp.b1");
    b.mlp.W2 = named_param(p, pre + ".mlp.w2");
    b.mlp.b2 = named_param(p, pre + ".mlp.b2");
    return b;
}

} // namespace detail

// Registers every encoder parameter under `pre` for an `in_ch`-channel input.
inline void init_encoder(ModelParams& p, const std::string& pre, const EncoderConfig& cfg,
                         size_t in_ch, Rng& rng) {
    cfg.validate();
    const size_t pw = in_ch * cfg.patch * cfg.patch;
    p[pre + "embed.w"] = glorot_uniform({pw, cfg.width}, pw, cfg.width, rng);
    p[pre + "embed.b"] = fan_in_uniform({cfg.width}, pw, rng);
    for (size_t s = 0; s < cfg.stages(); ++s) {
        for (size_t b = 0; b < cfg.depths[s]; ++b)
            detail::init_block(p, detail::block_key(pre, s, b), cfg.stage_width(s), cfg.heads[s],
                               cfg.window, cfg.rel_bias, rng);
        if (s + 1 < cfg.stages()) {
            const size_t C = cfg.stage_width(s);
            p[pre + "m" + std::to_string(s) + ".w"] = glorot_uniform({4 * C, 2 * C}, 4 * C, 2 * C, rng);
        }
    }
}

// Runs the encoder on a [C,S,S] input; returns the final token tensor
// [out_tokens, out_width]. When `stage_tokens` is given it receives each
// stage's output (pre-merge), finest first. Blocks alternate unshifted and
// shifted windows; the shift is dropped when a stage's grid equals the window,
// where a single window already sees every token.
inline Tensor run_encoder(Graph* g, const ModelParams& p, const std::string& pre,
                          const EncoderConfig& cfg, const Tensor& input, double drop, Rng& rng,
                          bool training, std::vector<Tensor>* stage_tokens = nullptr) {
    cfg.validate();
    if (input.rank() != 3 || input.dim(1) != cfg.size || input.dim(2) != cfg.size)
        throw ShapeError("run_encoder: input " + shape_str(input.shape()) + " vs size " +
                         std::to_string(cfg.size));
    Tensor x = add_bias_rows(g, patch_embed(g, input, cfg.patch, named_param(p, pre + "embed.w")),
                             named_param(p, pre + "embed.b"));
    size_t grid = cfg.size / cfg.patch;
    for (size_t s = 0; s < cfg.stages(); ++s) {
        for (size_t b = 0; b < cfg.depths[s]; ++b) {
            WindowLayout lo;
            lo.window = cfg.window;
            lo.shift = (b % 2 == 1 && grid > cfg.window) ? cfg.window / 2 : 0;
            lo.grid_h = lo.grid_w = grid;
            std::vector<Tensor> masks;
            if (lo.shift > 0) masks = shift_attention_masks(lo);
            x = swin_block(g, x, lo,
                           detail::block_at(p, detail::block_key(pre, s, b), cfg.heads[s],
                                            cfg.window, cfg.rel_bias),
                           masks, drop, rng, training);
        }
        if (stage_tokens) stage_tokens->push_back(x);
        if (s + 1 < cfg.stages()) {
            x = patch_merge(g, x, grid, grid, named_param(p, pre + "m" + std::to_string(s) + ".w"));
            grid /= 2;
        }
    }
    return x;
}

} // namespace xfuse
