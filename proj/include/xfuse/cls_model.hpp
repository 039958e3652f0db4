#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "seg_model.hpp"
#include "swin_encoder.hpp"

namespace xfuse {

// Dual-stream classifier: an image encoder and a lesion-map encoder of the
// same shape, fused by cross-attention (queries from the image tokens, keys
// and values from the map tokens), pooled and mapped to one logit. With
// fusion off the model degenerates to the single-stream image baseline and
// owns no map-stream or fusion weights.
struct ClsConfig {
    EncoderConfig encoder;
    bool fusion = true;
    size_t fusion_heads = 3;
    double dropout = 0.0;
    double head_dropout = 0.1;

    void validate() const {
        encoder.validate();
        if (fusion && (fusion_heads == 0 || encoder.out_width() % fusion_heads != 0))
            throw ConfigError("classifier: fused width " + std::to_string(encoder.out_width()) +
                              " not divisible by " + std::to_string(fusion_heads) + " heads");
        if (dropout < 0.0 || dropout >= 1.0 || head_dropout < 0.0 || head_dropout >= 1.0)
            throw ConfigError("classifier: dropout must be in [0,1)");
    }
};

struct ClsModel {
    ClsConfig cfg;
    ModelParams params;
};

inline ClsModel make_cls_model(const ClsConfig& cfg, Rng& rng) {
    cfg.validate();
    ClsModel m;
    m.cfg = cfg;
    init_encoder(m.params, "img.", cfg.encoder, 3, rng);
    if (cfg.fusion) {
        init_encoder(m.params, "map.", cfg.encoder, 1, rng);
        detail::init_attention(m.params, "fuse", cfg.encoder.out_width(), cfg.fusion_heads,
                               cfg.encoder.window, false, rng);
    }
    const size_t d = cfg.encoder.out_width();
    m.params["head.w"] = glorot_uniform({d, 1}, d, 1, rng);
    m.params["head.b"] = make_param({1});
    return m;
}

// [3,S,S] image + [1,S,S] probability map -> single logit (numel-1 tensor).
inline Tensor cls_forward(Graph* g, const ClsModel& m, const Tensor& img, const Tensor& map,
                          Rng* rng = nullptr, bool training = false) {
    const ClsConfig& cfg = m.cfg;
    const size_t S = cfg.encoder.size;
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != S || img.dim(2) != S)
        throw ShapeError("cls_forward: image " + shape_str(img.shape()) + " vs expected [3," +
                         std::to_string(S) + "," + std::to_string(S) + "]");
    if (map.rank() != 3 || map.dim(0) != 1 || map.dim(1) != S || map.dim(2) != S)
        throw ShapeError("cls_forward: map " + shape_str(map.shape()) + " vs expected [1," +
                         std::to_string(S) + "," + std::to_string(S) + "]");
    Rng fallback(0);
    Rng& r = rng ? *rng : fallback;
    Tensor img_seq = run_encoder(g, m.params, "img.", cfg.encoder, img, cfg.dropout, r, training);
    Tensor fused = img_seq;
    if (cfg.fusion) {
        Tensor map_seq = run_encoder(g, m.params, "map.", cfg.encoder, map, cfg.dropout, r, training);
        fused = cross_attention(g, img_seq, map_seq,
                                detail::attention_at(m.params, "fuse", cfg.fusion_heads,
                                                     cfg.encoder.window, false));
    }
    Tensor pooled = mean_rows(g, fused);
    pooled = dropout(g, pooled, cfg.head_dropout, r, training);
    Tensor row = reshape_op(g, pooled, {1, pooled.dim(0)});
    Tensor logit = linear(g, row, named_param(m.params, "head.w"), named_param(m.params, "head.b"));
    return reshape_op(g, logit, {1});
}

// Which classifier parameters were copied from a segmenter vs freshly drawn.
struct TransferManifest {
    std::vector<std::string> copied;
    std::vector<std::string> fresh;
};

// Copies every segmenter encoder tensor into the classifier's image stream.
// Both directions must match exactly: a segmenter tensor without a
// same-shaped image-stream slot, or an image-stream slot left unmatched,
// makes the models incompatible.
inline TransferManifest init_from_seg_encoder(const SegModel& seg, ClsModel& cls) {
    TransferManifest man;
    std::vector<std::string> bad;
    std::vector<std::pair<const Tensor*, Tensor*>> pending;
    for (const auto& [name, src] : seg.params) {
        if (name.rfind("enc.", 0) != 0) continue;
        const std::string target = "img." + name.substr(4);
        auto it = cls.params.find(target);
        if (it == cls.params.end() || it->second.shape() != src.shape()) {
            bad.push_back(target);
            continue;
        }
        pending.emplace_back(&src, &it->second);
        man.copied.push_back(target);
    }
    for (const auto& [name, t] : cls.params)
        if (name.rfind("img.", 0) == 0 &&
            !std::binary_search(man.copied.begin(), man.copied.end(), name))
            bad.push_back(name);
    if (!bad.empty()) {
        std::string msg = "encoder transfer: incompatible parameters:";
        for (const std::string& b : bad) msg += " " + b;
        throw TransferError(msg);
    }
    for (auto& [src, dst] : pending) std::copy(src->vec().begin(), src->vec().end(), dst->data());
    for (const auto& [name, t] : cls.params)
        if (!std::binary_search(man.copied.begin(), man.copied.end(), name))
            man.fresh.push_back(name);
    return man;
}

// One labeled training example for the classifier.
struct FusedExample {
    Tensor image; // [3,S,S]
    Tensor map;   // [1,S,S] probabilities
    int label = 0;
};

namespace detail {

inline void check_cls_batch(const std::vector<FusedExample>& batch) {
    if (batch.empty()) throw ValidationError("cls train step: empty batch");
    for (const FusedExample& e : batch)
        if (e.label != 0 && e.label != 1)
            throw ValidationError("cls train step: label " + std::to_string(e.label) +
                                  " is not binary");
}

} // namespace detail

// One optimizer step on the batch-mean logistic loss over scalar logits.
inline double cls_train_step(ClsModel& m, SgdState& state, const std::vector<FusedExample>& batch,
                             Rng& rng) {
    detail::check_cls_batch(batch);
    Graph g;
    Tensor total;
    for (size_t i = 0; i < batch.size(); ++i) {
        Tensor logit = cls_forward(&g, m, batch[i].image, batch[i].map, &rng, true);
        Tensor target({1}, static_cast<double>(batch[i].label));
        Tensor sample_loss = bce_with_logits(&g, logit, target);
        total = i == 0 ? sample_loss : add(&g, total, sample_loss);
    }
    Tensor loss = scale(&g, total, 1.0 / static_cast<double>(batch.size()));
    zero_grads(m.params);
    g.backward(loss);
    sgd_step(m.params, state);
    return loss.item();
}

// Assembles one cell of the {fusion} x {transfer} grid. Transfer needs a
// trained segmenter; its encoder weights seed the image stream.
inline ClsModel ablation_variant(ClsConfig cfg, bool fusion, bool transfer, const SegModel* seg,
                                 Rng& rng, TransferManifest* manifest = nullptr) {
    cfg.fusion = fusion;
    ClsModel m = make_cls_model(cfg, rng);
    if (transfer) {
        if (!seg) throw ContractError("ablation: transfer requested without a segmenter");
        TransferManifest man = init_from_seg_encoder(*seg, m);
        if (manifest) *manifest = man;
    } else if (manifest) {
        manifest->copied.clear();
        manifest->fresh.clear();
        for (const auto& [name, t] : m.params) manifest->fresh.push_back(name);
    }
    return m;
}

} // namespace xfuse
