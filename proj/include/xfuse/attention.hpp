#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "ops.hpp"

namespace xfuse {

// Projection weights for one attention unit. Queries may come from a
// different sequence than keys/values; self-attention is the x==y case.
struct AttentionParams {
    Tensor W_q, W_k, W_v, W_out; // each [d,d]
    size_t heads = 1;
    // Optional learned additive score bias per relative offset, [(2w-1)^2, heads].
    // Left undefined unless explicitly enabled.
    Tensor rel_table;
    std::vector<size_t> rel_index; // [w^2 * w^2] lookup into the table rows

    size_t d_model() const { return W_q.dim(0); }
    size_t head_width() const { return d_model() / heads; }

    void validate() const {
        const size_t d = W_q.dim(0);
        for (const Tensor* w : {&W_q, &W_k, &W_v, &W_out})
            if (w->rank() != 2 || w->dim(0) != d || w->dim(1) != d)
                throw ShapeError("attention: weight " + shape_str(w->shape()) +
                                 " is not square of width " + std::to_string(d));
        if (heads == 0 || d % heads != 0)
            throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                             std::to_string(heads) + " heads");
    }
};

struct WindowLayout {
    size_t window = 4;
    size_t shift = 0; // 0 or window/2
    size_t grid_h = 0, grid_w = 0;

    void validate() const {
        if (grid_h % window != 0 || grid_w % window != 0)
            throw ShapeError("window layout: grid " + std::to_string(grid_h) + "x" +
                             std::to_string(grid_w) + " not divisible by window " +
                             std::to_string(window));
        if (shift >= window)
            throw ShapeError("window layout: shift " + std::to_string(shift) + " >= window " +
                             std::to_string(window));
    }

    size_t windows() const { return (grid_h / window) * (grid_w / window); }
    size_t tokens() const { return grid_h * grid_w; }
};

namespace detail {

// Token order after partitioning: windows raster-major, tokens raster-major
// inside each window. With a shift, position (i,j) reads the grid rolled by
// (-s,-s): source (i+s mod H, j+s mod W).
inline std::vector<size_t> partition_index(const WindowLayout& lo) {
    const size_t H = lo.grid_h, W = lo.grid_w, w = lo.window, s = lo.shift;
    std::vector<size_t> idx;
    idx.reserve(H * W);
    for (size_t wy = 0; wy < H / w; ++wy)
        for (size_t wx = 0; wx < W / w; ++wx)
            for (size_t ty = 0; ty < w; ++ty)
                for (size_t tx = 0; tx < w; ++tx) {
                    const size_t i = (wy * w + ty + s) % H;
                    const size_t j = (wx * w + tx + s) % W;
                    idx.push_back(i * W + j);
                }
    return idx;
}

inline std::vector<size_t> invert_permutation(const std::vector<size_t>& p) {
    std::vector<size_t> inv(p.size());
    for (size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
    return inv;
}

} // namespace detail

// [H,W,C] -> [nW, w^2, C], cyclically rolled first when the layout shifts.
inline Tensor window_partition(Graph* g, const Tensor& x, const WindowLayout& lo) {
    lo.validate();
    if (x.rank() != 3 || x.dim(0) != lo.grid_h || x.dim(1) != lo.grid_w)
        throw ShapeError("window_partition: input " + shape_str(x.shape()) + " vs grid " +
                         std::to_string(lo.grid_h) + "x" + std::to_string(lo.grid_w));
    const size_t C = x.dim(2);
    Tensor flat = reshape_op(g, x, {lo.tokens(), C});
    return gather_rows(g, flat, detail::partition_index(lo),
                       {lo.windows(), lo.window * lo.window, C});
}

inline Tensor window_reverse(Graph* g, const Tensor& wins, const WindowLayout& lo) {
    lo.validate();
    if (wins.rank() != 3 || wins.dim(0) != lo.windows() ||
        wins.dim(1) != lo.window * lo.window)
        throw ShapeError("window_reverse: input " + shape_str(wins.shape()) + " vs layout " +
                         std::to_string(lo.windows()) + " windows of " +
                         std::to_string(lo.window * lo.window));
    const size_t C = wins.dim(2);
    Tensor flat = reshape_op(g, wins, {lo.tokens(), C});
    return gather_rows(g, flat, detail::invert_permutation(detail::partition_index(lo)),
                       {lo.grid_h, lo.grid_w, C});
}

// Non-overlapping p x p patches, flattened (channel, row, col)-major, then
// projected: [C,H,W] -> [(H/p)(W/p), d].
inline Tensor patch_embed(Graph* g, const Tensor& img, size_t p, const Tensor& W_e) {
    if (img.rank() != 3) throw ShapeError("patch_embed: need [C,H,W], got " + shape_str(img.shape()));
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (p == 0 || H % p != 0 || W % p != 0)
        throw ShapeError("patch_embed: " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by patch " + std::to_string(p));
    if (W_e.rank() != 2 || W_e.dim(0) != C * p * p)
        throw ShapeError("patch_embed: projection " + shape_str(W_e.shape()) + " vs patch width " +
                         std::to_string(C * p * p));
    const size_t gh = H / p, gw = W / p;
    std::vector<size_t> idx;
    idx.reserve(gh * gw * C * p * p);
    for (size_t py = 0; py < gh; ++py)
        for (size_t px = 0; px < gw; ++px)
            for (size_t c = 0; c < C; ++c)
                for (size_t i = 0; i < p; ++i)
                    for (size_t j = 0; j < p; ++j)
                        idx.push_back((c * H + py * p + i) * W + px * p + j);
    Tensor patches = gather_elems(g, img, idx, {gh * gw, C * p * p});
    return matmul(g, patches, W_e);
}

// Concatenates each 2x2 token neighborhood (tl,tr,bl,br) and projects 4C -> 2C.
inline Tensor patch_merge(Graph* g, const Tensor& x, size_t H, size_t W, const Tensor& W_m) {
    if (x.rank() != 2 || x.dim(0) != H * W)
        throw ShapeError("patch_merge: tokens " + shape_str(x.shape()) + " vs grid " +
                         std::to_string(H) + "x" + std::to_string(W));
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("patch_merge: odd grid " + std::to_string(H) + "x" + std::to_string(W));
    const size_t C = x.dim(1);
    if (W_m.rank() != 2 || W_m.dim(0) != 4 * C)
        throw ShapeError("patch_merge: projection " + shape_str(W_m.shape()) + " vs 4C = " +
                         std::to_string(4 * C));
    std::vector<size_t> idx;
    idx.reserve(H * W);
    for (size_t cy = 0; cy < H / 2; ++cy)
        for (size_t cx = 0; cx < W / 2; ++cx) {
            idx.push_back((2 * cy) * W + 2 * cx);
            idx.push_back((2 * cy) * W + 2 * cx + 1);
            idx.push_back((2 * cy + 1) * W + 2 * cx);
            idx.push_back((2 * cy + 1) * W + 2 * cx + 1);
        }
    Tensor grouped = gather_rows(g, x, idx, {H * W / 4, 4 * C});
    return matmul(g, grouped, W_m);
}

namespace detail {

// Shared core: queries from x, keys/values from y, per-head scaled dot
// product, heads concatenated and projected.
inline Tensor attend(Graph* g, const Tensor& x, const Tensor& y, const AttentionParams& params,
                     const Tensor* mask) {
    params.validate();
    const size_t d = params.d_model();
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != d || y.dim(1) != d)
        throw ShapeError("attention: sequences " + shape_str(x.shape()) + ", " +
                         shape_str(y.shape()) + " vs width " + std::to_string(d));
    const size_t Lq = x.dim(0), Lk = y.dim(0);
    if (mask && (mask->rank() != 2 || mask->dim(0) != Lq || mask->dim(1) != Lk))
        throw ShapeError("attention: mask " + shape_str(mask->shape()) + " vs scores [" +
                         std::to_string(Lq) + "," + std::to_string(Lk) + "]");
    const size_t dh = params.head_width();
    const bool biased = params.rel_table.defined();
    if (biased && (Lq != Lk || params.rel_index.size() != Lq * Lk))
        throw ShapeError("attention: relative bias index covers " +
                         std::to_string(params.rel_index.size()) + " score entries, need " +
                         std::to_string(Lq * Lk));

    Tensor Q = matmul(g, x, params.W_q);
    Tensor K = matmul(g, y, params.W_k);
    Tensor V = matmul(g, y, params.W_v);

    std::vector<Tensor> ctx;
    ctx.reserve(params.heads);
    for (size_t h = 0; h < params.heads; ++h) {
        Tensor qh = slice_cols(g, Q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(g, K, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(g, V, h * dh, (h + 1) * dh);
        Tensor scores = scale(g, matmul_nt(g, qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (biased) {
            Tensor col = slice_cols(g, params.rel_table, h, h + 1);
            Tensor bias = gather_elems(g, col, params.rel_index, {Lq, Lk});
            scores = add(g, scores, bias);
        }
        if (mask) scores = add(g, scores, *mask);
        ctx.push_back(matmul(g, softmax_rows(g, scores), vh));
    }
    return matmul(g, concat_cols(g, ctx), params.W_out);
}

} // namespace detail

inline Tensor multi_head_self_attention(Graph* g, const Tensor& x, const AttentionParams& params,
                                        const Tensor* mask = nullptr) {
    return detail::attend(g, x, x, params, mask);
}

inline Tensor cross_attention(Graph* g, const Tensor& x_seq, const Tensor& y_seq,
                              const AttentionParams& params) {
    return detail::attend(g, x_seq, y_seq, params, nullptr);
}

// Lookup table index for the optional score bias: entry (a,b) of a w^2 x w^2
// score matrix maps to relative offset (dy+w-1, dx+w-1).
inline std::vector<size_t> rel_pos_index(size_t w) {
    std::vector<size_t> idx;
    idx.reserve(w * w * w * w);
    for (size_t ay = 0; ay < w; ++ay)
        for (size_t ax = 0; ax < w; ++ax)
            for (size_t by = 0; by < w; ++by)
                for (size_t bx = 0; bx < w; ++bx) {
                    const size_t dy =
                        static_cast<size_t>(static_cast<long>(ay) - static_cast<long>(by) +
                                            static_cast<long>(w) - 1);
                    const size_t dx =
                        static_cast<size_t>(static_cast<long>(ax) - static_cast<long>(bx) +
                                            static_cast<long>(w) - 1);
                    idx.push_back(dy * (2 * w - 1) + dx);
                }
    return idx;
}

// Additive -1e9 masks, one [w^2, w^2] tensor per window, marking pairs of
// tokens that came from different regions of the rolled grid. All zero when
// the shift is zero.
inline std::vector<Tensor> shift_attention_masks(const WindowLayout& lo) {
    lo.validate();
    const size_t H = lo.grid_h, W = lo.grid_w, w = lo.window, s = lo.shift;
    const size_t wsq = w * w;
    std::vector<Tensor> masks;
    masks.reserve(lo.windows());
    if (s == 0) {
        for (size_t i = 0; i < lo.windows(); ++i) masks.emplace_back(Shape{wsq, wsq}, 0.0);
        return masks;
    }
    // Region ids live on the rolled grid: rows [0, n-w) are spatially
    // contiguous and never share a window with the wrap, rows [n-w, n-s) are
    // the contiguous tail, rows [n-s, n) wrapped around from the other side.
    auto band = [w, s](size_t v, size_t n) {
        if (v < n - w) return 0;
        return v < n - s ? 1 : 2;
    };
    std::vector<int> region(H * W);
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j) region[i * W + j] = 3 * band(i, H) + band(j, W);
    WindowLayout unshifted = lo;
    unshifted.shift = 0;
    const std::vector<size_t> idx = detail::partition_index(unshifted);
    for (size_t win = 0; win < lo.windows(); ++win) {
        Tensor m(Shape{wsq, wsq}, 0.0);
        for (size_t a = 0; a < wsq; ++a)
            for (size_t b = 0; b < wsq; ++b)
                if (region[idx[win * wsq + a]] != region[idx[win * wsq + b]])
                    m.at(a * wsq + b) = -1e9;
        masks.push_back(std::move(m));
    }
    return masks;
}

struct MlpParams {
    Tensor W1, b1, W2, b2; // [d,4d], [4d], [4d,d], [d]
};

struct SwinBlockParams {
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias; // [d]
    AttentionParams attn;
    MlpParams mlp;
};

// Pre-norm block: x + WindowAttention(LN(x)), then + MLP(LN(.)). The window
// masks must match the layout (empty vector means unmasked).
inline Tensor swin_block(Graph* g, const Tensor& x, const WindowLayout& lo,
                         const SwinBlockParams& params, const std::vector<Tensor>& masks,
                         double drop, Rng& rng, bool training) {
    lo.validate();
    if (x.rank() != 2 || x.dim(0) != lo.tokens())
        throw ShapeError("swin_block: tokens " + shape_str(x.shape()) + " vs layout " +
                         std::to_string(lo.tokens()));
    const size_t C = x.dim(1);
    const size_t wsq = lo.window * lo.window;
    if (!masks.empty() && masks.size() != lo.windows())
        throw ShapeError("swin_block: " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(lo.windows()) + " windows");

    Tensor normed = layer_norm(g, x, params.ln1_gain, params.ln1_bias);
    Tensor grid = reshape_op(g, normed, {lo.grid_h, lo.grid_w, C});
    Tensor wins = reshape_op(g, window_partition(g, grid, lo), {lo.windows() * wsq, C});
    std::vector<Tensor> attended;
    attended.reserve(lo.windows());
    std::vector<size_t> rows(wsq);
    for (size_t win = 0; win < lo.windows(); ++win) {
        for (size_t t = 0; t < wsq; ++t) rows[t] = win * wsq + t;
        Tensor tokens = gather_rows(g, wins, rows, {wsq, C});
        const Tensor* mask = masks.empty() ? nullptr : &masks[win];
        attended.push_back(multi_head_self_attention(g, tokens, params.attn, mask));
    }
    Tensor merged = reshape_op(g, concat_first(g, attended), {lo.windows(), wsq, C});
    Tensor restored = reshape_op(g, window_reverse(g, merged, lo), {lo.tokens(), C});
    restored = dropout(g, restored, drop, rng, training);
    Tensor h = add(g, x, restored);

    Tensor normed2 = layer_norm(g, h, params.ln2_gain, params.ln2_bias);
    Tensor mid = gelu(g, linear(g, normed2, params.mlp.W1, params.mlp.b1));
    Tensor out = linear(g, mid, params.mlp.W2, params.mlp.b2);
    out = dropout(g, out, drop, rng, training);
    return add(g, h, out);
}

} // namespace xfuse
