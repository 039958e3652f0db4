#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace xfuse {

struct Sample {
    Tensor image; // [3,S,S] in [0,1]
    Tensor mask;  // [1,S,S] binary; undefined when the sample carries no pixel labels
    int label = 0;
    std::string id;

    bool has_mask() const { return mask.defined(); }
};

struct SynthConfig {
    size_t size = 64;
    double disc_radius = 0.45;      // fraction of S
    double positive_rate = 0.196;   // chance a sample gets any lesions at all
    size_t max_lesions = 3;         // positives draw 1..max_lesions blobs
    double lesion_radius_lo = 0.0625; // fraction of S
    double lesion_radius_hi = 0.125;
    double lesion_delta = 0.5;      // blob intensity offset
    double tau = 0.005;             // lesion-pixel fraction that makes label 1
    double train_frac = 0.396, val_frac = 0.123, test_frac = 0.481;
    uint64_t seed = 1;

    void validate() const {
        if (size < 8) throw ConfigError("synth: size must be at least 8");
        if (tau <= 0.0 || tau >= 1.0) throw ConfigError("synth: tau must be in (0,1)");
        if (positive_rate < 0.0 || positive_rate > 1.0)
            throw ConfigError("synth: positive_rate must be in [0,1]");
        if (lesion_radius_lo <= 0.0 || lesion_radius_hi < lesion_radius_lo)
            throw ConfigError("synth: bad lesion radius range");
        if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0 ||
            std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ConfigError("synth: split fractions must be non-negative and sum to 1");
        if (max_lesions == 0) throw ConfigError("synth: max_lesions must be positive");
    }
};

namespace detail {

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

inline void splat_disc(Tensor& img, size_t S, double cy, double cx, double r, double edge,
                       double dr, double dg, double db) {
    const long y0 = std::max(0L, static_cast<long>(std::floor(cy - r - edge)));
    const long y1 = std::min(static_cast<long>(S) - 1, static_cast<long>(std::ceil(cy + r + edge)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(cx - r - edge)));
    const long x1 = std::min(static_cast<long>(S) - 1, static_cast<long>(std::ceil(cx + r + edge)));
    for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            const double a = clamp01((r + edge - d) / edge);
            if (a <= 0.0) continue;
            const size_t at = static_cast<size_t>(y) * S + static_cast<size_t>(x);
            img.at(0 * S * S + at) = clamp01(img.at(0 * S * S + at) + a * dr);
            img.at(1 * S * S + at) = clamp01(img.at(1 * S * S + at) + a * dg);
            img.at(2 * S * S + at) = clamp01(img.at(2 * S * S + at) + a * db);
        }
}

} // namespace detail

// One retina phantom: radial-gradient disc, dark sinusoid vessels, a bright
// optic-disc-like blob in every image, and for positives a set of yellowish
// soft-edged lesion blobs. Mask marks exact blob supports; label re-derived
// from the mask area against tau.
inline Sample synth_sample(Rng& rng, const SynthConfig& cfg) {
    cfg.validate();
    const size_t S = cfg.size;
    const double Sd = static_cast<double>(S);
    Sample s;
    s.image = Tensor({3, S, S});
    s.mask = Tensor({1, S, S});

    const double cy = Sd / 2.0 + rng.uniform(-0.02, 0.02) * Sd;
    const double cx = Sd / 2.0 + rng.uniform(-0.02, 0.02) * Sd;
    const double R = cfg.disc_radius * Sd;
    const double base = rng.uniform(0.85, 1.0);

    for (size_t y = 0; y < S; ++y)
        for (size_t x = 0; x < S; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            const size_t at = y * S + x;
            if (d >= R) continue;
            const double fall = base * (1.0 - 0.5 * (d / R) * (d / R));
            s.image.at(0 * S * S + at) = 0.80 * fall;
            s.image.at(1 * S * S + at) = 0.45 * fall;
            s.image.at(2 * S * S + at) = 0.22 * fall;
        }

    // vessels: dark sinusoid streaks across the disc
    const size_t vessels = 2 + rng.below(3);
    for (size_t v = 0; v < vessels; ++v) {
        const double mid = cy + rng.uniform(-0.5, 0.5) * R;
        const double amp = rng.uniform(0.05, 0.18) * Sd;
        const double freq = rng.uniform(1.0, 2.5);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double strength = rng.uniform(0.25, 0.45);
        for (double t = 0.0; t < Sd; t += 0.25) {
            const double fy = mid + amp * std::sin(freq * 6.283185307179586 * t / Sd + phase);
            const long y = static_cast<long>(std::lround(fy));
            const long x = static_cast<long>(std::lround(t));
            if (y < 1 || y >= static_cast<long>(S) - 1 || x < 0 || x >= static_cast<long>(S))
                continue;
            const double d = std::hypot(fy - cy, x - cx);
            if (d >= 0.95 * R) continue;
            for (long yy = y - 1; yy <= y + 1; ++yy) {
                const size_t at = static_cast<size_t>(yy) * S + static_cast<size_t>(x);
                const double w = yy == y ? strength : 0.5 * strength;
                for (size_t c = 0; c < 2; ++c)
                    s.image.at(c * S * S + at) *= (1.0 - w);
            }
        }
    }

    // bright round confounder, present in every image regardless of class
    {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = rng.uniform(0.35, 0.6) * R;
        const double oy = cy + rad * std::sin(ang);
        const double ox = cx + rad * std::cos(ang);
        const double orr = rng.uniform(0.08, 0.12) * Sd;
        detail::splat_disc(s.image, S, oy, ox, orr, 2.0, 0.18, 0.30, 0.32);
    }

    // lesions: yellowish blobs; the mask is exactly the union of supports
    const bool positive = rng.uniform() < cfg.positive_rate;
    const size_t k = positive ? 1 + rng.below(cfg.max_lesions) : 0;
    for (size_t b = 0; b < k; ++b) {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = rng.uniform(0.0, 0.55) * R;
        const double ly = cy + rad * std::sin(ang);
        const double lx = cx + rad * std::cos(ang);
        const double lr = rng.uniform(cfg.lesion_radius_lo, cfg.lesion_radius_hi) * Sd;
        for (long y = std::max(0L, static_cast<long>(std::floor(ly - lr)));
             y <= std::min(static_cast<long>(S) - 1, static_cast<long>(std::ceil(ly + lr))); ++y)
            for (long x = std::max(0L, static_cast<long>(std::floor(lx - lr)));
                 x <= std::min(static_cast<long>(S) - 1, static_cast<long>(std::ceil(lx + lr)));
                 ++x) {
                const double d = std::hypot(y - ly, x - lx);
                const double a = detail::clamp01(lr - d);
                if (a <= 0.0) continue;
                const size_t at = static_cast<size_t>(y) * S + static_cast<size_t>(x);
                s.mask.at(at) = 1.0;
                s.image.at(0 * S * S + at) =
                    detail::clamp01(s.image.at(0 * S * S + at) + a * 0.35 * cfg.lesion_delta * 2.0);
                s.image.at(1 * S * S + at) =
                    detail::clamp01(s.image.at(1 * S * S + at) + a * 0.40 * cfg.lesion_delta * 2.0);
                s.image.at(2 * S * S + at) =
                    detail::clamp01(s.image.at(2 * S * S + at) - a * 0.05 * cfg.lesion_delta * 2.0);
            }
    }

    double lesion_pixels = 0.0;
    for (size_t i = 0; i < S * S; ++i) lesion_pixels += s.mask.at(i);
    s.label = lesion_pixels / static_cast<double>(S * S) >= cfg.tau ? 1 : 0;
    return s;
}

// Stable derivation: sample i is a pure function of (cfg.seed, i).
inline Sample make_sample(const SynthConfig& cfg, size_t index) {
    Rng rng = Rng(cfg.seed).derive("synth").derive(index);
    Sample s = synth_sample(rng, cfg);
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample-%06zu", index);
    s.id = buf;
    return s;
}

// ------------------------------------------------------------- preprocessing

// Bilinear with half-pixel centers; exact pass-through at scale 1.
inline Tensor resize_bilinear(const Tensor& img, size_t oh, size_t ow) {
    if (img.rank() != 3 || img.dim(1) == 0 || img.dim(2) == 0)
        throw ValidationError("resize: degenerate input " + shape_str(img.shape()));
    if (oh == 0 || ow == 0) throw ValidationError("resize: degenerate target");
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out({C, oh, ow});
    const double sy = static_cast<double>(H) / static_cast<double>(oh);
    const double sx = static_cast<double>(W) / static_cast<double>(ow);
    for (size_t y = 0; y < oh; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(H - 1));
        const size_t y0 = static_cast<size_t>(fy);
        const size_t y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - static_cast<double>(y0);
        for (size_t x = 0; x < ow; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(W - 1));
            const size_t x0 = static_cast<size_t>(fx);
            const size_t x1 = std::min(x0 + 1, W - 1);
            const double wx = fx - static_cast<double>(x0);
            for (size_t c = 0; c < C; ++c) {
                const double* p = img.data() + c * H * W;
                const double top = p[y0 * W + x0] + wx * (p[y0 * W + x1] - p[y0 * W + x0]);
                const double bot = p[y1 * W + x0] + wx * (p[y1 * W + x1] - p[y1 * W + x0]);
                out.at((c * oh + y) * ow + x) = top + wy * (bot - top);
            }
        }
    }
    return out;
}

// Nearest-neighbor resize; keeps binary grids binary.
inline Tensor resize_nearest(const Tensor& img, size_t oh, size_t ow) {
    if (img.rank() != 3 || img.dim(1) == 0 || img.dim(2) == 0)
        throw ValidationError("resize: degenerate input " + shape_str(img.shape()));
    if (oh == 0 || ow == 0) throw ValidationError("resize: degenerate target");
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out({C, oh, ow});
    const double sy = static_cast<double>(H) / static_cast<double>(oh);
    const double sx = static_cast<double>(W) / static_cast<double>(ow);
    for (size_t y = 0; y < oh; ++y) {
        const size_t iy = std::min(
            H - 1, static_cast<size_t>(std::floor((static_cast<double>(y) + 0.5) * sy)));
        for (size_t x = 0; x < ow; ++x) {
            const size_t ix = std::min(
                W - 1, static_cast<size_t>(std::floor((static_cast<double>(x) + 0.5) * sx)));
            for (size_t c = 0; c < C; ++c)
                out.at((c * oh + y) * ow + x) = img.at((c * H + iy) * W + ix);
        }
    }
    return out;
}

inline Tensor center_crop(const Tensor& img, size_t s) {
    if (img.rank() != 3 || img.dim(1) < s || img.dim(2) < s)
        throw ValidationError("center_crop: input " + shape_str(img.shape()) + " smaller than " +
                              std::to_string(s));
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const size_t oy = (H - s) / 2, ox = (W - s) / 2;
    Tensor out({C, s, s});
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < s; ++y)
            for (size_t x = 0; x < s; ++x)
                out.at((c * s + y) * s + x) = img.at((c * H + oy + y) * W + ox + x);
    return out;
}

constexpr double kImagenetMean[3] = {0.485, 0.456, 0.406};
constexpr double kImagenetStd[3] = {0.229, 0.224, 0.225};

inline Tensor normalize_imagenet(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw ValidationError("normalize: need [3,H,W], got " + shape_str(img.shape()));
    const size_t n = img.dim(1) * img.dim(2);
    Tensor out(img.shape());
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < n; ++i)
            out.at(c * n + i) = (img.at(c * n + i) - kImagenetMean[c]) / kImagenetStd[c];
    return out;
}

// Geometry target: bilinear resize to the even size nearest 1.15*S, then a
// center crop back to S. Inputs that are already S x S skip the resize and
// crop and only get normalized.
inline Tensor preprocess(const Tensor& img, size_t S) {
    if (img.rank() != 3 || img.dim(1) == 0 || img.dim(2) == 0)
        throw ValidationError("preprocess: degenerate input " + shape_str(img.shape()));
    Tensor geo = img;
    if (img.dim(1) != S || img.dim(2) != S) {
        size_t target = static_cast<size_t>(std::lround(1.15 * static_cast<double>(S)));
        if (target % 2 != 0) ++target;
        geo = center_crop(resize_bilinear(img, target, target), S);
    }
    return normalize_imagenet(geo);
}

// --------------------------------------------------------------- augmentation

struct AugmentConfig {
    bool rotate = true;       // quarter-turn draw from {0,90,180,270}
    double flip_p = 0.5;      // independent horizontal and vertical flips
    double jitter_lo = 0.8;   // brightness/contrast factors ~ U(lo,hi)
    double jitter_hi = 1.2;
    bool crop = true;         // random crop to crop_frac*S, resized back
    double crop_frac = 0.9;
};

namespace detail {

inline Tensor rot90(const Tensor& img, size_t quarter_turns) {
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (quarter_turns % 4 == 0) return img;
    Tensor out = img;
    for (size_t q = 0; q < quarter_turns % 4; ++q) {
        const size_t h = out.dim(1), w = out.dim(2);
        Tensor next({C, w, h});
        for (size_t c = 0; c < C; ++c)
            for (size_t y = 0; y < h; ++y)
                for (size_t x = 0; x < w; ++x)
                    next.at((c * w + x) * h + (h - 1 - y)) = out.at((c * h + y) * w + x);
        out = next;
    }
    return out;
}

inline Tensor flip_h(const Tensor& img) {
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.shape());
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < H; ++y)
            for (size_t x = 0; x < W; ++x)
                out.at((c * H + y) * W + x) = img.at((c * H + y) * W + (W - 1 - x));
    return out;
}

inline Tensor flip_v(const Tensor& img) {
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.shape());
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < H; ++y)
            for (size_t x = 0; x < W; ++x)
                out.at((c * H + y) * W + x) = img.at((c * H + (H - 1 - y)) * W + x);
    return out;
}

inline Tensor crop_at(const Tensor& img, size_t oy, size_t ox, size_t s) {
    const size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out({C, s, s});
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < s; ++y)
            for (size_t x = 0; x < s; ++x)
                out.at((c * s + y) * s + x) = img.at((c * H + oy + y) * W + ox + x);
    return out;
}

} // namespace detail

// Train-time pipeline: quarter-turn rotation, flips, photometric jitter on the
// image only, then random crop + resize back. Spatial stages hit image and
// mask identically; factor draws of exactly 1 short-circuit so identity draws
// leave the sample bit-unchanged.
inline Sample augment(Rng& rng, const Sample& sample, const AugmentConfig& cfg = {}) {
    Sample out = sample;
    const size_t S = sample.image.dim(1);

    if (cfg.rotate) {
        const size_t q = rng.below(4);
        if (q != 0) {
            out.image = detail::rot90(out.image, q);
            if (out.has_mask()) out.mask = detail::rot90(out.mask, q);
        }
    }
    if (rng.uniform() < cfg.flip_p) {
        out.image = detail::flip_h(out.image);
        if (out.has_mask()) out.mask = detail::flip_h(out.mask);
    }
    if (rng.uniform() < cfg.flip_p) {
        out.image = detail::flip_v(out.image);
        if (out.has_mask()) out.mask = detail::flip_v(out.mask);
    }

    const double brightness = rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
    const double contrast = rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
    if (brightness != 1.0 || contrast != 1.0) {
        Tensor jittered = out.image.clone();
        for (size_t i = 0; i < jittered.numel(); ++i) {
            double v = jittered.at(i) * brightness;
            v = 0.5 + (v - 0.5) * contrast;
            jittered.at(i) = detail::clamp01(v);
        }
        out.image = jittered;
    }

    if (cfg.crop) {
        const size_t s = static_cast<size_t>(std::lround(cfg.crop_frac * static_cast<double>(S)));
        if (s >= 4 && s < S) {
            const size_t oy = rng.below(S - s + 1);
            const size_t ox = rng.below(S - s + 1);
            out.image = resize_bilinear(detail::crop_at(out.image, oy, ox, s), S, S);
            if (out.has_mask())
                out.mask = resize_nearest(detail::crop_at(out.mask, oy, ox, s), S, S);
        }
    }
    return out;
}

// ---------------------------------------------------------------------- splits

struct Splits {
    std::vector<size_t> train, val, test;
};

inline Splits make_splits(const SynthConfig& cfg, size_t n) {
    cfg.validate();
    if (n == 0) throw ConfigError("make_splits: empty dataset");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(cfg.seed).derive("splits");
    for (size_t i = n; i-- > 1;) {
        const size_t j = rng.below(i + 1);
        std::swap(order[i], order[j]);
    }
    const size_t n_train = static_cast<size_t>(std::llround(cfg.train_frac * static_cast<double>(n)));
    const size_t n_val = static_cast<size_t>(std::llround(cfg.val_frac * static_cast<double>(n)));
    if (n_train + n_val > n) throw ConfigError("make_splits: fractions overflow dataset");
    Splits s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

} // namespace xfuse
