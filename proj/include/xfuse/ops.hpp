#pragma once

#include <algorithm>
#include <cmath>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace xfuse {

// An input contributes gradient only if it is a parameter leaf or was itself
// produced by a recorded op. Constants fall out of the backward pass entirely.
inline bool wants_grad(const Tensor& t) { return t.impl()->tracked; }

inline void track(Graph* g, const Tensor& t) {
    if (t.requires_grad()) {
        g->track_leaf(t);
        t.impl()->tracked = true;
    }
}

namespace kernels {

// C += A·B, A[m,k] B[k,n] C[m,n]. Fixed ikj order.
inline void mm(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C += A·Bᵀ, A[m,k] B[n,k] C[m,n].
inline void mm_nt(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        for (size_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (size_t p = 0; p < k; ++p) s += a[p] * b[p];
            C[i * n + j] += s;
        }
    }
}

// C += Aᵀ·B, A[m,k] B[m,n] C[k,n].
inline void mm_tn(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + p * n;
            for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

} // namespace kernels

// ---------------------------------------------------------------- elementwise

inline Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
    if (g) {
        track(g, a);
        track(g, b);
        g->record(out, [a, b](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(a)) gm.add(a, og);
            if (wants_grad(b)) gm.add(b, og);
        });
    }
    return out;
}

inline Tensor sub(Graph* g, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
    if (g) {
        track(g, a);
        track(g, b);
        g->record(out, [a, b](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(a)) gm.add(a, og);
            if (wants_grad(b)) {
                auto& s = gm.slot(b);
                for (size_t i = 0; i < og.size(); ++i) s[i] -= og[i];
            }
        });
    }
    return out;
}

inline Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
    if (g) {
        track(g, a);
        track(g, b);
        g->record(out, [a, b](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(a)) {
                auto& s = gm.slot(a);
                for (size_t i = 0; i < og.size(); ++i) s[i] += og[i] * b.at(i);
            }
            if (wants_grad(b)) {
                auto& s = gm.slot(b);
                for (size_t i = 0; i < og.size(); ++i) s[i] += og[i] * a.at(i);
            }
        });
    }
    return out;
}

inline Tensor scale(Graph* g, const Tensor& a, double c) {
    Tensor out(a.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * c;
    if (g) {
        track(g, a);
        g->record(out, [a, c](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(a)) return;
            auto& s = gm.slot(a);
            for (size_t i = 0; i < og.size(); ++i) s[i] += og[i] * c;
        });
    }
    return out;
}

// x[m,n] + b[n], broadcast over rows.
inline Tensor add_bias_rows(Graph* g, const Tensor& x, const Tensor& b) {
    if (x.rank() != 2 || b.numel() != x.dim(1))
        throw ShapeError("add_bias_rows: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    const size_t m = x.dim(0), n = x.dim(1);
    Tensor out(x.shape());
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.at(i * n + j) = x.at(i * n + j) + b.at(j);
    if (g) {
        track(g, x);
        track(g, b);
        g->record(out, [x, b, m, n](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(x)) gm.add(x, og);
            if (wants_grad(b)) {
                auto& s = gm.slot(b);
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) s[j] += og[i * n + j];
            }
        });
    }
    return out;
}

// --------------------------------------------------------------- activations

inline Tensor relu(Graph* g, const Tensor& x) {
    Tensor out(x.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = x.at(i) > 0.0 ? x.at(i) : 0.0;
    if (g) {
        track(g, x);
        g->record(out, [x](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < og.size(); ++i)
                if (x.at(i) > 0.0) s[i] += og[i];
        });
    }
    return out;
}

// Exact GELU: x·Φ(x) with the Gaussian CDF, not the tanh fit.
inline Tensor gelu(Graph* g, const Tensor& x) {
    Tensor out(x.shape());
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (size_t i = 0; i < out.numel(); ++i) {
        const double v = x.at(i);
        out.at(i) = v * 0.5 * std::erfc(-v * inv_sqrt2);
    }
    if (g) {
        track(g, x);
        g->record(out, [x](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            constexpr double inv_sqrt2pi = 0.3989422804014326779;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < og.size(); ++i) {
                const double v = x.at(i);
                const double cdf = 0.5 * std::erfc(-v * 0.7071067811865475244);
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                s[i] += og[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

inline double sigmoid_scalar(double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline Tensor sigmoid(Graph* g, const Tensor& x) {
    Tensor out(x.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = sigmoid_scalar(x.at(i));
    if (g) {
        track(g, x);
        g->record(out, [x, out](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < og.size(); ++i) {
                const double y = out.at(i);
                s[i] += og[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

// Inverted dropout: survivors scaled by 1/(1−p) so eval mode is the identity.
inline Tensor dropout(Graph* g, const Tensor& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const double keep = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : keep;
    Tensor out(x.shape());
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) = x.at(i) * mask[i];
    if (g) {
        track(g, x);
        g->record(out, [x, mask = std::move(mask)](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < og.size(); ++i) s[i] += og[i] * mask[i];
        });
    }
    return out;
}

// ------------------------------------------------------------ linear algebra

inline Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    kernels::mm(a.data(), b.data(), out.data(), m, k, n);
    if (g) {
        track(g, a);
        track(g, b);
        g->record(out, [a, b, m, k, n](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(a)) kernels::mm_nt(og.data(), b.data(), gm.slot(a).data(), m, n, k);
            if (wants_grad(b)) kernels::mm_tn(a.data(), og.data(), gm.slot(b).data(), m, k, n);
        });
    }
    return out;
}

// a[m,k] · b[n,k]ᵀ -> [m,n]; the score product in attention.
inline Tensor matmul_nt(Graph* g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out({m, n});
    kernels::mm_nt(a.data(), b.data(), out.data(), m, k, n);
    if (g) {
        track(g, a);
        track(g, b);
        g->record(out, [a, b, m, k, n](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(a)) kernels::mm(og.data(), b.data(), gm.slot(a).data(), m, n, k);
            if (wants_grad(b)) kernels::mm_tn(og.data(), a.data(), gm.slot(b).data(), m, n, k);
        });
    }
    return out;
}

// x[m,k]·W[k,n] + b[n].
inline Tensor linear(Graph* g, const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(0) || b.numel() != W.dim(1))
        throw ShapeError("linear: " + shape_str(x.shape()) + " x " + shape_str(W.shape()) +
                         " + " + shape_str(b.shape()));
    const size_t m = x.dim(0), k = x.dim(1), n = W.dim(1);
    Tensor out({m, n});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.at(i * n + j) = b.at(j);
    kernels::mm(x.data(), W.data(), out.data(), m, k, n);
    if (g) {
        track(g, x);
        track(g, W);
        track(g, b);
        g->record(out, [x, W, b, m, k, n](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(x)) kernels::mm_nt(og.data(), W.data(), gm.slot(x).data(), m, n, k);
            if (wants_grad(W)) kernels::mm_tn(x.data(), og.data(), gm.slot(W).data(), m, k, n);
            if (wants_grad(b)) {
                auto& s = gm.slot(b);
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) s[j] += og[i * n + j];
            }
        });
    }
    return out;
}

// ----------------------------------------------------------- row-wise normals

inline Tensor softmax_rows(Graph* g, const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("softmax_rows: need rank-2, got " + shape_str(x.shape()));
    const size_t m = x.dim(0), n = x.dim(1);
    Tensor out(x.shape());
    for (size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        double mx = row[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) {
            const double e = std::exp(row[j] - mx);
            out.at(i * n + j) = e;
            sum += e;
        }
        for (size_t j = 0; j < n; ++j) out.at(i * n + j) /= sum;
    }
    if (g) {
        track(g, x);
        g->record(out, [x, out, m, n](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (size_t j = 0; j < n; ++j) dot += og[i * n + j] * out.at(i * n + j);
                for (size_t j = 0; j < n; ++j)
                    s[i * n + j] += out.at(i * n + j) * (og[i * n + j] - dot);
            }
        });
    }
    return out;
}

// Normalizes the last axis with population statistics, then affine gain/bias.
inline Tensor layer_norm(Graph* g, const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const size_t c = x.shape().back();
    if (gain.numel() != c || bias.numel() != c)
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " vs last axis " + std::to_string(c));
    const size_t rows = x.numel() / c;
    Tensor out(x.shape());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    for (size_t i = 0; i < rows; ++i) {
        const double* row = x.data() + i * c;
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (size_t j = 0; j < c; ++j) {
            const double h = (row[j] - mean) * is;
            xhat[i * c + j] = h;
            out.at(i * c + j) = gain.at(j) * h + bias.at(j);
        }
    }
    if (g) {
        track(g, x);
        track(g, gain);
        track(g, bias);
        g->record(out, [x, gain, bias, rows, c, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(gain)) {
                auto& s = gm.slot(gain);
                for (size_t i = 0; i < rows; ++i)
                    for (size_t j = 0; j < c; ++j) s[j] += og[i * c + j] * xhat[i * c + j];
            }
            if (wants_grad(bias)) {
                auto& s = gm.slot(bias);
                for (size_t i = 0; i < rows; ++i)
                    for (size_t j = 0; j < c; ++j) s[j] += og[i * c + j];
            }
            if (wants_grad(x)) {
                auto& s = gm.slot(x);
                for (size_t i = 0; i < rows; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (size_t j = 0; j < c; ++j) {
                        const double dh = og[i * c + j] * gain.at(j);
                        m1 += dh;
                        m2 += dh * xhat[i * c + j];
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    for (size_t j = 0; j < c; ++j) {
                        const double dh = og[i * c + j] * gain.at(j);
                        s[i * c + j] += (dh - m1 - xhat[i * c + j] * m2) * inv_std[i];
                    }
                }
            }
        });
    }
    return out;
}

// ----------------------------------------------------------------- reductions

inline Tensor sum_all(Graph* g, const Tensor& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) s += x.at(i);
    Tensor out = Tensor::scalar(s);
    if (g) {
        track(g, x);
        g->record(out, [x](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& sl = gm.slot(x);
            for (size_t i = 0; i < sl.size(); ++i) sl[i] += og[0];
        });
    }
    return out;
}

inline Tensor mean_all(Graph* g, const Tensor& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) s += x.at(i);
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(s * inv);
    if (g) {
        track(g, x);
        g->record(out, [x, inv](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& sl = gm.slot(x);
            for (size_t i = 0; i < sl.size(); ++i) sl[i] += og[0] * inv;
        });
    }
    return out;
}

// Column means of x[m,n] -> [n]; the pooling step over tokens.
inline Tensor mean_rows(Graph* g, const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("mean_rows: need rank-2, got " + shape_str(x.shape()));
    const size_t m = x.dim(0), n = x.dim(1);
    Tensor out({n});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.at(j) += x.at(i * n + j);
    const double inv = 1.0 / static_cast<double>(m);
    for (size_t j = 0; j < n; ++j) out.at(j) *= inv;
    if (g) {
        track(g, x);
        g->record(out, [x, m, n, inv](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) s[i * n + j] += og[j] * inv;
        });
    }
    return out;
}

// ----------------------------------------------------------------------- loss

// Mean over elements of max(x,0) − x·y + log(1+e^−|x|). Stable at any
// magnitude; gradient is (σ(x)−y)/n.
inline Tensor bce_with_logits(Graph* g, const Tensor& logits, const Tensor& targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    const size_t n = logits.numel();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double y = targets.at(i);
        if (y != 0.0 && y != 1.0)
            throw ValidationError("bce_with_logits: target " + std::to_string(y) +
                                  " is not 0 or 1");
        const double v = logits.at(i);
        total += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
    }
    const double inv = 1.0 / static_cast<double>(n);
    Tensor out = Tensor::scalar(total * inv);
    if (g) {
        track(g, logits);
        g->record(out, [logits, targets, n, inv](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(logits)) return;
            auto& s = gm.slot(logits);
            for (size_t i = 0; i < n; ++i)
                s[i] += og[0] * inv * (sigmoid_scalar(logits.at(i)) - targets.at(i));
        });
    }
    return out;
}

// --------------------------------------------------------------- convolutions

namespace kernels {

// Patch matrix for cross-correlation: cols[(c·kh+ki)·kw+kj][oy·Wo+ox].
inline void im2col(const double* x, size_t C, size_t H, size_t W, size_t kh, size_t kw,
                   size_t pad, size_t Ho, size_t Wo, double* cols) {
    for (size_t c = 0; c < C; ++c)
        for (size_t ki = 0; ki < kh; ++ki)
            for (size_t kj = 0; kj < kw; ++kj) {
                double* dst = cols + ((c * kh + ki) * kw + kj) * (Ho * Wo);
                for (size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(H)) {
                        std::fill(dst + oy * Wo, dst + (oy + 1) * Wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * H + iy) * W;
                    for (size_t ox = 0; ox < Wo; ++ox) {
                        const long ix = static_cast<long>(ox + kj) - static_cast<long>(pad);
                        dst[oy * Wo + ox] =
                            (ix < 0 || ix >= static_cast<long>(W)) ? 0.0 : src[ix];
                    }
                }
            }
}

inline void col2im_add(const double* cols, size_t C, size_t H, size_t W, size_t kh, size_t kw,
                       size_t pad, size_t Ho, size_t Wo, double* x) {
    for (size_t c = 0; c < C; ++c)
        for (size_t ki = 0; ki < kh; ++ki)
            for (size_t kj = 0; kj < kw; ++kj) {
                const double* src = cols + ((c * kh + ki) * kw + kj) * (Ho * Wo);
                for (size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                    double* dst = x + (c * H + iy) * W;
                    for (size_t ox = 0; ox < Wo; ++ox) {
                        const long ix = static_cast<long>(ox + kj) - static_cast<long>(pad);
                        if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += src[oy * Wo + ox];
                    }
                }
            }
}

} // namespace kernels

// Cross-correlation, stride 1. The patch matrix is rebuilt in backward rather
// than captured; it is the one large forward intermediate.
inline Tensor conv2d(Graph* g, const Tensor& x, const Tensor& w, const Tensor& b, size_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || x.dim(0) != w.dim(1))
        throw ShapeError("conv2d: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(w.shape()));
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (b.numel() != F)
        throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " vs " + std::to_string(F) +
                         " filters");
    if (H + 2 * pad < kh || W + 2 * pad < kw)
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " exceeds padded input " +
                         shape_str(x.shape()));
    const size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    const size_t K = C * kh * kw, N = Ho * Wo;

    std::vector<double> cols(K * N);
    kernels::im2col(x.data(), C, H, W, kh, kw, pad, Ho, Wo, cols.data());
    Tensor out({F, Ho, Wo});
    for (size_t f = 0; f < F; ++f)
        std::fill(out.data() + f * N, out.data() + (f + 1) * N, b.at(f));
    kernels::mm(w.data(), cols.data(), out.data(), F, K, N);

    if (g) {
        track(g, x);
        track(g, w);
        track(g, b);
        g->record(out, [x, w, b, C, H, W, F, kh, kw, pad, Ho, Wo, K,
                        N](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(b)) {
                auto& s = gm.slot(b);
                for (size_t f = 0; f < F; ++f)
                    for (size_t i = 0; i < N; ++i) s[f] += og[f * N + i];
            }
            if (wants_grad(w)) {
                std::vector<double> cols(K * N);
                kernels::im2col(x.data(), C, H, W, kh, kw, pad, Ho, Wo, cols.data());
                kernels::mm_nt(og.data(), cols.data(), gm.slot(w).data(), F, N, K);
            }
            if (wants_grad(x)) {
                std::vector<double> dcols(K * N, 0.0);
                kernels::mm_tn(w.data(), og.data(), dcols.data(), F, K, N);
                kernels::col2im_add(dcols.data(), C, H, W, kh, kw, pad, Ho, Wo,
                                    gm.slot(x).data());
            }
        });
    }
    return out;
}

inline Tensor upsample_nearest_2x(Graph* g, const Tensor& x) {
    if (x.rank() != 3)
        throw ShapeError("upsample_nearest_2x: need rank-3, got " + shape_str(x.shape()));
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor out({C, 2 * H, 2 * W});
    for (size_t c = 0; c < C; ++c)
        for (size_t i = 0; i < 2 * H; ++i)
            for (size_t j = 0; j < 2 * W; ++j)
                out.at((c * 2 * H + i) * 2 * W + j) = x.at((c * H + i / 2) * W + j / 2);
    if (g) {
        track(g, x);
        g->record(out, [x, C, H, W](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t c = 0; c < C; ++c)
                for (size_t i = 0; i < 2 * H; ++i)
                    for (size_t j = 0; j < 2 * W; ++j)
                        s[(c * H + i / 2) * W + j / 2] += og[(c * 2 * H + i) * 2 * W + j];
        });
    }
    return out;
}

// ------------------------------------------------------------------- movement

inline Tensor reshape_op(Graph* g, const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape_op: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), x.vec());
    if (g) {
        track(g, x);
        g->record(out, [x](const std::vector<double>& og, GradMap& gm) {
            if (wants_grad(x)) gm.add(x, og);
        });
    }
    return out;
}

// out row i = x row idx[i], where a row is everything after the first axis.
// Covers window partition/reverse, cyclic shifts and 2x2 regrouping once the
// caller supplies the permutation.
inline Tensor gather_rows(Graph* g, const Tensor& x, const std::vector<size_t>& idx,
                          Shape out_shape) {
    if (x.rank() < 1) throw ShapeError("gather_rows: rank-0 input");
    const size_t rows = x.dim(0), width = x.numel() / rows;
    if (shape_numel(out_shape) != idx.size() * width)
        throw ShapeError("gather_rows: out shape " + shape_str(out_shape) + " vs " +
                         std::to_string(idx.size()) + " rows of width " + std::to_string(width));
    Tensor out(std::move(out_shape));
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= rows)
            throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of " +
                             std::to_string(rows));
        std::copy(x.data() + idx[i] * width, x.data() + (idx[i] + 1) * width,
                  out.data() + i * width);
    }
    if (g) {
        track(g, x);
        g->record(out, [x, idx, width](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t j = 0; j < width; ++j) s[idx[i] * width + j] += og[i * width + j];
        });
    }
    return out;
}

// Fully general element gather: out flat i = x flat idx[i].
inline Tensor gather_elems(Graph* g, const Tensor& x, const std::vector<size_t>& idx,
                           Shape out_shape) {
    if (shape_numel(out_shape) != idx.size())
        throw ShapeError("gather_elems: out shape " + shape_str(out_shape) + " vs " +
                         std::to_string(idx.size()) + " indices");
    Tensor out(std::move(out_shape));
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.numel())
            throw ShapeError("gather_elems: index " + std::to_string(idx[i]) + " out of " +
                             std::to_string(x.numel()));
        out.at(i) = x.at(idx[i]);
    }
    if (g) {
        track(g, x);
        g->record(out, [x, idx](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < idx.size(); ++i) s[idx[i]] += og[i];
        });
    }
    return out;
}

inline Tensor transpose2d(Graph* g, const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose2d: need rank-2, got " + shape_str(x.shape()));
    const size_t m = x.dim(0), n = x.dim(1);
    Tensor out({n, m});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.at(j * m + i) = x.at(i * n + j);
    if (g) {
        track(g, x);
        g->record(out, [x, m, n](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) s[i * n + j] += og[j * m + i];
        });
    }
    return out;
}

// Column slice [c0, c1) of x[m,n].
inline Tensor slice_cols(Graph* g, const Tensor& x, size_t c0, size_t c1) {
    if (x.rank() != 2 || c1 > x.dim(1) || c0 >= c1)
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") of " + shape_str(x.shape()));
    const size_t m = x.dim(0), n = x.dim(1), w = c1 - c0;
    Tensor out({m, w});
    for (size_t i = 0; i < m; ++i)
        std::copy(x.data() + i * n + c0, x.data() + i * n + c1, out.data() + i * w);
    if (g) {
        track(g, x);
        g->record(out, [x, c0, m, n, w](const std::vector<double>& og, GradMap& gm) {
            if (!wants_grad(x)) return;
            auto& s = gm.slot(x);
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < w; ++j) s[i * n + c0 + j] += og[i * w + j];
        });
    }
    return out;
}

inline Tensor concat_cols(Graph* g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const size_t m = parts[0].dim(0);
    size_t n = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != m)
            throw ShapeError("concat_cols: row mismatch at " + shape_str(p.shape()));
        n += p.dim(1);
    }
    Tensor out({m, n});
    size_t off = 0;
    for (const auto& p : parts) {
        const size_t w = p.dim(1);
        for (size_t i = 0; i < m; ++i)
            std::copy(p.data() + i * w, p.data() + (i + 1) * w, out.data() + i * n + off);
        off += w;
    }
    if (g) {
        for (const auto& p : parts) track(g, p);
        g->record(out, [parts, m, n](const std::vector<double>& og, GradMap& gm) {
            size_t off = 0;
            for (const auto& p : parts) {
                const size_t w = p.dim(1);
                if (wants_grad(p)) {
                    auto& s = gm.slot(p);
                    for (size_t i = 0; i < m; ++i)
                        for (size_t j = 0; j < w; ++j) s[i * w + j] += og[i * n + off + j];
                }
                off += w;
            }
        });
    }
    return out;
}

// Concatenation along the first axis; trailing dims must agree. Used to stack
// channel planes.
inline Tensor concat_first(Graph* g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_first: no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    size_t d0 = 0;
    for (const auto& p : parts) {
        Shape t(p.shape().begin() + 1, p.shape().end());
        if (t != tail)
            throw ShapeError("concat_first: trailing dims mismatch at " + shape_str(p.shape()));
        d0 += p.dim(0);
    }
    Shape out_shape;
    out_shape.push_back(d0);
    out_shape.insert(out_shape.end(), tail.begin(), tail.end());
    Tensor out(std::move(out_shape));
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.numel(), out.data() + off);
        off += p.numel();
    }
    if (g) {
        for (const auto& p : parts) track(g, p);
        g->record(out, [parts](const std::vector<double>& og, GradMap& gm) {
            size_t off = 0;
            for (const auto& p : parts) {
                if (wants_grad(p)) {
                    auto& s = gm.slot(p);
                    for (size_t j = 0; j < p.numel(); ++j) s[j] += og[off + j];
                }
                off += p.numel();
            }
        });
    }
    return out;
}

} // namespace xfuse
