#pragma once

#include <cmath>
#include <map>
#include <string>

#include "rng.hpp"
#include "tensor.hpp"

namespace xfuse {

// Name-ordered on purpose: iteration order fixes the reduction and update
// order, which keeps whole training runs bit-reproducible.
using ModelParams = std::map<std::string, Tensor>;

inline Tensor make_param(Shape shape, double fill = 0.0) {
    Tensor t(std::move(shape), fill);
    t.set_requires_grad(true);
    return t;
}

// Uniform fan-based init for projection and conv weights.
inline Tensor glorot_uniform(Shape shape, size_t fan_in, size_t fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-limit, limit);
    t.set_requires_grad(true);
    return t;
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the customary bias init. Biases drawn
// this way keep constant-input tokens off layer norm's zero-variance point.
inline Tensor fan_in_uniform(Shape shape, size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-limit, limit);
    t.set_requires_grad(true);
    return t;
}

inline void zero_grads(ModelParams& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

struct SgdState {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::map<std::string, std::vector<double>> velocity;

    void attach(const ModelParams& params) {
        velocity.clear();
        for (const auto& [name, p] : params) velocity.emplace(name, std::vector<double>(p.numel(), 0.0));
    }
};

// v <- momentum*v + grad + wd*param; param <- param - lr*v
inline void sgd_step(ModelParams& params, SgdState& state) {
    if (state.lr <= 0.0) throw ConfigError("sgd_step: lr must be positive");
    if (state.momentum < 0.0 || state.momentum >= 1.0)
        throw ConfigError("sgd_step: momentum must be in [0,1)");
    if (state.weight_decay < 0.0) throw ConfigError("sgd_step: weight_decay must be non-negative");
    for (auto& [name, p] : params) {
        if (!p.has_grad())
            throw ContractError("sgd_step: no gradient for parameter '" + name + "'");
        auto it = state.velocity.find(name);
        if (it == state.velocity.end())
            throw ContractError("sgd_step: no velocity buffer for parameter '" + name + "'");
        auto& v = it->second;
        const auto& grad = p.grad_ref();
        double* w = p.data();
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = state.momentum * v[i] + grad[i] + state.weight_decay * w[i];
            w[i] -= state.lr * v[i];
        }
    }
}

// Effective rate at a 1-based epoch: base * factor^(#milestones <= epoch).
inline double lr_at_epoch(double base_lr, const std::vector<size_t>& milestones, double factor,
                          size_t epoch) {
    double lr = base_lr;
    for (size_t m : milestones)
        if (m <= epoch) lr *= factor;
    return lr;
}

inline std::vector<size_t> default_milestones(size_t epochs) {
    if (epochs < 2) return {};
    auto at = [epochs](double f) {
        return static_cast<size_t>(std::ceil(f * static_cast<double>(epochs)));
    };
    std::vector<size_t> ms;
    ms.push_back(at(0.6));
    if (at(0.85) > ms.back()) ms.push_back(at(0.85));
    return ms;
}

} // namespace xfuse
