#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace xfuse {

// Gradient side table keyed by storage identity. Backward passes write here
// instead of into the tensors themselves, so several graphs can run backward
// concurrently over shared parameters without touching shared state.
class GradMap {
  public:
    std::vector<double>* find(const TensorImpl* impl) {
        auto it = slots_.find(impl);
        return it == slots_.end() ? nullptr : &it->second;
    }

    std::vector<double>& slot(const TensorImpl* impl, size_t numel) {
        auto it = slots_.find(impl);
        if (it == slots_.end()) it = slots_.emplace(impl, std::vector<double>(numel, 0.0)).first;
        return it->second;
    }

    std::vector<double>& slot(const Tensor& t) { return slot(t.impl(), t.numel()); }

    void add(const Tensor& t, const std::vector<double>& g) {
        auto& s = slot(t.impl(), t.numel());
        for (size_t i = 0; i < g.size(); ++i) s[i] += g[i];
    }

    size_t size() const { return slots_.size(); }

  private:
    std::unordered_map<const TensorImpl*, std::vector<double>> slots_;
};

// Tape of recorded ops. Each step owns a closure that maps the output's
// gradient to gradient contributions on its inputs. Replaying the tape in
// reverse is the whole of backprop.
class Graph {
  public:
    using BackwardFn = std::function<void(const std::vector<double>& out_grad, GradMap& grads)>;

    void record(const Tensor& out, BackwardFn fn) {
        out.impl()->tracked = true;
        steps_.push_back({out.impl()->shared_from_this(), std::move(fn)});
    }

    size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape. Gradients for tensors
    // flagged requires_grad are also accumulated into their .grad buffers
    // unless a caller-owned map is supplied.
    void backward(const Tensor& loss, GradMap* into = nullptr) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
        GradMap local;
        GradMap& grads = into ? *into : local;
        grads.slot(loss.impl(), 1)[0] += 1.0;

        for (size_t i = steps_.size(); i-- > 0;) {
            auto& step = steps_[i];
            std::vector<double>* g = grads.find(step.out.get());
            if (!g) continue;
            step.backward(*g, grads);
        }

        if (!into) {
            for (auto& step : steps_) flush_leaf(grads, step.out.get());
            flush_inputs(grads);
        }
    }

    // Tracks a graph input so its .grad gets populated even though no step
    // outputs it. Ops call this for requires_grad leaves automatically.
    void track_leaf(const Tensor& t) { leaves_.push_back(t.impl()->shared_from_this()); }

  private:
    struct Step {
        std::shared_ptr<TensorImpl> out;
        BackwardFn backward;
    };

    void flush_leaf(GradMap& grads, TensorImpl* impl) {
        if (!impl->requires_grad) return;
        std::vector<double>* g = grads.find(impl);
        if (!g) return;
        impl->ensure_grad();
        for (size_t i = 0; i < g->size(); ++i) impl->grad[i] += (*g)[i];
        g->assign(g->size(), 0.0);
    }

    void flush_inputs(GradMap& grads) {
        for (auto& leaf : leaves_) flush_leaf(grads, leaf.get());
    }

    std::vector<Step> steps_;
    std::vector<std::shared_ptr<TensorImpl>> leaves_;
};

} // namespace xfuse
