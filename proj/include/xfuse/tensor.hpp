#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace xfuse {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

struct TensorImpl : std::enable_shared_from_this<TensorImpl> {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;
    bool tracked = false; // set once this storage participates in a recorded graph

    size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Value-semantics handle over shared storage. Copies alias; use clone() for a
// deep copy. Gradients live on the impl so every alias sees them.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : impl_(std::make_shared<TensorImpl>()) {
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_numel(impl_->shape), fill);
    }

    Tensor(Shape shape, std::vector<double> data)
        : impl_(std::make_shared<TensorImpl>()) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor: data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    size_t dim(size_t i) const { return impl_->shape.at(i); }
    size_t rank() const { return impl_->shape.size(); }
    size_t numel() const { return impl_->numel(); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& vec() { return impl_->data; }
    const std::vector<double>& vec() const { return impl_->data; }

    double& at(size_t i) { return impl_->data[i]; }
    double at(size_t i) const { return impl_->data[i]; }

    double item() const {
        if (numel() != 1)
            throw ContractError("item: tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad_ref() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    }

    TensorImpl* impl() const { return impl_.get(); }

    // Same storage, new shape. Element count must agree.
    Tensor reshape(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("reshape: cannot view " + shape_str(impl_->shape) + " as " +
                             shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>(*impl_);
        t.impl_->shape = std::move(shape);
        t.impl_->tracked = false;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>(*impl_);
        t.impl_->tracked = false;
        return t;
    }

  private:
    std::shared_ptr<TensorImpl> impl_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

} // namespace xfuse
