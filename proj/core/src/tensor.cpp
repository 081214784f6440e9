#include "gssl/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gssl {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::full(Shape shape, double value) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(shape_numel(shape), value);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::from_vector(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("Tensor::from_vector: shape " + shape_to_string(shape) +
                                    " holds " + std::to_string(shape_numel(shape)) +
                                    " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_vector({}, {value}); }

const Shape& Tensor::shape() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::item: expected one element, shape " +
                                    shape_to_string(shape()));
    }
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw std::invalid_argument("Tensor::at: rank mismatch");
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw std::out_of_range("Tensor::at: index out of range");
        offset = offset * s[axis] + i;
        ++axis;
    }
    return impl_->data[offset];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    if (impl_->node) throw std::logic_error("Tensor::set_requires_grad: only valid on leaves");
    impl_->requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->grad;
}

std::span<double> Tensor::mutable_grad() { return detail::grad_buffer(*this); }

void Tensor::zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return !impl_ || !impl_->node; }

const std::shared_ptr<Node>& Tensor::node() const {
    static const std::shared_ptr<Node> none;
    return impl_ ? impl_->node : none;
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape();
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

void Tensor::backward() const {
    if (!impl_) throw std::logic_error("Tensor::backward: undefined tensor");
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::backward: root must be a scalar, got shape " +
                                    shape_to_string(shape()));
    }
    if (!impl_->requires_grad) return;

    // Iterative post-order DFS; each impl is visited once.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        if (t->node && next < t->node->inputs.size()) {
            TensorImpl* child = t->node->inputs[next++].impl();
            if (child && child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(t);
        stack.pop_back();
    }

    for (TensorImpl* t : order) {
        if (t->node) t->grad.assign(t->data.size(), 0.0);
    }
    if (impl_->node) {
        impl_->grad[0] = 1.0;
    } else {
        if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
        impl_->grad[0] += 1.0;
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (!t->node) continue;
        t->node->backward(*t);
        if (t != impl_.get()) {
            t->grad.clear();
            t->grad.shrink_to_fit();
        }
    }
    if (impl_->node) impl_->grad.clear();
}

namespace detail {

Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    }
    if (needs_grad) {
        auto node = std::make_shared<Node>();
        node->name = name;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
        impl->node = std::move(node);
        impl->requires_grad = true;
    }
    return Tensor(std::move(impl));
}

std::span<double> grad_buffer(const Tensor& t) {
    TensorImpl* impl = t.impl();
    if (!impl || !impl->requires_grad) return {};
    if (impl->grad.size() != impl->data.size()) impl->grad.assign(impl->data.size(), 0.0);
    return impl->grad;
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
    auto g = grad_buffer(t);
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

}  // namespace gssl
