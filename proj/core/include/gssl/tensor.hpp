#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gssl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;
struct TensorImpl;

// Record of the primitive that produced a tensor. `backward` reads the
// output's gradient and accumulates into the inputs that require grad.
struct Node {
    const char* name = "";
    std::vector<Tensor> inputs;
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};

// Reference-semantics handle to a dense row-major float64 array that can take
// part in a reverse-mode differentiation graph. Copies share storage; use
// clone() or detach() for an independent value.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_vector(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value = true);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    bool is_leaf() const;
    const std::shared_ptr<Node>& node() const;

    // New leaf holding a copy of the values; no gradient history.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    // Populates gradients on every reachable leaf that requires grad.
    // Repeated calls accumulate into leaf gradients.
    void backward() const;

    TensorImpl* impl() const { return impl_.get(); }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

namespace detail {

// Builds an output tensor and, when grad mode is on and some input requires
// grad, attaches a node with the given backward rule.
Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

// Adds `delta` into t's gradient buffer if t requires grad.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

// Returns t's gradient buffer (allocated and zeroed on first use), or an empty
// span when t does not require grad.
std::span<double> grad_buffer(const Tensor& t);

}  // namespace detail

}  // namespace gssl
