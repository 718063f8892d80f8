#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gatk/tensor.hpp"

namespace gatk {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

enum class Padding { Valid, Same };

/// Append-only record of a computation, differentiated in reverse.
///
/// Records are appended after their inputs, so reverse insertion order is a
/// reverse topological order of the (acyclic) record graph. Gradients flowing
/// into a shared record are accumulated, never overwritten.
class Tape {
public:
    /// Propagates an upstream gradient from record `self` into its inputs.
    using BackwardFn = std::function<void(Tape& tape, const Tensor& upstream)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf (gradients are collected for it).
    Var input(Tensor value);
    /// Non-differentiable leaf owning its value.
    Var constant(Tensor value);
    /// Non-differentiable leaf borrowing `value`; it must outlive the tape.
    Var constant_ref(const Tensor& value);
    /// Leaf whose gradient is collected but whose value is borrowed.
    Var parameter_ref(const Tensor& value);

    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    /// Accumulated gradient of the last backward pass (zeros if none reached it).
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse pass from a single-element record, seeded with 1.
    void backward(Var loss);

    /// Adds `g` into the gradient slot of record `id`; no-op when the record
    /// does not require a gradient.
    void accumulate(std::size_t id, const Tensor& g);
    /// Same as accumulate, moving the tensor in when the slot is empty.
    void accumulate(std::size_t id, Tensor&& g);
    bool wants_grad(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_transpose_a(const Tensor& a, const Tensor& b);  // a^T * b

Tensor conv2d(const Tensor& x, const Tensor& kernels, Padding padding);
Tensor conv2d_input_grad(const Tensor& upstream, const Tensor& kernels, const Shape& input_shape,
                         Padding padding);
Tensor conv2d_kernel_grad(const Tensor& upstream, const Tensor& x, const Shape& kernel_shape,
                          Padding padding);

Tensor relu(const Tensor& x);
Tensor avgpool2(const Tensor& x);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace kernels

namespace ad {

Var matmul(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
/// x[m x n] + bias[n] broadcast across rows.
Var add_bias(Tape& tape, Var x, Var bias);
/// x[C x H x W] + bias[C] broadcast across each channel plane.
Var add_channel_bias(Tape& tape, Var x, Var bias);
Var scale(Tape& tape, Var x, double k);
Var relu(Tape& tape, Var x);
Var avgpool2(Tape& tape, Var x);
Var conv2d(Tape& tape, Var x, Var kernels, Padding padding);
Var reshape(Tape& tape, Var x, Shape shape);
/// Arithmetic mean of same-shaped records.
Var mean(Tape& tape, std::span<const Var> xs);
/// Scalar sum_i w_i * x_i with a fixed weight tensor.
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);
/// Scalar (x - target)^2 for a single-element x.
Var squared_error(Tape& tape, Var x, double target);
/// -log softmax(logits)[label], stabilised by max subtraction.
Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t label);

}  // namespace ad

double softmax_cross_entropy(std::span<const double> logits, std::size_t label);

/// Reverse-mode gradient of a scalar function built on a fresh tape.
Tensor reverse_gradient(const std::function<Var(Tape&, Var)>& fn, const Tensor& x);

/// Central-difference gradient estimate, one coordinate at a time.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace gatk
