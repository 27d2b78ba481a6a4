#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Calling backward() on a
// 1x1 result walks the tape in reverse and accumulates gradients into leaves
// and into the Parameter objects referenced by param() nodes. A tape is
// single-use and single-threaded; build a new one per forward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
};

// Ordered, name-addressable collection of learnable tensors. Iteration order is
// insertion order, which fixes the layout used by optimizers, EMA and
// checkpoints.
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix init);

    std::size_t size() const noexcept { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    std::size_t scalar_count() const;
    double grad_norm() const;
    void scale_grad(double factor);
    bool same_layout(const ParameterSet& other) const;
    // Copies values only; layouts must match.
    void assign_values(const ParameterSet& other);
    // FNV-1a over the raw bytes of every value, for cheap equality checks.
    std::uint64_t fingerprint() const;

private:
    std::vector<Parameter> params_;
};

struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

    explicit Tape(bool track_gradients = true) : tracking_(track_gradients) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    // Zero-copy constant; `value` must outlive the tape.
    Var constant_ref(const Matrix& value);
    // Differentiable input whose gradient can be read back with grad().
    Var leaf(Matrix value);
    // Gradients flow into p.grad on backward(). Treated as a constant when the
    // tape does not track gradients.
    Var param(Parameter& p);

    Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);

    const Matrix& value(Var v) const;
    const Matrix& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    bool tracking() const noexcept { return tracking_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    void backward(Var scalar_output);

    template <class Expr>
    void accumulate(Var v, const Expr& g) {
        Node& n = nodes_[v.id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        Parameter* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool tracking_;
};

namespace ag {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
// a (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(Tape& t, Var a, Var bias);
// x ((batch*frames) x c) + per_clip (batch x c), each clip row broadcast over its frames.
Var add_per_clip(Tape& t, Var x, Var per_clip, int frames);
// Per-row constant scaling: out[i, :] = factors[i] * a[i, :].
Var scale_rows(Tape& t, Var a, std::span<const double> factors);

Var silu(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope);
Var sigmoid(Tape& t, Var a);

Var concat_cols(Tape& t, Var a, Var b);
Var concat_cols(Tape& t, std::initializer_list<Var> parts);

// Unfolds a (batch*frames) x c sequence into (batch*out_frames) x (kernel*c)
// patches with zero padding. out_frames = (frames + 2*pad - kernel)/stride + 1.
Var im2col(Tape& t, Var x, int frames, int kernel, int stride, int pad);
// Nearest-neighbour x2 upsampling along time.
Var upsample2(Tape& t, Var x, int frames);
// Mean over the frames of each clip: (batch*frames) x c -> batch x c.
Var clip_mean(Tape& t, Var x, int frames);
// Scaled dot-product attention within each clip over its frames.
Var attention(Tape& t, Var q, Var k, Var v, int frames);
// Finite difference of the given order along time, within each clip:
// (batch*frames) x c -> (batch*(frames-order)) x c.
Var temporal_difference(Tape& t, Var x, int frames, int order);

Var sum(Tape& t, Var a);
Var sum_squares(Tape& t, Var a);
// Mean over all elements of (a - b)^2.
Var mean_squared_error(Tape& t, Var a, Var b);
// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Tape& t, Var logits, std::span<const int> labels);

}  // namespace ag

int conv_out_frames(int frames, int kernel, int stride, int pad);

}  // namespace motiondiff
