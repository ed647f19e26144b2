#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "epbc/params.hpp"
#include "epbc/tensor.hpp"

namespace epbc {

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr; }
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation
// order, which is a topological order by construction; backward() walks
// them once in reverse. Gradients accumulate additively until the grads
// are zeroed (tape discarded / ParamSet::zero_grads), so repeated
// backward calls sum their contributions.
//
// A tape is owned by one logical execution context. Tensors and
// parameters it reads are never mutated.
class Tape {
public:
    // Leaf whose gradient is kept on the tape (query with grad()).
    Var input(Tensor t);
    // Leaf that never receives a gradient.
    Var constant(Tensor t);
    // Leaf bound to a ParamSet entry: backward accumulates straight
    // into the entry's grad tensor.
    Var param(ParamSet& ps, const std::string& name);

    const Tensor& val(Var v) const;
    // Gradient accumulated so far (zeros if untouched).
    const Tensor& grad(Var v);

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be scalar.
    void backward(Var scalar_loss);

    size_t node_count() const { return nodes_.size(); }

    // --- internal (used by op implementations) -------------------------
    using BackFn = std::function<void(Tape&, const Tensor& gout)>;
    Var emplace(Tensor value, bool needs_grad, BackFn back);
    bool needs_grad(Var v) const;
    // Mutable gradient accumulator for a node; allocates zeros on first use.
    Tensor* grad_sink(int id);

private:
    struct Node {
        Tensor value;
        Tensor own_grad;          // persistent leaf accumulator, lazy
        Tensor* external_grad = nullptr;  // ParamSet-bound leaves
        bool has_grad_storage = false;
        bool needs_grad = false;
        BackFn back;
    };
    std::vector<std::unique_ptr<Node>> nodes_;
    // Per-backward-pass scratch; leaves flush into persistent storage so
    // each call contributes the gradient exactly once.
    std::vector<Tensor> pass_grads_;
    std::vector<char> pass_alloc_;
};

// ---- primitive operations -------------------------------------------

// Elementwise on identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var vmin(Var a, Var b);
Var vmax(Var a, Var b);

// b may have extent 1 on any axis where a does not; it is repeated.
Var mul_bcast(Var a, Var b);

Var scale(Var x, double k);
Var offset(Var x, double k);

Var relu(Var x);
Var sigmoid(Var x);
Var silu(Var x);
Var softplus(Var x);
// axis: 0=batch, 1=channel, 2=height, 3=width. Max-subtracted.
Var softmax(Var x, int axis);

Var sum_all(Var x);   // -> scalar
Var mean_all(Var x);  // -> scalar

// Zero padding. weight is Co x Ci/groups x k x k.
Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int pad,
           int groups = 1);

Var global_avg_pool2d(Var x);  // N x C x 1 x 1
Var avg_pool_rows(Var x);      // N x C x H x 1 (averages over W)
Var avg_pool_cols(Var x);      // N x C x 1 x W (averages over H)

// Training-mode batch norm normalizes per channel over N*H*W with the
// given eps, then applies the affine. The per-channel batch statistics
// are reported through batch_mean/batch_var when non-null so a training
// loop can maintain running stats; the op itself stays pure.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps,
                     Tensor* batch_mean = nullptr,
                     Tensor* batch_var = nullptr);
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps);
// Normalizes per (sample, group) over the group's channels and space.
Var group_norm(Var x, int n_groups, Var gamma, Var beta, double eps);

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(Var x, int c0, int c1);  // [c0, c1)
Var concat_rows(const std::vector<Var>& xs);
Var slice_rows(Var x, int h0, int h1);  // [h0, h1)
Var swap_hw(Var x);

Var nearest_upsample(Var x, int factor);
// N x (C*s^2) x H x W -> N x C x sH x sW; channel c*s^2 + dy*s + dx
// lands at output (c, s*y+dy, s*x+dx).
Var pixel_shuffle(Var x, int factor);

// Batched matrix product: (B,1,M,K) x (B,1,K,L) -> (B,1,M,L).
Var matmul(Var a, Var b);

Var reshape(Var x, Shape s);

// Per-cell channel vectors: picks (n, :, y, x) for each cell into a
// K x C x 1 x 1 tensor. Backward scatter-adds.
struct Cell {
    int n, y, x;
};
Var gather_cells(Var x, const std::vector<Cell>& cells);

// Elementwise binary cross-entropy with logits against constant targets:
// max(z,0) - z*y + log1p(exp(-|z|)).
Var bce_with_logits(Var logits, const Tensor& targets);

}  // namespace epbc
