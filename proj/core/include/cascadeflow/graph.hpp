#pragma once

#include "cascadeflow/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace cascadeflow::ad {

// Precomputed rotary tables for one token grid: cos/sin of the per-pair
// phase angles, laid out [rows, half] where half = head_dim / 2. The same
// table applies to every attention head.
struct RopeTables {
    std::int64_t rows = 0;
    std::int64_t half = 0;
    std::vector<double> cos_t;
    std::vector<double> sin_t;
};

// Small tape-based reverse-mode automatic differentiation over dense double
// tensors. Nodes are created in topological order by construction; backward
// walks the tape in reverse. Attention recomputes its softmax rows in the
// backward pass instead of storing them, so memory stays O(tokens * dim).
class Graph {
public:
    using Id = std::int32_t;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Id input(Tensor value, bool requires_grad = false);

    const Tensor& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    // Valid after backward(); zeros if the node never received gradient.
    const Tensor& grad_of(Id id);
    bool requires_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].rg; }
    std::size_t size() const { return nodes_.size(); }

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);  // elementwise
    Id scale(Id a, double s);
    // a [p,q] x b [q,r] -> [p,r]
    Id matmul(Id a, Id b);
    // x [m,in], w [out,in], bias [out] -> [m,out]; y = x w^T + bias
    Id linear(Id x, Id w, Id bias);
    // Per-row normalization over the last axis, no affine part.
    Id layer_norm(Id x, double eps = 1e-6);
    Id silu(Id x);
    // x [m,c], scale/shift [1,c]: y = x * (1 + scale) + shift, rows broadcast.
    Id row_affine(Id x, Id scale_row, Id shift_row);
    // x [m,c], gate [1,c]: y = x * gate.
    Id row_scale(Id x, Id gate_row);
    // x [1,n] -> [1, hi-lo]
    Id slice_cols(Id x, std::int64_t lo, std::int64_t hi);
    // table [v,c], row index -> [1,c]
    Id table_row(Id table, std::int64_t row);
    // Rotary position application; tables must outlive the graph.
    Id rope(Id x, const RopeTables* tables, std::int64_t heads);
    // Fused multi-head self-attention over q,k,v [m, dim], dim % heads == 0.
    Id attention(Id q, Id k, Id v, std::int64_t heads);
    // Mean squared error against a constant target; scalar output [1].
    Id mse(Id pred, Tensor target);

    // Seeds d(root)=1 (root must be scalar) and propagates down the tape.
    void backward(Id root);

private:
    using BwdFn = std::function<void(Graph&, Id)>;
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily
        bool rg = false;
        BwdFn bwd;
    };
    std::vector<Node> nodes_;

    Id push(Tensor value, bool rg, BwdFn bwd);
    Tensor& grad_buf(Id id);      // allocate-on-touch
    bool grad_live(Id id) const;  // grad buffer exists
    const Tensor& v(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
};

}  // namespace cascadeflow::ad
