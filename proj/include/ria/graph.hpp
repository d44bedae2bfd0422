#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ria/tensor.hpp"

namespace ria {

/// Handle to a node of a Graph. Only meaningful with the graph that made it.
struct Var {
    std::uint32_t id = 0;
};

/// Define-by-run reverse-mode autodiff tape.
///
/// Every operation evaluates eagerly and appends one node. Node ids are
/// assigned in creation order, which is a topological order, and backward
/// walks them in reverse. Reductions always run left to right over the flat
/// buffer, so rebuilding the same expression on the same inputs reproduces
/// values and gradients bit for bit.
///
/// Parameters are bound by reference: `parameter(t)` reads `t.data` in place
/// and `backward` accumulates into `t.grad`. Binding the same tensor twice
/// returns the same node.
template <typename Real>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor<Real> value);
    Var input(Tensor<Real> value, bool requires_grad);
    Var parameter(Tensor<Real>& param);

    std::span<const Real> value(Var v) const;
    const Shape& shape(Var v) const { return nodes_[v.id].shape; }
    Tensor<Real> tensor(Var v) const;
    Real scalar(Var v) const;

    /// Gradient of the last backward pass w.r.t. `v`; zeros if none reached it.
    std::vector<Real> grad(Var v) const;

    void backward(Var loss);

    /// Tensors bound with `parameter`, in binding order.
    std::vector<const Tensor<Real>*> bound_parameters() const {
        std::vector<std::pair<std::uint32_t, const Tensor<Real>*>> order;
        for (const auto& [t, id] : bound_) order.emplace_back(id, t);
        std::sort(order.begin(), order.end());
        std::vector<const Tensor<Real>*> out;
        for (const auto& [id, t] : order) out.push_back(t);
        return out;
    }

    std::size_t size() const { return nodes_.size(); }

    // -- linear algebra ----------------------------------------------------
    Var matmul(Var a, Var b);
    Var transpose(Var a);

    // -- elementwise; b may match a's shape or a trailing suffix of it -----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, Real factor);
    Var sigmoid(Var a);
    Var silu(Var a);
    Var exp(Var a);
    Var log(Var a);

    // -- structure --------------------------------------------------------
    Var concat(std::span<const Var> parts);  // last axis
    std::vector<Var> split(Var a, std::span<const std::size_t> widths);
    Var slice_cols(Var a, std::size_t begin, std::size_t width);
    Var concat_rows(std::span<const Var> parts);
    Var gather_rows(Var table, std::span<const std::size_t> indices);
    Var reshape(Var a, Shape shape);

    // -- reductions -------------------------------------------------------
    Var sum(Var a);
    Var mean(Var a);

    // -- fused blocks -----------------------------------------------------
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, Real eps);
    /// Rows [q, k_j, q - k_j, q * k_j] for each key row k_j; q is [1 x d].
    Var pair_features(Var query, Var keys);
    /// Mean binary cross-entropy of sigmoid(logits) against labels.
    Var bce_with_logits(Var logits, std::span<const Real> labels);

private:
    struct Node {
        Shape shape;
        std::vector<Real> value;
        std::vector<Real> grad;
        Tensor<Real>* param = nullptr;
        bool needs_grad = false;
        std::function<void(Graph&, std::uint32_t)> backward;
    };

    Var push(Shape shape, std::vector<Real> value, bool needs_grad,
             std::function<void(Graph&, std::uint32_t)> backward);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }
    std::span<Real> acc(Var v);
    std::span<const Real> out_grad(std::uint32_t id) const { return nodes_[id].grad; }
    std::span<const Real> out_value(std::uint32_t id) const { return value(Var{id}); }

    Var broadcast_binary(Var a, Var b, int kind);
    Var unary(Var a, int kind);

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor<Real>*, std::uint32_t> bound_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ria
