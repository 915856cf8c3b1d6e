#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vadd/diff/params.hpp"
#include "vadd/diff/tensor.hpp"

namespace vadd::diff {

using NodeId = std::size_t;

/// Append-only tape for reverse-mode differentiation.
///
/// One graph is built per forward pass and thrown away after `backward`.
/// Parameter leaves reference the ParamStore's tensors directly, so the
/// store must outlive the graph and must not be modified while it exists.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  NodeId constant(Tensor value);
  /// Leaf bound to `store.get(name)`; repeated calls return the same node.
  NodeId parameter(const ParamStore& store, const std::string& name);

  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::string_view kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of the last backward pass w.r.t. node `id`. Nodes the loss
  /// does not depend on report an all-zero tensor.
  Tensor grad(NodeId id) const;

  /// Used by operations: append a node. `fn` reads the node's gradient and
  /// accumulates into its inputs via `grad_buffer`. It is only called when
  /// some input requires a gradient.
  NodeId record(std::string_view kind, std::vector<NodeId> inputs, Tensor value, BackwardFn fn);
  /// Gradient accumulator for `id`, zero-allocated on first use.
  Tensor& grad_buffer(NodeId id);
  const Tensor& grad_ref(NodeId id) const { return grads_.at(id); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure
  /// once, newest first. Throws UsageError if `loss` is not a scalar.
  void backward(NodeId loss);

  /// Gradient for each entry of `store`; entries never bound to this graph
  /// or not reached by the loss get zeros.
  GradMap parameter_grads(const ParamStore& store) const;

 private:
  struct Node {
    std::string kind;
    std::vector<NodeId> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, NodeId> param_nodes_;
};

/// Runs `g.backward(loss)` and returns the gradient for every entry of `store`.
GradMap backward(Graph& g, NodeId loss, const ParamStore& store);

}  // namespace vadd::diff
