#include "vadd/diff/graph.hpp"

#include <string>

#include "vadd/error.hpp"

namespace vadd::diff {

NodeId Graph::constant(Tensor value) {
  Node n;
  n.kind = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return nodes_.size() - 1;
}

NodeId Graph::parameter(const ParamStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return it->second;
  Node n;
  n.kind = "parameter";
  n.external = &store.get(name);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  const NodeId id = nodes_.size() - 1;
  param_nodes_.emplace(name, id);
  return id;
}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor Graph::grad(NodeId id) const {
  const Tensor& g = grads_.at(id);
  if (g.size() == 0 && value(id).size() != 0) return Tensor(value(id).shape());
  return g;
}

NodeId Graph::record(std::string_view kind, std::vector<NodeId> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.kind = std::string(kind);
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw UsageError("graph: input node does not exist");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.owned = std::move(value);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return nodes_.size() - 1;
}

Tensor& Graph::grad_buffer(NodeId id) {
  Tensor& g = grads_.at(id);
  if (g.size() == 0 && value(id).size() != 0) g = Tensor(value(id).shape());
  return g;
}

void Graph::backward(NodeId loss) {
  if (value(loss).size() != 1) throw UsageError("backward: loss node is not a scalar");
  for (Tensor& g : grads_) g = Tensor();
  grad_buffer(loss)[0] = 1.0;
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.backward || grads_[id].size() == 0) continue;
    n.backward(*this, id);
  }
}

GradMap Graph::parameter_grads(const ParamStore& store) const {
  GradMap out;
  for (const auto& [name, tensor] : store.entries()) {
    auto it = param_nodes_.find(name);
    if (it == param_nodes_.end() || grads_[it->second].size() == 0) {
      out.emplace(name, Tensor(tensor.shape()));
    } else {
      out.emplace(name, grads_[it->second]);
    }
  }
  return out;
}

GradMap backward(Graph& g, NodeId loss, const ParamStore& store) {
  g.backward(loss);
  return g.parameter_grads(store);
}

}  // namespace vadd::diff
