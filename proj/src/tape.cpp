#include "phantom/tape.hpp"

#include "phantom/error.hpp"

namespace phantom {

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Tape::parameter(const std::string& name, Tensor value) {
  if (params_.count(name)) throw Error("parameter '" + name + "' registered twice");
  Var v = record(std::move(value), {}, nullptr);
  params_.emplace(name, v.id);
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw Error("input refers to a node not on this tape");
    node.inputs.push_back(in.id);
  }
  node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, std::span<const double> delta) {
  auto g = nodes_[id].grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

GradientMap Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw Error("loss is not recorded on this tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     shape_to_string(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].rule) nodes_[i].rule(*this, i);
  }
  GradientMap grads;
  for (const auto& [name, id] : params_) grads.emplace(name, nodes_[id].grad);
  return grads;
}

}  // namespace phantom
