#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "phantom/rng.hpp"
#include "phantom/tensor.hpp"

namespace phantom {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

using GradientMap = std::map<std::string, Tensor>;

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. After backward() every node carries the gradient of the
/// loss with respect to its value.
class Tape {
 public:
  /// Propagates the node's output gradient into the gradients of its inputs.
  using BackwardRule = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
  };

  Var constant(Tensor value);
  /// Registers a named trainable leaf. Names must be unique per tape.
  Var parameter(const std::string& name, Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  /// Adds `delta` into the gradient buffer of node `id`.
  void accumulate(std::size_t id, std::span<const double> delta);

  /// Reverse sweep from a scalar loss. Returns the gradient of every
  /// registered parameter; unreachable parameters get zeros.
  GradientMap backward(Var loss);

  const std::map<std::string, std::size_t>& parameters() const noexcept { return params_; }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

namespace ops {

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var sum(Tape& tape, Var a);
Var reshape(Tape& tape, Var a, Shape shape);

/// input [batch, in] x weights [in, out] + bias [out].
Var dense(Tape& tape, Var input, Var weights, Var bias);
/// Stride-1 cross-correlation over a zero-padded input.
/// input [batch, cin, h, w], kernels [cout, cin, kh, kw], bias [cout].
Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t padding);
/// Disjoint 2x2 windows; ties go to the first maximum in row-major order.
Var maxpool2x2(Tape& tape, Var input);
Var relu(Tape& tape, Var input);
/// Inverted dropout. Identity when !training or rate == 0.
Var dropout(Tape& tape, Var input, double rate, bool training, Rng& rng);

/// [batch, k, ...] -> [batch, ...] mean over the member axis.
Var mean_members(Tape& tape, Var input);
/// [batch, k, ...] -> [batch, ...] slice at member `index`.
Var select_member(Tape& tape, Var input, std::size_t index);

/// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels);

}  // namespace ops

}  // namespace phantom
