#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "oasflow/tensor.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Tape — eager reverse-mode differentiation.
//
// Operations execute immediately and push an adjoint closure; backward()
// replays the closures in reverse record order, then flushes node gradients
// into the bound Params (accumulating, so repeated backward calls without
// zero_grads add up). One tape per training step, single-threaded replay.
// ---------------------------------------------------------------------------

class Tape {
 public:
  using Id = int32_t;

  /// Constant input (gradient is tracked internally but goes nowhere).
  Id leaf(Tensor4 value) {
    nodes_.push_back(Node{std::move(value), Tensor4(), nullptr});
    return static_cast<Id>(nodes_.size() - 1);
  }

  /// Leaf bound to an external Param; one node per Param per tape, so each
  /// use accumulates into the same node and flushes exactly once per use.
  Id param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    nodes_.push_back(Node{p.value, Tensor4(), &p});
    const Id id = static_cast<Id>(nodes_.size() - 1);
    param_nodes_[&p] = id;
    return id;
  }

  const Tensor4& value(Id id) const { return nodes_[id].value; }
  Tensor4& mutable_value(Id id) { return nodes_[id].value; }

  /// Gradient buffer of a node; valid during/after backward().
  Tensor4& grad(Id id) { return nodes_[id].grad; }
  const Tensor4& grad(Id id) const { return nodes_[id].grad; }

  /// Allocates the output node and registers the adjoint closure. At replay
  /// the closure receives the tape and its own output id; it must accumulate
  /// (+=) into input grads.
  Id emit(Tensor4 output, std::function<void(Tape&, Id)> adjoint) {
    nodes_.push_back(Node{std::move(output), Tensor4(), nullptr});
    const Id id = static_cast<Id>(nodes_.size() - 1);
    records_.push_back(Record{id, std::move(adjoint)});
    return id;
  }

  /// Seeds d(loss)/d(loss) = 1, replays adjoints in reverse record order, and
  /// accumulates node gradients into every bound Param.
  void backward(Id loss) {
    if (nodes_[loss].value.numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          nodes_[loss].value.shape_str());
    for (auto& node : nodes_) {
      node.grad = Tensor4::zeros_like(node.value);
    }
    nodes_[loss].grad.data[0] = 1.0f;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->adjoint(*this, it->output);
    }
    for (auto& node : nodes_) {
      if (node.bound == nullptr) continue;
      float* dst = node.bound->grad.data.data();
      const float* src = node.grad.data.data();
      const int64_t len = node.grad.numel();
      for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    Param* bound;
  };
  struct Record {
    Id output;
    std::function<void(Tape&, Id)> adjoint;
  };

  // deque: node references stay valid while new nodes are emitted.
  std::deque<Node> nodes_;
  std::vector<Record> records_;
  std::unordered_map<const Param*, Id> param_nodes_;
};

}  // namespace oasflow
