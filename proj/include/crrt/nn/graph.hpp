#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

#include "crrt/nn/tensor.hpp"

namespace crrt::nn {

template <class T>
class Graph;

/// Handle to a node recorded on a Graph.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// creation order is a valid topological order for backpropagation.
///
/// A graph is built for one forward pass and discarded after `backward`.
/// Parameters are referenced, not copied; they must outlive the graph.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  Graph() = default;
  /// With `track_grad == false` no backward closures are kept (inference only).
  explicit Graph(bool track_grad) : track_grad_(track_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) {
    check_finite("constant", value);
    nodes_.push_back(Node{std::move(value), {}, "constant", nullptr, nullptr, false});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Leaf for a parameter. Repeated calls with the same parameter return the same node.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, "param", nullptr, &p, track_grad_});
    int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return {this, id};
  }

  /// Appends an op result. `backward` runs only when some input needs a gradient.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<int> inputs, Backward backward) {
    return record(op, std::move(value), std::vector<int>(inputs), std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, const std::vector<int>& inputs, Backward backward) {
    check_finite(op, value);
    bool needs = false;
    for (int in : inputs) needs = needs || nodes_[in].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, op, needs ? std::move(backward) : Backward{}, nullptr, needs});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool wants(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Backpropagates from a scalar loss and writes d(loss)/d(value) into the
  /// `grad` of every parameter leaf on this graph (zero when unreachable).
  void backward(Var<T> loss) {
    if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
    if (!nodes_[loss.id].value.is_scalar()) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_string(nodes_[loss.id].value.shape()));
    }
    grad(loss.id).fill(T(1));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      check_finite(std::string(n.op) + " (backward)", n.grad);
      if (n.backward) n.backward(*this, id);
    }
    for (auto& [p, id] : param_nodes_) {
      Node& n = nodes_[id];
      if (n.grad.size() == n.value.size()) {
        p->grad = n.grad;
      } else {
        p->zero_grad();
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    const char* op;
    Backward backward;
    Parameter<T>* param;
    bool requires_grad;
  };

  template <class Name>
  static void check_finite(const Name& op, const Tensor<T>& t) {
    if (!t.all_finite()) throw NumericError(std::string(op), "non-finite value");
  }

  bool track_grad_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter<T>*, int> param_nodes_;
};

}  // namespace crrt::nn
