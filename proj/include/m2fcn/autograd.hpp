#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "m2fcn/tensor.hpp"

namespace m2fcn {

/// A named, owned array of learnable values. Networks own their parameters;
/// graphs only refer to them, so a Parameter must outlive any Graph that
/// registered it.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Graph;

/// Handle to one node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient table produced by Graph::backward, keyed by parameter identity.
class Gradients {
 public:
  Tensor of(const Parameter& p) const {
    auto it = table_.find(&p);
    return it == table_.end() ? Tensor::zeros_like(p.value) : it->second;
  }
  bool contains(const Parameter& p) const { return table_.count(&p) != 0; }
  const std::map<const Parameter*, Tensor>& table() const { return table_; }

 private:
  friend class Graph;
  std::map<const Parameter*, Tensor> table_;
};

/// Reverse-mode differentiation tape. Nodes are appended in creation order,
/// which is a topological order, so the graph cannot contain a cycle.
class Graph {
 public:
  // Receives the upstream gradient of the node and one pointer per input;
  // a null pointer marks an input that does not need a gradient.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor*>& grad_in)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
    return Var(this, nodes_.size() - 1);
  }

  // A parameter registered without requires_grad acts as a constant for
  // backward but still reports a zero entry in the gradient table.
  Var parameter(Parameter& p, bool requires_grad = true) {
    nodes_.push_back(Node{p.value, {}, nullptr, &p, requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) throw NumericError("operation produced a non-finite value");
    Node node{std::move(value), {}, std::move(backward), nullptr, false};
    node.inputs.reserve(inputs.size());
    for (const auto& v : inputs) {
      if (&v.graph() != this) throw Error("operation mixes nodes from different graphs");
      node.inputs.push_back(v.id());
      node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    }
    if (!node.requires_grad) node.backward = nullptr;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Piecewise-linear ops (ReLU masks, pooling argmaxes) fold their active
  // pattern in here; two evaluations with equal signatures lie on the same
  // linear piece.
  void note_kink_pattern(std::uint64_t h) {
    kink_signature_ ^= h + 0x9e3779b97f4a7c15ULL + (kink_signature_ << 6) + (kink_signature_ >> 2);
  }
  std::uint64_t kink_signature() const { return kink_signature_; }

  Gradients backward(const Var& root) {
    if (&root.graph() != this) throw Error("backward root belongs to another graph");
    if (!nodes_[root.id()].value.is_scalar()) {
      throw ShapeError("backward root must be scalar, got " + shape_string(nodes_[root.id()].value.shape()));
    }
    std::vector<Tensor> grads(root.id() + 1);
    grads[root.id()] = Tensor(nodes_[root.id()].value.shape(), 1.0);

    Gradients out;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.param != nullptr) {
        auto [it, inserted] = out.table_.try_emplace(node.param, Tensor::zeros_like(node.param->value));
        if (!grads[i].empty()) it->second += grads[i];
        continue;
      }
      if (grads[i].empty() || !node.backward) continue;
      std::vector<Tensor*> grad_in(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].empty()) grads[in] = Tensor::zeros_like(nodes_[in].value);
        grad_in[k] = &grads[in];
      }
      node.backward(grads[i], grad_in);
      grads[i] = Tensor();
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::uint64_t kink_signature_ = 0;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

}  // namespace m2fcn
