#pragma once

// Reverse-mode differentiation over an immutable dataflow graph.
//
// Every differentiable primitive records a node holding its value, its
// inputs and a backward closure. Backward closures are written in terms of
// the same primitives, so running them with `create_graph` records the
// gradient computation itself and it can be differentiated again. Ops whose
// backward works on raw buffers mark themselves as first-order only.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aldk/tensor.hpp"

namespace aldk {

class Var;

struct BackwardArgs {
  const Var& grad;               // d(root)/d(output)
  std::span<const Var> inputs;   // detached unless a graph is being built
  const Var& output;
  const std::vector<bool>& needs;  // which input gradients are wanted
};

/// Returns one gradient per input; an undefined Var means "no contribution".
using BackwardFn = std::function<std::vector<Var>(const BackwardArgs&)>;

struct Node {
  std::shared_ptr<const Tensor> value;
  std::vector<Var> inputs;
  const char* op = "leaf";
  BackwardFn backward;
  bool requires_grad = false;
  bool differentiable_backward = true;
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return *node_->value; }
  const Shape& shape() const { return node_->value->shape(); }
  std::int64_t numel() const { return node_->value->numel(); }
  float item() const { return node_->value->item(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const char* op() const noexcept { return node_ ? node_->op : "undefined"; }
  const Node* node() const noexcept { return node_.get(); }

  /// Same value, no history, no gradient.
  Var detach() const;

  friend Var record(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward,
                    bool differentiable_backward);

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Creates the output node of a primitive. When no input requires a gradient
/// the result is a constant and nothing is retained.
Var record(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward,
           bool differentiable_backward = true);

/// Gradients of the scalar `root` with respect to each entry of `wrt`.
/// Entries that do not influence `root` receive zeros. With `create_graph`
/// the returned gradients are themselves differentiable.
std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool create_graph = false);

/// d(root)/d(wrt) recorded on the graph, for penalties on input gradients.
/// Every op between `wrt` and `root` must have a differentiable backward.
Var input_gradient(const Var& root, const Var& wrt);

struct Parameter {
  std::string name;
  Var var;
  Tensor grad;

  const Tensor& value() const { return var.value(); }
  /// Rebinds the parameter to a new leaf; graphs built earlier keep the old value.
  void assign(Tensor value);
};

/// Ordered named parameters with gradient slots.
class ParameterCollection {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  Parameter& operator[](std::size_t i) { return items_[i]; }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }

  void zero_grad();
  std::vector<Var> vars() const;

  /// Copy whose parameters are constants, for inference without recording.
  ParameterCollection detached() const;

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Accumulates d(root)/d(param) into each parameter's grad slot.
void backward(const Var& root, ParameterCollection& params);

/// Total number of scalar parameters.
std::int64_t param_count(const ParameterCollection& params);

}  // namespace aldk
