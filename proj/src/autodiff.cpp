#include "aldk/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>

#include "aldk/errors.hpp"
#include "aldk/ops.hpp"

namespace aldk {

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::make_shared<const Tensor>(std::move(value));
  return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::make_shared<const Tensor>(std::move(value));
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::detach() const {
  auto node = std::make_shared<Node>();
  node->value = node_->value;
  return Var(std::move(node));
}

Var record(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward,
           bool differentiable_backward) {
  auto node = std::make_shared<Node>();
  node->value = std::make_shared<const Tensor>(std::move(value));
  node->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->requires_grad = true;
    node->differentiable_backward = differentiable_backward;
  }
  return Var(std::move(node));
}

namespace {

// Post-order over nodes that require gradients: inputs precede consumers.
std::vector<Var> topological_order(const Var& root) {
  std::vector<Var> order;
  std::unordered_set<const Node*> visited;
  struct Frame {
    Var var;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root});
  visited.insert(root.node());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& inputs = top.var.node()->inputs;
    if (top.next < inputs.size()) {
      const Var& in = inputs[top.next++];
      if (in.requires_grad() && visited.insert(in.node()).second) stack.push_back({in});
      continue;
    }
    order.push_back(std::move(top.var));
    stack.pop_back();
  }
  return order;
}

}  // namespace

std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool create_graph) {
  if (!root.defined() || root.numel() != 1)
    throw ShapeError("gradient root must be a scalar, got shape " +
                     (root.defined() ? to_string(root.shape()) : std::string("undefined")));

  std::unordered_set<const Node*> targets;
  for (const auto& w : wrt) targets.insert(w.node());

  std::vector<Var> order;
  if (root.requires_grad()) order = topological_order(root);

  std::unordered_set<const Node*> relevant;
  for (const auto& v : order) {
    const Node* n = v.node();
    bool rel = targets.count(n) != 0;
    bool through = false;
    for (const auto& in : n->inputs) through = through || relevant.count(in.node()) != 0;
    if (through && create_graph && !n->differentiable_backward) throw SecondOrderError(n->op);
    if (rel || through) relevant.insert(n);
  }

  std::unordered_map<const Node*, Var> grads;
  if (relevant.count(root.node())) grads[root.node()] = Var::constant(Tensor(root.shape(), 1.0f));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* n = it->node();
    auto found = grads.find(n);
    if (found == grads.end()) continue;
    std::vector<bool> needs(n->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      needs[i] = relevant.count(n->inputs[i].node()) != 0;
      any = any || needs[i];
    }
    if (!any) continue;

    Var g = found->second;
    std::vector<Var> inputs;
    Var output;
    if (create_graph) {
      inputs = n->inputs;
      output = *it;
    } else {
      inputs.reserve(n->inputs.size());
      for (const auto& in : n->inputs) inputs.push_back(in.detach());
      output = it->detach();
    }
    std::vector<Var> in_grads = n->backward(BackwardArgs{g, inputs, output, needs});
    if (!targets.count(n)) grads.erase(n);

    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!needs[i] || i >= in_grads.size() || !in_grads[i].defined()) continue;
      const Node* in = n->inputs[i].node();
      if (in_grads[i].shape() != n->inputs[i].shape())
        throw InternalError(std::string("backward of '") + n->op + "' produced gradient of shape " +
                            to_string(in_grads[i].shape()) + " for input of shape " +
                            to_string(n->inputs[i].shape()));
      auto slot = grads.find(in);
      if (slot == grads.end())
        grads.emplace(in, std::move(in_grads[i]));
      else
        slot->second = add(slot->second, in_grads[i]);
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto found = grads.find(w.node());
    out.push_back(found != grads.end() ? found->second : Var::constant(Tensor(w.shape(), 0.0f)));
  }
  return out;
}

Var input_gradient(const Var& root, const Var& wrt) {
  std::vector<Var> w{wrt};
  return grad(root, w, /*create_graph=*/true).front();
}

void Parameter::assign(Tensor value) {
  if (!value.same_shape(grad))
    throw ShapeError("parameter '" + name + "' cannot change shape from " + to_string(grad.shape()) +
                     " to " + to_string(value.shape()));
  var = Var::leaf(std::move(value));
}

Parameter& ParameterCollection::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, items_.size());
  Tensor grad(value.shape(), 0.0f);
  items_.push_back(Parameter{std::move(name), Var::leaf(std::move(value)), std::move(grad)});
  return items_.back();
}

Parameter& ParameterCollection::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return items_[it->second];
}

const Parameter& ParameterCollection::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return items_[it->second];
}

void ParameterCollection::zero_grad() {
  for (auto& p : items_) std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0f);
}

std::vector<Var> ParameterCollection::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.var);
  return out;
}

ParameterCollection ParameterCollection::detached() const {
  ParameterCollection out = *this;
  for (auto& p : out.items_) p.var = p.var.detach();
  return out;
}

void backward(const Var& root, ParameterCollection& params) {
  auto vars = params.vars();
  auto grads = grad(root, vars);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].grad.data();
    const auto& src = grads[i].value();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[static_cast<std::int64_t>(j)];
  }
}

std::int64_t param_count(const ParameterCollection& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.value().numel();
  return n;
}

}  // namespace aldk
