#include "ldm4ts/numerics/autograd.hpp"

#include <unordered_set>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  if (g.numel() != value.numel()) {
    throw DimensionError(std::string("gradient size mismatch at op ") + op + ": " +
                         shape_str(g.shape()) + " vs " + shape_str(value.shape()));
  }
  Tensor& buf = grad_buffer();
  double* d = buf.ptr();
  const double* s = g.ptr();
  for (std::size_t i = 0, n = buf.numel(); i < n; ++i) d[i] += s[i];
}

Var::Var(Tensor value, bool requires_grad, std::string name) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->name = std::move(name);
}

Var Var::parameter(Tensor value, std::string name) {
  Var v(std::move(value), true, std::move(name));
  v.node_->trainable = true;
  return v;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::set_trainable(bool on) {
  node_->trainable = on;
  node_->requires_grad = on;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_result(Tensor value, std::vector<Var> inputs, const char* op,
                std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; graphs can be deep (sampling loops).
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Var& root, const Tensor& seed) {
  if (!root.defined()) throw ValidationError("backward on undefined variable");
  if (!root.requires_grad()) return;
  root.node()->accumulate(seed);
  const auto order = topo_order(root.node());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void backward(const Var& root) {
  if (root.numel() != 1) {
    throw DimensionError("backward without seed needs a scalar root, got " +
                         shape_str(root.shape()));
  }
  backward(root, Tensor(root.shape(), 1.0));
}

std::vector<Tensor> gradient(const std::function<Var()>& fn, const std::vector<Var>& params) {
  for (auto p : params) p.zero_grad();
  Var out = fn();
  backward(out);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  return grads;
}

}  // namespace ldm4ts::ag
