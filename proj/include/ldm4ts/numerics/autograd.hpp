#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  bool trainable = false;
  std::string name;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

// Handle onto a node of the dynamic computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false, std::string name = {});
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Trainable leaf: requires_grad and trainable set, named for checkpoints.
  static Var parameter(Tensor value, std::string name);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t dim(std::size_t a) const { return node_->value.dim(a); }

  // Gradient, zeros when nothing has been accumulated yet.
  Tensor grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool trainable() const { return node_->trainable; }
  void set_trainable(bool on);

  const std::string& name() const { return node_->name; }
  const char* op() const { return node_->op; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  double item() const { return node_->value.item(); }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar root (seed 1) or with an explicit seed.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// Zeroes the grads of `params`, evaluates fn, back-propagates, and returns
// one gradient per parameter (in order).
std::vector<Tensor> gradient(const std::function<Var()>& fn, const std::vector<Var>& params);

// Builds a result node. When recording is off or no input requires grad the
// result is a constant and `bw` is dropped.
Var make_result(Tensor value, std::vector<Var> inputs, const char* op,
                std::function<void(Node&)> bw);

}  // namespace ldm4ts::ag
