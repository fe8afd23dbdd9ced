#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcc/common.hpp"

namespace mcc::nn {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantics handle to a graph node. Ops record the graph eagerly
// unless grad mode is disabled or no input requires gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> v);
  static Tensor scalar(double v) { return full({1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[i]; }
  int64_t numel() const { return node_->numel(); }

  const std::vector<double>& values() const { return node_->value; }
  // Mutable access for leaves (parameters, grad-check probes).
  std::vector<double>& raw_values() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    return *this;
  }

  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
  }

  double item() const;

  // Reverse-mode sweep from a scalar root.
  void backward() const;

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// NaN/Inf screening of op outputs (enabled in test code).
bool finite_checks_enabled();
void set_finite_checks(bool on);
void check_finite(const char* op, const std::vector<double>& v);

// Builds an op node: forward value plus a backward callback that scatters
// node.grad into the parents' grads.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs,
               std::function<void(Node&)> backward_fn, const char* op_name);

}  // namespace mcc::nn
