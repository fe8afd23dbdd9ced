#include "mcc/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mcc::nn {

namespace {
thread_local bool t_grad_enabled = true;
std::atomic<bool> g_finite_checks{false};
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw invalid_argument("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on); }

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x))
      throw numeric_error(std::string("non-finite value in output of ") + op);
}

Tensor Tensor::zeros(Shape s) { return full(std::move(s), 0.0); }

Tensor Tensor::full(Shape s, double v) {
  auto n = std::make_shared<Node>();
  const int64_t count = shape_numel(s);
  n->shape = std::move(s);
  n->value.assign(count, v);
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape s, std::vector<double> v) {
  if (shape_numel(s) != static_cast<int64_t>(v.size()))
    throw invalid_argument("tensor: value count " + std::to_string(v.size()) +
                           " does not match shape " + shape_str(s));
  auto n = std::make_shared<Node>();
  n->shape = std::move(s);
  n->value = std::move(v);
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (numel() != 1)
    throw invalid_argument("item: tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::backward() const {
  if (numel() != 1)
    throw invalid_argument("backward: root must be a scalar, got " +
                           shape_str(shape()));
  // Post-order DFS for topological order (children come after parents).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->requires_grad || n->grad.empty() || !n->backward_fn) continue;
    n->backward_fn(*n);
  }
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs,
               std::function<void(Node&)> backward_fn, const char* op_name) {
  if (finite_checks_enabled()) check_finite(op_name, value);
  auto n = std::make_shared<Node>();
  const int64_t count = shape_numel(shape);
  if (count != static_cast<int64_t>(value.size()))
    throw invalid_argument(std::string(op_name) + ": internal shape mismatch");
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool need = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs)
      if (t.requires_grad()) {
        need = true;
        break;
      }
  }
  if (need) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

}  // namespace mcc::nn
