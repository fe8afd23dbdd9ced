#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>

#include "mcc/tensor.hpp"

namespace mcc::nn {

// Named parameters in registration order (fixed iteration order keeps the
// optimizer and checkpoints deterministic).
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  size_t size() const { return items_.size(); }
  int64_t total_values() const;
  const std::pair<std::string, Tensor>& item(size_t i) const {
    return items_[i];
  }
  std::pair<std::string, Tensor>& item(size_t i) { return items_[i]; }

  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;  // parallel to ParamStore items

  void init_like(const ParamStore& ps);
  bool initialized() const { return !m.empty(); }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update from the parameters' accumulated grads.
// Updated parameters and moments are rounded through 32-bit floats so the
// training state is exactly representable in checkpoints.
void adam_step(ParamStore& params, AdamState& state, double lr,
               const AdamHyper& hp = {});

// Linear warmup to `base` over the first warmup_frac*total steps, then
// cosine decay to zero at `total`.
double cosine_lr(int64_t step, int64_t total, double warmup_frac, double base);

// Checkpoint container: parameters plus optimizer state.
struct Checkpoint {
  ParamStore params;
  AdamState opt;
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState& opt);
Checkpoint load_checkpoint(const std::string& path);

struct GradCheckResult {
  double max_rel_err = 0;
  int64_t probes = 0;
};

// Compares reverse-mode gradients of loss_fn() (a fresh scalar graph over
// the given leaf tensors) against central finite differences. Probes all
// elements when max_probes_per_input < 0, otherwise a seeded sample.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<Tensor* const> inputs, double h = 1e-5,
                           int64_t max_probes_per_input = -1,
                           uint64_t seed = 0x9d5c);

}  // namespace mcc::nn
