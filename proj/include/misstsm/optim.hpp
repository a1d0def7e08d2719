#pragma once

#include <map>
#include <string>

#include "misstsm/tensor.hpp"

namespace misstsm {

// One trainable tensor together with its gradient accumulator and Adam state.
// Gradients accumulate across forward/backward calls until the next step.
struct ParamSlot {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::size_t step_count = 0;
  bool trainable = true;  // frozen slots accumulate grads but never update

  explicit ParamSlot(Tensor v)
      : value(std::move(v)),
        grad(value.shape),
        adam_m(value.shape),
        adam_v(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update: theta -= lr * m_hat / (sqrt(v_hat) + eps).
// Throws on non-finite gradient entries; zeroes the gradient after applying.
void adam_step(ParamSlot& p, const AdamConfig& cfg);

// Value-only snapshots for early stopping and NaN rollback.
std::map<std::string, Tensor> snapshot_values(const class ParamStore& store);
void restore_values(class ParamStore& store, const std::map<std::string, Tensor>& snapshot);

// Named registry of parameters. Order of iteration is the lexicographic key
// order of std::map, which keeps checkpoints and updates deterministic.
class ParamStore {
 public:
  ParamSlot& add(const std::string& name, Tensor init);
  ParamSlot& get(const std::string& name);
  const ParamSlot& get(const std::string& name) const;
  bool contains(const std::string& name) const { return slots_.count(name) > 0; }

  void zero_grads();
  void step_all(const AdamConfig& cfg);

  std::map<std::string, ParamSlot>& slots() { return slots_; }
  const std::map<std::string, ParamSlot>& slots() const { return slots_; }

 private:
  std::map<std::string, ParamSlot> slots_;
};

}  // namespace misstsm
