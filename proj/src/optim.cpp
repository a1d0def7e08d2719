#include "misstsm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace misstsm {

void adam_step(ParamSlot& p, const AdamConfig& cfg) {
  for (double g : p.grad.data) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("adam_step: non-finite gradient, refusing to update");
    }
  }
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad.data[i];
    p.adam_m.data[i] = cfg.beta1 * p.adam_m.data[i] + (1.0 - cfg.beta1) * g;
    p.adam_v.data[i] = cfg.beta2 * p.adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = p.adam_m.data[i] / bc1;
    const double v_hat = p.adam_v.data[i] / bc2;
    p.value.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  p.zero_grad();
}

ParamSlot& ParamStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = slots_.emplace(name, ParamSlot(std::move(init)));
  if (!inserted) {
    throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  }
  return it->second;
}

ParamSlot& ParamStore::get(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

const ParamSlot& ParamStore::get(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, slot] : slots_) slot.zero_grad();
}

std::map<std::string, Tensor> snapshot_values(const ParamStore& store) {
  std::map<std::string, Tensor> snap;
  for (const auto& [name, slot] : store.slots()) snap.emplace(name, slot.value);
  return snap;
}

void restore_values(ParamStore& store, const std::map<std::string, Tensor>& snapshot) {
  for (const auto& [name, value] : snapshot) store.get(name).value = value;
}

void ParamStore::step_all(const AdamConfig& cfg) {
  for (auto& [name, slot] : slots_) {
    if (slot.trainable) {
      adam_step(slot, cfg);
    } else {
      slot.zero_grad();
    }
  }
}

}  // namespace misstsm
