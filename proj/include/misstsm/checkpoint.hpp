#pragma once

#include <string>

#include "misstsm/optim.hpp"
#include "misstsm/training.hpp"

namespace misstsm {

// On-disk model state: a length-prefixed JSON header holding the model
// configuration, followed by length-prefixed named tensors as little-endian
// float64. Parameter values round-trip bit-identically; optimizer state is
// not persisted.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& store);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a Model attached to the loaded parameters.
Model load_model(const std::string& path);

}  // namespace misstsm
