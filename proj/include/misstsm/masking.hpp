#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "misstsm/tensor.hpp"

namespace misstsm {

enum class MaskScheme { MCAR, Periodic };

// Synthetic missingness recipe. Periodic missingness follows a per-variate
// instantaneous probability p + alpha*(1-p)*sin(2*pi*freq*t + phase), clamped
// to [0,1], with freq and phase drawn once per variate.
struct MaskSpec {
  MaskScheme scheme = MaskScheme::MCAR;
  double p = 0.7;
  double alpha = 0.5;
  std::array<double, 2> freq_range{0.2, 0.8};
  std::array<double, 2> phase_range{0.0, 6.283185307179586476925287};
  std::uint64_t seed = 0;

  void validate() const;
};

// Each variate consumes its own seed stream derived from (seed, column), so
// column d's draws are unchanged when other columns come or go.
Tensor gen_mcar(std::size_t T, std::size_t N, double p, std::uint64_t seed);
Tensor gen_periodic(std::size_t T, std::size_t N, const MaskSpec& spec);
Tensor gen_mask(std::size_t T, std::size_t N, const MaskSpec& spec);

// Elementwise OR: missing if missing in either input.
Tensor merge_masks(const Tensor& native, const Tensor& synthetic);

void save_mask(const std::string& path, const Tensor& mask);
Tensor load_mask(const std::string& path);

double missing_fraction(const Tensor& mask);

}  // namespace misstsm
