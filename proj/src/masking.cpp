#include "misstsm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "misstsm/rng.hpp"

namespace misstsm {

void MaskSpec::validate() const {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("mask spec: p must lie in [0,1]");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mask spec: alpha must lie in [0,1]");
  if (freq_range[0] > freq_range[1] || freq_range[0] <= 0.0 || freq_range[1] > 1.0) {
    throw std::invalid_argument("mask spec: freq_range must satisfy 0 < lo <= hi <= 1");
  }
  if (phase_range[0] > phase_range[1] || phase_range[0] < 0.0) {
    throw std::invalid_argument("mask spec: phase_range must satisfy 0 <= lo <= hi");
  }
}

Tensor gen_mcar(std::size_t T, std::size_t N, double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("gen_mcar: p must lie in [0,1]");
  Tensor mask({T, N});
  for (std::size_t d = 0; d < N; ++d) {
    Rng rng = make_rng(derive_seed(seed, d));
    for (std::size_t t = 0; t < T; ++t) {
      mask.at(t, d) = canonical(rng) < p ? 1.0 : 0.0;
    }
  }
  return mask;
}

Tensor gen_periodic(std::size_t T, std::size_t N, const MaskSpec& spec) {
  spec.validate();
  Tensor mask({T, N});
  for (std::size_t d = 0; d < N; ++d) {
    Rng rng = make_rng(derive_seed(spec.seed, d));
    const double freq = uniform(rng, spec.freq_range[0], spec.freq_range[1]);
    const double phase = uniform(rng, spec.phase_range[0], spec.phase_range[1]);
    for (std::size_t t = 0; t < T; ++t) {
      const double wave =
          std::sin(6.283185307179586476925287 * freq * static_cast<double>(t) + phase);
      const double prob = std::clamp(spec.p + spec.alpha * (1.0 - spec.p) * wave, 0.0, 1.0);
      mask.at(t, d) = canonical(rng) < prob ? 1.0 : 0.0;
    }
  }
  return mask;
}

Tensor gen_mask(std::size_t T, std::size_t N, const MaskSpec& spec) {
  spec.validate();
  return spec.scheme == MaskScheme::MCAR ? gen_mcar(T, N, spec.p, spec.seed)
                                         : gen_periodic(T, N, spec);
}

Tensor merge_masks(const Tensor& native, const Tensor& synthetic) {
  require_same_shape(native, synthetic, "merge_masks");
  Tensor out(native.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = (native.data[i] != 0.0 || synthetic.data[i] != 0.0) ? 1.0 : 0.0;
  }
  return out;
}

void save_mask(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("save_mask: expected a T x N mask");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (std::size_t t = 0; t < mask.shape[0]; ++t) {
    for (std::size_t d = 0; d < mask.shape[1]; ++d) {
      if (d) out << ',';
      out << (mask.at(t, d) != 0.0 ? '1' : '0');
    }
    out << '\n';
  }
}

Tensor load_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "0") {
        row.push_back(0.0);
      } else if (cell == "1") {
        row.push_back(1.0);
      } else {
        throw std::runtime_error("'" + path + "': mask cells must be 0 or 1, got '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("'" + path + "': ragged mask row " + std::to_string(rows.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("'" + path + "': empty mask file");
  Tensor mask({rows.size(), rows.front().size()});
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t d = 0; d < rows[t].size(); ++d) mask.at(t, d) = rows[t][d];
  return mask;
}

double missing_fraction(const Tensor& mask) {
  if (mask.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : mask.data) s += v;
  return s / static_cast<double>(mask.size());
}

}  // namespace misstsm
