#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace misstsm {

/**
 * Dense row-major tensor of 64-bit floats.
 *
 * All numeric state in the library lives in these: model parameters,
 * gradients, series values and masks. Shape is dynamic; storage is a
 * flat contiguous vector with product(shape) == data.size().
 */
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shp, double fill = 0.0)
      : shape(std::move(shp)), data(count(shape), fill) {}

  Tensor(std::vector<std::size_t> shp, std::vector<double> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (count(shape) != data.size()) {
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match " + std::to_string(data.size()) +
                                  " elements");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp), 0.0); }
  static Tensor full(std::vector<std::size_t> shp, double v) { return Tensor(std::move(shp), v); }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor row(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static std::size_t count(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t d : shp) n *= d;
    return shp.empty() ? 0 : n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Row-major accessors for the common ranks.
  double& at(std::size_t i) {
    assert(rank() == 1 && i < shape[0]);
    return data[i];
  }
  double at(std::size_t i) const {
    assert(rank() == 1 && i < shape[0]);
    return data[i];
  }
  double& at(std::size_t i, std::size_t j) {
    assert(rank() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }
  double at(std::size_t i, std::size_t j) const {
    assert(rank() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  static std::string shape_str(const std::vector<std::size_t>& shp) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shp.size(); ++i) os << (i ? "x" : "") << shp[i];
    os << "]";
    return os.str();
  }

  std::string shape_str() const { return shape_str(shape); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace misstsm
