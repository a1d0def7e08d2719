#pragma once

#include <functional>

#include "misstsm/tensor.hpp"

namespace misstsm {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool ok(double tol) const { return max_rel_err <= tol; }
};

// Central-difference check of an analytic gradient for a scalar-valued
// function of one tensor. rel err = |fd - an| / max(1, |fd|, |an|).
inline GradCheckResult finite_diff_check(const std::function<double(const Tensor&)>& f,
                                         const Tensor& x, const Tensor& analytic_grad,
                                         double h = 1e-5) {
  require_same_shape(x, analytic_grad, "finite_diff_check");
  GradCheckResult r;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic_grad.data[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
    const double rel = std::abs(fd - an) / denom;
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace misstsm
