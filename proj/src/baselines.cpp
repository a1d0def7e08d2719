#include "misstsm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace misstsm {

namespace {

struct ObservedColumn {
  std::vector<double> t;  // ascending integer time indices
  std::vector<double> y;
};

std::string variate_label(const TimeSeries& ts, std::size_t d) {
  if (d < ts.variate_names.size() && !ts.variate_names[d].empty()) return ts.variate_names[d];
  return "#" + std::to_string(d);
}

ObservedColumn observed_column(const TimeSeries& ts, std::size_t d) {
  ObservedColumn col;
  for (std::size_t t = 0; t < ts.steps(); ++t) {
    if (ts.mask.at(t, d) == 0.0) {
      col.t.push_back(static_cast<double>(t));
      col.y.push_back(ts.values.at(t, d));
    }
  }
  if (col.t.empty()) {
    throw std::invalid_argument("impute: variate " + variate_label(ts, d) +
                                " has no observed points");
  }
  return col;
}

// Segment index i with t[i] <= x <= t[i+1]; callers clamp x inside the hull.
std::size_t segment_of(const std::vector<double>& knots, double x) {
  std::size_t i =
      static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin());
  if (i > 0) --i;
  return std::min(i, knots.size() - 2);
}

double eval_linear(const ObservedColumn& c, double x) {
  const std::size_t i = segment_of(c.t, x);
  const double w = (x - c.t[i]) / (c.t[i + 1] - c.t[i]);
  return c.y[i] + w * (c.y[i + 1] - c.y[i]);
}

// Quadratic spline with continuous first derivative. Segment i is
//   q_i(x) = y_i + z_i (x - t_i) + (z_{i+1} - z_i) / (2 h_i) (x - t_i)^2,
// where the slopes obey z_{i+1} = 2 (y_{i+1} - y_i) / h_i - z_i. The initial
// slope is the derivative at t_0 of the parabola through the first three
// points, which makes the scheme reproduce any quadratic exactly.
struct QuadraticSpline {
  const ObservedColumn& c;
  std::vector<double> z;

  explicit QuadraticSpline(const ObservedColumn& col) : c(col), z(col.t.size()) {
    const double t0 = c.t[0], t1 = c.t[1], t2 = c.t[2];
    const double d01 = (c.y[1] - c.y[0]) / (t1 - t0);
    const double d12 = (c.y[2] - c.y[1]) / (t2 - t1);
    const double curvature = (d12 - d01) / (t2 - t0);
    z[0] = d01 - curvature * (t1 - t0);
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
      z[i + 1] = 2.0 * (c.y[i + 1] - c.y[i]) / (c.t[i + 1] - c.t[i]) - z[i];
    }
  }

  double eval(double x) const {
    const std::size_t i = segment_of(c.t, x);
    const double h = c.t[i + 1] - c.t[i];
    const double dx = x - c.t[i];
    return c.y[i] + z[i] * dx + 0.5 * (z[i + 1] - z[i]) / h * dx * dx;
  }
};

// Natural cubic spline: second derivatives from the standard tridiagonal
// system with zero curvature at both ends.
struct CubicSpline {
  const ObservedColumn& c;
  std::vector<double> m;  // second derivatives at the knots

  explicit CubicSpline(const ObservedColumn& col) : c(col), m(col.t.size(), 0.0) {
    const std::size_t n = c.t.size();
    if (n < 3) return;
    std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double hl = c.t[i] - c.t[i - 1];
      const double hr = c.t[i + 1] - c.t[i];
      diag[i] = 2.0 * (hl + hr);
      upper[i] = hr;
      rhs[i] = 6.0 * ((c.y[i + 1] - c.y[i]) / hr - (c.y[i] - c.y[i - 1]) / hl);
    }
    // Thomas algorithm over the interior unknowns; m[0] = m[n-1] = 0.
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double hl = c.t[i] - c.t[i - 1];  // sub-diagonal entry
      const double w = hl / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
  }

  double eval(double x) const {
    const std::size_t i = segment_of(c.t, x);
    const double h = c.t[i + 1] - c.t[i];
    const double a = (c.t[i + 1] - x) / h;
    const double b = (x - c.t[i]) / h;
    return a * c.y[i] + b * c.y[i + 1] +
           ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
  }
};

ImputedSeries start_result(const TimeSeries& ts, std::string provenance) {
  ImputedSeries out;
  out.values = ts.values;
  out.original_mask = ts.mask;
  out.provenance = std::move(provenance);
  return out;
}

}  // namespace

ImputedSeries spline_impute(const TimeSeries& ts, int order) {
  if (order < 1 || order > 3) {
    throw std::invalid_argument("spline_impute: order must be 1, 2, or 3");
  }
  ImputedSeries out = start_result(ts, "spline(order=" + std::to_string(order) + ")");
  for (std::size_t d = 0; d < ts.variates(); ++d) {
    const ObservedColumn col = observed_column(ts, d);
    const int usable = col.t.size() >= 3 ? order : (col.t.size() == 2 ? 1 : 0);

    std::optional<QuadraticSpline> quad;
    std::optional<CubicSpline> cubic;
    if (usable == 2) quad.emplace(col);
    if (usable == 3) cubic.emplace(col);
    auto fill = [&](double x) {
      if (x <= col.t.front()) return col.y.front();  // constant beyond the hull
      if (x >= col.t.back()) return col.y.back();
      switch (usable) {
        case 3: return cubic->eval(x);
        case 2: return quad->eval(x);
        case 1: return eval_linear(col, x);
        default: return col.y.front();
      }
    };
    for (std::size_t t = 0; t < ts.steps(); ++t) {
      if (ts.mask.at(t, d) != 0.0) out.values.at(t, d) = fill(static_cast<double>(t));
    }
  }
  return out;
}

ImputedSeries locf_impute(const TimeSeries& ts) {
  ImputedSeries out = start_result(ts, "locf");
  for (std::size_t d = 0; d < ts.variates(); ++d) {
    const ObservedColumn col = observed_column(ts, d);  // existence check
    double last = col.y.front();  // leading gaps take the first observed value
    for (std::size_t t = 0; t < ts.steps(); ++t) {
      if (ts.mask.at(t, d) == 0.0) {
        last = ts.values.at(t, d);
      } else {
        out.values.at(t, d) = last;
      }
    }
  }
  return out;
}

ImputedSeries knn_impute(const TimeSeries& ts, std::size_t k) {
  if (k == 0) throw std::invalid_argument("knn_impute: k must be positive");
  const std::size_t T = ts.steps(), N = ts.variates();
  ImputedSeries out = start_result(ts, "knn(k=" + std::to_string(k) + ")");

  std::vector<double> column_mean(N);
  for (std::size_t d = 0; d < N; ++d) {
    const ObservedColumn col = observed_column(ts, d);
    column_mean[d] = std::accumulate(col.y.begin(), col.y.end(), 0.0) /
                     static_cast<double>(col.y.size());
  }

  std::vector<double> dist(T);
  std::vector<std::size_t> order(T);
  for (std::size_t i = 0; i < T; ++i) {
    bool any_missing = false;
    for (std::size_t d = 0; d < N; ++d) any_missing |= ts.mask.at(i, d) != 0.0;
    if (!any_missing) continue;

    for (std::size_t j = 0; j < T; ++j) {
      if (j == i) {
        dist[j] = std::numeric_limits<double>::infinity();
        continue;
      }
      double acc = 0.0;
      std::size_t shared = 0;
      for (std::size_t d = 0; d < N; ++d) {
        if (ts.mask.at(i, d) == 0.0 && ts.mask.at(j, d) == 0.0) {
          const double diff = ts.values.at(i, d) - ts.values.at(j, d);
          acc += diff * diff;
          ++shared;
        }
      }
      dist[j] = shared == 0 ? std::numeric_limits<double>::infinity()
                            : std::sqrt(acc * static_cast<double>(N) /
                                        static_cast<double>(shared));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist[a] < dist[b];  // stable keeps the lower time index on ties
    });

    for (std::size_t d = 0; d < N; ++d) {
      if (ts.mask.at(i, d) == 0.0) continue;
      double total = 0.0;
      std::size_t taken = 0;
      for (std::size_t j : order) {
        if (taken == k || dist[j] == std::numeric_limits<double>::infinity()) break;
        if (ts.mask.at(j, d) != 0.0) continue;  // donor must observe d
        total += ts.values.at(j, d);
        ++taken;
      }
      out.values.at(i, d) = taken > 0 ? total / static_cast<double>(taken) : column_mean[d];
    }
  }
  return out;
}

double imputation_rmse(const Tensor& imputed, const Tensor& ground_truth,
                       const Tensor& synthetic_mask) {
  require_same_shape(imputed, ground_truth, "imputation_rmse");
  require_same_shape(imputed, synthetic_mask, "imputation_rmse");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    if (synthetic_mask.data[i] != 0.0) {
      const double diff = imputed.data[i] - ground_truth.data[i];
      acc += diff * diff;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("imputation_rmse: mask selects no entries");
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace misstsm
