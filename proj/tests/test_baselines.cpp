#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "misstsm/baselines.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/rng.hpp"

using namespace misstsm;

namespace {

// Build a series from per-variate columns; NaN marks a missing entry.
TimeSeries make_ts(const std::vector<std::vector<double>>& columns) {
  const std::size_t N = columns.size(), T = columns[0].size();
  TimeSeries ts;
  ts.values = Tensor({T, N});
  ts.mask = Tensor({T, N});
  for (std::size_t d = 0; d < N; ++d) {
    ts.variate_names.push_back("v" + std::to_string(d + 1));
    for (std::size_t t = 0; t < T; ++t) {
      if (std::isnan(columns[d][t])) {
        ts.mask.at(t, d) = 1.0;
      } else {
        ts.values.at(t, d) = columns[d][t];
      }
    }
  }
  return ts;
}

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

void check_dense_and_identity(const TimeSeries& in, const ImputedSeries& out) {
  REQUIRE(out.values.shape == in.values.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    CHECK(std::isfinite(out.values.data[i]));
    if (in.mask.data[i] == 0.0) CHECK(out.values.data[i] == in.values.data[i]);
    CHECK(out.original_mask.data[i] == in.mask.data[i]);
  }
}

// Straightforward O(T^2 N) reference for the kNN contract: per missing entry,
// rank every other row by the rescaled co-observed distance and average the
// first k donors that observe the target dimension.
Tensor knn_reference(const TimeSeries& ts, std::size_t k) {
  const std::size_t T = ts.steps(), N = ts.variates();
  Tensor out = ts.values;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t d = 0; d < N; ++d) {
      if (ts.mask.at(i, d) == 0.0) continue;
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t j = 0; j < T; ++j) {
        if (j == i || ts.mask.at(j, d) != 0.0) continue;
        double acc = 0.0;
        std::size_t shared = 0;
        for (std::size_t c = 0; c < N; ++c) {
          if (ts.mask.at(i, c) == 0.0 && ts.mask.at(j, c) == 0.0) {
            acc += (ts.values.at(i, c) - ts.values.at(j, c)) *
                   (ts.values.at(i, c) - ts.values.at(j, c));
            ++shared;
          }
        }
        if (shared == 0) continue;
        ranked.emplace_back(std::sqrt(acc * double(N) / double(shared)), j);
      }
      std::sort(ranked.begin(), ranked.end());
      double total = 0.0;
      std::size_t taken = 0;
      for (const auto& [dist, j] : ranked) {
        if (taken == k) break;
        total += ts.values.at(j, d);
        ++taken;
      }
      if (taken == 0) {
        double mean = 0.0;
        std::size_t n_obs = 0;
        for (std::size_t t = 0; t < T; ++t) {
          if (ts.mask.at(t, d) == 0.0) {
            mean += ts.values.at(t, d);
            ++n_obs;
          }
        }
        out.at(i, d) = mean / double(n_obs);
      } else {
        out.at(i, d) = total / double(taken);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("quadratic spline is exact on a quadratic column") {
  // Observed knots trace y = (t/2)^2: (0,0), (2,1), (4,4). The gap at t = 3
  // sits mid-segment and must land exactly on the parabola: (3/2)^2 = 2.25.
  TimeSeries ts = make_ts({{0.0, NA, 1.0, NA, 4.0}});
  ImputedSeries out = spline_impute(ts);
  check_dense_and_identity(ts, out);
  CHECK(out.values.at(3, 0) == doctest::Approx(2.25).epsilon(1e-12));
  CHECK(out.values.at(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("quadratic spline reproduces random quadratics at masked points") {
  Rng rng = make_rng(101);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t T = 40;
    const double a = uniform(rng, -2.0, 2.0);
    const double b = uniform(rng, -3.0, 3.0);
    const double c = uniform(rng, -5.0, 5.0);
    Tensor mask = gen_mcar(T, 1, 0.5, 7000 + static_cast<std::uint64_t>(rep));
    std::vector<double> col(T);
    std::size_t observed = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const double x = static_cast<double>(t);
      if (mask.at(t, 0) == 0.0) {
        col[t] = a * x * x + b * x + c;
        ++observed;
      } else {
        col[t] = NA;
      }
    }
    if (observed < 3) continue;
    TimeSeries ts = make_ts({col});
    ImputedSeries out = spline_impute(ts);
    // Exact only between the first and last observed points.
    std::size_t first = 0, last = T - 1;
    while (ts.mask.at(first, 0) != 0.0) ++first;
    while (ts.mask.at(last, 0) != 0.0) --last;
    for (std::size_t t = first; t <= last; ++t) {
      const double x = static_cast<double>(t);
      CHECK(std::abs(out.values.at(t, 0) - (a * x * x + b * x + c)) <= 1e-8);
    }
  }
}

TEST_CASE("spline edge handling: identity, extrapolation, sparse fallbacks") {
  TimeSeries full = make_ts({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
  ImputedSeries out = spline_impute(full);
  for (std::size_t i = 0; i < full.values.size(); ++i) {
    CHECK(out.values.data[i] == full.values.data[i]);
  }

  // Constant beyond the observed hull on both sides.
  TimeSeries edges = make_ts({{NA, NA, 2.0, 5.0, 10.0, NA}});
  out = spline_impute(edges);
  CHECK(out.values.at(0, 0) == 2.0);
  CHECK(out.values.at(1, 0) == 2.0);
  CHECK(out.values.at(5, 0) == 10.0);

  // Two observed points: linear. One: constant.
  TimeSeries two = make_ts({{1.0, NA, NA, 7.0}});
  out = spline_impute(two);
  CHECK(out.values.at(1, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(out.values.at(2, 0) == doctest::Approx(5.0).epsilon(1e-12));

  TimeSeries one = make_ts({{NA, 42.0, NA}});
  out = spline_impute(one);
  CHECK(out.values.at(0, 0) == 42.0);
  CHECK(out.values.at(2, 0) == 42.0);

  TimeSeries empty = make_ts({{1.0, 1.0}, {NA, NA}});
  CHECK_THROWS_WITH_AS(spline_impute(empty), doctest::Contains("v2"), std::invalid_argument);
}

TEST_CASE("spline order knob selects linear and cubic variants") {
  // y = t^2 on 0..4 with t=1,3 missing: order 1 must give chord midpoints,
  // not parabola values.
  TimeSeries ts = make_ts({{0.0, NA, 4.0, NA, 16.0}});
  ImputedSeries lin = spline_impute(ts, 1);
  CHECK(lin.values.at(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lin.values.at(3, 0) == doctest::Approx(10.0).epsilon(1e-12));

  // Natural cubic interpolates linear data exactly and stays dense.
  TimeSeries ramp = make_ts({{0.0, NA, 2.0, NA, 4.0, NA, 6.0}});
  ImputedSeries cub = spline_impute(ramp, 3);
  check_dense_and_identity(ramp, cub);
  for (std::size_t t = 0; t < 7; ++t) {
    CHECK(cub.values.at(t, 0) == doctest::Approx(static_cast<double>(t)).epsilon(1e-10));
  }

  CHECK_THROWS_AS(spline_impute(ts, 0), std::invalid_argument);
  CHECK_THROWS_AS(spline_impute(ts, 4), std::invalid_argument);
  CHECK(lin.provenance == "spline(order=1)");
}

TEST_CASE("locf forward-fills and back-fills the leading gap") {
  TimeSeries ts = make_ts({{1.0, NA, NA, 4.0}, {NA, NA, 3.0, NA}});
  ImputedSeries out = locf_impute(ts);
  check_dense_and_identity(ts, out);
  const std::vector<double> want0{1.0, 1.0, 1.0, 4.0};
  const std::vector<double> want1{3.0, 3.0, 3.0, 3.0};
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(out.values.at(t, 0) == want0[t]);
    CHECK(out.values.at(t, 1) == want1[t]);
  }
  CHECK(out.provenance == "locf");
}

TEST_CASE("locf is idempotent") {
  Rng rng = make_rng(55);
  TimeSeries ts;
  ts.values = Tensor({30, 4});
  ts.mask = gen_mcar(30, 4, 0.6, 56);
  for (std::size_t t = 0; t < 30; ++t) {
    for (std::size_t d = 0; d < 4; ++d) {
      if (ts.mask.at(t, d) == 0.0) ts.values.at(t, d) = uniform(rng, -5.0, 5.0);
    }
  }
  for (std::size_t d = 0; d < 4; ++d) ts.mask.at(0, d) = 0.0;  // keep columns nonempty

  ImputedSeries once = locf_impute(ts);
  TimeSeries dense;
  dense.values = once.values;
  dense.mask = Tensor({30, 4});
  ImputedSeries twice = locf_impute(dense);
  for (std::size_t i = 0; i < once.values.size(); ++i) {
    CHECK(twice.values.data[i] == once.values.data[i]);
  }
}

TEST_CASE("knn hand-computed toy: rescaled distances and tie-breaking") {
  // Row 2 misses v2. Distances on the only co-observed dimension (v1),
  // rescaled by sqrt(2/1): rows 1 and 3 tie at sqrt(2), row 0 at 2*sqrt(2),
  // row 4 at 8*sqrt(2).
  TimeSeries ts = make_ts({{0.0, 1.0, 2.0, 3.0, 10.0}, {5.0, 6.0, NA, 8.0, 9.0}});
  ImputedSeries k2 = knn_impute(ts, 2);
  CHECK(k2.values.at(2, 1) == doctest::Approx(7.0).epsilon(1e-12));  // mean(6, 8)
  ImputedSeries k1 = knn_impute(ts, 1);
  CHECK(k1.values.at(2, 1) == 6.0);  // tie resolved toward the earlier row
  check_dense_and_identity(ts, k2);
}

TEST_CASE("knn copies an exact duplicate row at k=1") {
  TimeSeries ts = make_ts({{1.0, 9.0, 1.0}, {2.0, 8.0, 2.0}, {NA, 7.0, 3.0}});
  ImputedSeries out = knn_impute(ts, 1);
  CHECK(out.values.at(0, 2) == 3.0);  // row 2 duplicates rows 0's observed dims
}

TEST_CASE("knn constant data fills with the constant") {
  TimeSeries ts = make_ts({{4.0, 4.0, NA, 4.0}, {1.0, 1.0, 1.0, NA}});
  ImputedSeries out = knn_impute(ts);
  CHECK(out.values.at(2, 0) == 4.0);
  CHECK(out.values.at(3, 1) == 1.0);
}

TEST_CASE("knn falls back to the per-variate mean for incomparable rows") {
  // Row 2 observes nothing, so no donor shares a dimension with it.
  TimeSeries ts = make_ts({{1.0, 3.0, NA, NA}, {4.0, 6.0, NA, 10.0}});
  ImputedSeries out = knn_impute(ts);
  CHECK(out.values.at(2, 0) == doctest::Approx(2.0).epsilon(1e-12));   // mean{1,3}
  CHECK(out.values.at(2, 1) == doctest::Approx(20.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("knn matches the brute-force reference on random instances") {
  Rng rng = make_rng(300);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t T = 20 + 3 * static_cast<std::size_t>(rep);
    const std::size_t N = 2 + static_cast<std::size_t>(rep) % 3;
    TimeSeries ts;
    ts.values = Tensor({T, N});
    ts.mask = gen_mcar(T, N, 0.4, 500 + static_cast<std::uint64_t>(rep));
    for (std::size_t d = 0; d < N; ++d) ts.mask.at(0, d) = 0.0;
    for (std::size_t i = 0; i < ts.values.size(); ++i) {
      if (ts.mask.data[i] == 0.0) ts.values.data[i] = uniform(rng, -3.0, 3.0);
    }
    for (std::size_t k : {1ul, 3ul, 10ul}) {
      ImputedSeries out = knn_impute(ts, k);
      Tensor ref = knn_reference(ts, k);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(std::abs(out.values.data[i] - ref.data[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("imputation rmse restricts to the synthetic mask") {
  Tensor truth({2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  Tensor imputed({2, 2}, std::vector<double>{1.0, 5.0, 3.0, 0.0});
  Tensor mask({2, 2}, std::vector<double>{0.0, 1.0, 0.0, 1.0});
  // Errors 3 and -4 on the masked entries: sqrt((9 + 16) / 2).
  CHECK(imputation_rmse(imputed, truth, mask) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK_THROWS_AS(imputation_rmse(imputed, truth, Tensor({2, 2})), std::invalid_argument);
}
