#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "misstsm/dataio.hpp"
#include "misstsm/rng.hpp"

using namespace misstsm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/misstsm_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
  void write(const std::string& content) {
    std::ofstream out(path);
    out << content;
  }
};

}  // namespace

TEST_CASE("load_forecast_csv builds values and mask from cells") {
  TempFile f("basic.csv");
  f.write(
      "date,a,b\n"
      "2020-01-01,1.5,2.5\n"
      "2020-01-02,,3.5\n"
      "2020-01-03,nan,NaN\n");
  TimeSeries ts = load_forecast_csv(f.path);
  CHECK(ts.steps() == 3);
  CHECK(ts.variates() == 2);
  CHECK(ts.variate_names[0] == "a");
  CHECK(ts.values.at(0, 0) == 1.5);
  CHECK(ts.values.at(0, 1) == 2.5);
  CHECK(ts.mask.at(0, 0) == 0.0);
  CHECK(ts.mask.at(1, 0) == 1.0);  // empty cell
  CHECK(ts.values.at(1, 0) == 0.0);
  CHECK(ts.mask.at(2, 0) == 1.0);  // lowercase nan
  CHECK(ts.mask.at(2, 1) == 1.0);  // uppercase NaN
  CHECK(ts.values.at(1, 1) == 3.5);
  CHECK(ts.timestamps[1] == "2020-01-02");

  double total = 0.0;
  for (double v : ts.mask.data) total += v;
  CHECK(total == 3.0);
}

TEST_CASE("load_forecast_csv reports parse errors by location") {
  TempFile ragged("ragged.csv");
  ragged.write("date,a,b\n0,1.0\n");
  CHECK_THROWS_WITH_AS(load_forecast_csv(ragged.path),
                       doctest::Contains("row 1"), std::runtime_error);

  TempFile alpha("alpha.csv");
  alpha.write("date,a\n0,oops\n");
  CHECK_THROWS_WITH_AS(load_forecast_csv(alpha.path),
                       doctest::Contains("non-numeric"), std::runtime_error);

  TempFile novar("novar.csv");
  novar.write("date\n0\n");
  CHECK_THROWS_AS(load_forecast_csv(novar.path), std::runtime_error);
}

TEST_CASE("save then load round-trips the series exactly") {
  Rng rng = make_rng(5);
  TimeSeries ts;
  ts.values = Tensor({20, 3});
  ts.mask = Tensor({20, 3});
  ts.variate_names = {"x", "y", "z"};
  for (std::size_t r = 0; r < 20; ++r) {
    ts.timestamps.push_back("t" + std::to_string(r));
    for (std::size_t c = 0; c < 3; ++c) {
      if (uniform(rng, 0.0, 1.0) < 0.25) {
        ts.mask.at(r, c) = 1.0;
      } else {
        ts.values.at(r, c) = uniform(rng, -5.0, 5.0);  // full-precision doubles
      }
    }
  }
  TempFile f("roundtrip.csv");
  save_forecast_csv(f.path, ts);
  TimeSeries back = load_forecast_csv(f.path);

  REQUIRE(back.steps() == ts.steps());
  REQUIRE(back.variates() == ts.variates());
  CHECK(back.variate_names == ts.variate_names);
  CHECK(back.timestamps == ts.timestamps);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    CHECK(back.mask.data[i] == ts.mask.data[i]);
    CHECK(back.values.data[i] == ts.values.data[i]);  // %.17g round-trip
  }
}

TEST_CASE("zscore statistics come from observed train entries only") {
  TimeSeries train;
  train.values = Tensor({4, 1}, {1.0, 2.0, 3.0, 0.0});
  train.mask = Tensor({4, 1}, {0.0, 0.0, 0.0, 1.0});
  train.variate_names = {"v"};

  NormStats stats = zscore_fit(train);
  CHECK(stats.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(stats.stddev[0] == doctest::Approx(0.8165).epsilon(1e-4));

  // Perturbing the masked sentinel must not move the statistics.
  TimeSeries poked = train;
  poked.values.at(3, 0) = 1e9;
  NormStats stats2 = zscore_fit(poked);
  CHECK(stats2.mean[0] == stats.mean[0]);
  CHECK(stats2.stddev[0] == stats.stddev[0]);
}

TEST_CASE("zscore clamps degenerate spread and rejects empty variates") {
  TimeSeries constant;
  constant.values = Tensor({3, 1}, {4.0, 4.0, 4.0});
  constant.mask = Tensor({3, 1});
  NormStats stats = zscore_fit(constant);
  CHECK(stats.stddev[0] == 1.0);
  zscore_apply(constant, stats);
  for (std::size_t r = 0; r < 3; ++r) CHECK(constant.values.at(r, 0) == 0.0);

  TimeSeries empty;
  empty.values = Tensor({2, 1});
  empty.mask = Tensor::full({2, 1}, 1.0);
  empty.variate_names = {"dead"};
  CHECK_THROWS_WITH_AS(zscore_fit(empty), doctest::Contains("dead"), std::runtime_error);
}

TEST_CASE("normalize then denormalize recovers observed values") {
  Rng rng = make_rng(7);
  TimeSeries ts;
  ts.values = Tensor({30, 2});
  ts.mask = Tensor({30, 2});
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      if (uniform(rng, 0.0, 1.0) < 0.2) {
        ts.mask.at(r, c) = 1.0;
      } else {
        ts.values.at(r, c) = uniform(rng, 10.0, 50.0);
      }
    }
  TimeSeries original = ts;
  NormStats stats = zscore_fit(ts);
  zscore_apply(ts, stats);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (ts.mask.data[i] != 0.0) CHECK(ts.values.data[i] == 0.0);  // sentinel restored
  }
  zscore_invert(ts, stats);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (ts.mask.data[i] == 0.0) {
      CHECK(std::abs(ts.values.data[i] - original.values.data[i]) <= 1e-10);
    }
  }
}

TEST_CASE("make_windows counts and content") {
  TimeSeries ts;
  ts.values = Tensor({10, 1});
  ts.mask = Tensor({10, 1});
  for (std::size_t r = 0; r < 10; ++r) ts.values.at(r, 0) = static_cast<double>(r);
  ts.mask.at(5, 0) = 1.0;

  std::vector<WindowPair> w1 = make_windows(ts, 4, 2, 1);
  CHECK(w1.size() == 5);  // (10 - 4 - 2) / 1 + 1
  CHECK(w1[0].context_values.at(0, 0) == 0.0);
  CHECK(w1[0].target.at(0, 0) == 4.0);
  CHECK(w1[0].target.at(1, 0) == 5.0);
  CHECK(w1[0].target_observed.at(1, 0) == 0.0);  // masked target step
  CHECK(w1[1].context_mask.at(4 - 1, 0) == 0.0);
  CHECK(w1[2].context_mask.at(3, 0) == 1.0);  // window starting at 2 covers t=5

  std::vector<WindowPair> w2 = make_windows(ts, 4, 2, 2);
  CHECK(w2.size() == 3);  // stride 2: starts 0, 2, 4

  TimeSeries tiny;
  tiny.values = Tensor({6, 1});
  tiny.mask = Tensor({6, 1});
  CHECK(make_windows(tiny, 4, 2).size() == 1);
  TimeSeries too_small;
  too_small.values = Tensor({5, 1});
  too_small.mask = Tensor({5, 1});
  CHECK(make_windows(too_small, 4, 2).empty());
}

TEST_CASE("split produces disjoint contiguous slices covering the series") {
  TimeSeries ts;
  ts.values = Tensor({10, 1});
  ts.mask = Tensor({10, 1});
  for (std::size_t r = 0; r < 10; ++r) ts.values.at(r, 0) = static_cast<double>(r);

  SplitResult s = split(ts, {0.6, 0.2, 0.2});
  CHECK(s.train.steps() == 6);
  CHECK(s.val.steps() == 2);
  CHECK(s.test.steps() == 2);
  CHECK(s.train.values.at(0, 0) == 0.0);
  CHECK(s.val.values.at(0, 0) == 6.0);
  CHECK(s.test.values.at(1, 0) == 9.0);

  CHECK_THROWS_AS(split(ts, {0.5, 0.2, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(split(ts, {0.6, 0.2, 0.2}, /*min_len=*/3), std::runtime_error);
}

TEST_CASE("load_classification groups rows into labeled segments") {
  TempFile f("cls.csv");
  f.write(
      "series_id,step,label,v1,v2\n"
      "0,0,1,0.1,0.2\n"
      "0,1,1,,0.4\n"
      "1,1,2,0.9,1.0\n"
      "1,0,2,0.7,0.8\n");
  std::vector<LabeledSegment> segs = load_classification(f.path);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].label == 1);
  CHECK(segs[1].label == 2);
  CHECK(segs[0].series.steps() == 2);
  CHECK(segs[0].series.mask.at(1, 0) == 1.0);
  // Rows arrive out of order for series 1; step sorting restores them.
  CHECK(segs[1].series.values.at(0, 0) == 0.7);
  CHECK(segs[1].series.values.at(1, 0) == 0.9);
  CHECK(num_classes(segs) == 3);
}

TEST_CASE("load_classification rejects conflicting labels") {
  TempFile f("badlabel.csv");
  f.write(
      "series_id,step,label,v1\n"
      "0,0,1,0.1\n"
      "0,1,2,0.2\n");
  CHECK_THROWS_WITH_AS(load_classification(f.path), doctest::Contains("conflicting"),
                       std::runtime_error);
}

TEST_CASE("pad_segments pads with missing steps and truncates long segments") {
  TempFile f("pad.csv");
  f.write(
      "series_id,step,label,v1\n"
      "0,0,0,1.0\n"
      "0,1,0,2.0\n"
      "1,0,1,3.0\n"
      "1,1,1,4.0\n"
      "1,2,1,5.0\n");
  std::vector<LabeledSegment> segs = load_classification(f.path);
  pad_segments(segs, 4);
  for (const LabeledSegment& seg : segs) CHECK(seg.series.steps() == 4);
  CHECK(segs[0].series.mask.at(2, 0) == 1.0);  // padded rows are missing
  CHECK(segs[0].series.mask.at(3, 0) == 1.0);
  CHECK(segs[0].series.values.at(1, 0) == 2.0);

  pad_segments(segs, 2);
  CHECK(segs[1].series.steps() == 2);
  CHECK(segs[1].series.values.at(1, 0) == 4.0);
}
