#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "misstsm/masking.hpp"

using namespace misstsm;

TEST_CASE("gen_mcar boundary fractions") {
  Tensor none = gen_mcar(50, 4, 0.0, 1);
  for (double v : none.data) CHECK(v == 0.0);
  Tensor all = gen_mcar(50, 4, 1.0, 1);
  for (double v : all.data) CHECK(v == 1.0);
  CHECK_THROWS_AS(gen_mcar(5, 5, 1.5, 1), std::invalid_argument);
}

TEST_CASE("gen_mcar empirical fraction sits inside the binomial band") {
  // T*N = 10000 draws; 4 sigma keeps the test flake-proof.
  for (double p : {0.6, 0.7, 0.8, 0.9}) {
    Tensor mask = gen_mcar(1000, 10, p, 42);
    const double n = 10000.0;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    double count = 0.0;
    for (double v : mask.data) count += v;
    CHECK(std::abs(count - n * p) <= 4.0 * sigma);
  }
}

TEST_CASE("gen_mcar is deterministic and per-variate stable") {
  Tensor a = gen_mcar(200, 6, 0.5, 123);
  Tensor b = gen_mcar(200, 6, 0.5, 123);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);

  // Adding variates must not disturb the existing columns' streams.
  Tensor wide = gen_mcar(200, 9, 0.5, 123);
  for (std::size_t t = 0; t < 200; ++t)
    for (std::size_t d = 0; d < 6; ++d) CHECK(wide.at(t, d) == a.at(t, d));

  Tensor other_seed = gen_mcar(200, 6, 0.5, 124);
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diffs += a.data[i] != other_seed.data[i];
  CHECK(diffs > 0);
}

TEST_CASE("periodic instantaneous probability follows the sine formula") {
  // p=0.6, alpha=0.5: probability peaks at 0.6 + 0.5*0.4 = 0.8 when sin=1.
  CHECK(0.6 + 0.5 * (1.0 - 0.6) * 1.0 == doctest::Approx(0.8).epsilon(1e-15));

  // Clamp keeps probabilities legal even at alpha=1 and extreme p.
  MaskSpec spec;
  spec.scheme = MaskScheme::Periodic;
  spec.p = 0.95;
  spec.alpha = 1.0;
  spec.seed = 5;
  Tensor mask = gen_periodic(400, 3, spec);
  for (double v : mask.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("periodic time-averaged missing rate approaches p") {
  MaskSpec spec;
  spec.scheme = MaskScheme::Periodic;
  spec.p = 0.7;
  spec.alpha = 0.5;
  spec.seed = 11;
  Tensor mask = gen_periodic(100000, 1, spec);
  CHECK(std::abs(missing_fraction(mask) - 0.7) <= 0.01);
}

TEST_CASE("periodic with alpha zero behaves like MCAR distributionally") {
  MaskSpec spec;
  spec.scheme = MaskScheme::Periodic;
  spec.p = 0.4;
  spec.alpha = 0.0;
  spec.seed = 21;
  Tensor mask = gen_periodic(20000, 1, spec);
  const double sigma = std::sqrt(20000.0 * 0.4 * 0.6) / 20000.0;
  CHECK(std::abs(missing_fraction(mask) - 0.4) <= 4.0 * sigma);
}

TEST_CASE("gen_mask dispatches on the scheme and validates the spec") {
  MaskSpec spec;
  spec.scheme = MaskScheme::MCAR;
  spec.p = 0.3;
  spec.seed = 9;
  Tensor direct = gen_mcar(50, 2, 0.3, 9);
  Tensor routed = gen_mask(50, 2, spec);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct.data[i] == routed.data[i]);

  MaskSpec bad;
  bad.freq_range = {0.8, 0.2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.freq_range = {0.2, 0.8};
  bad.p = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("merge_masks is elementwise OR") {
  Tensor native({2, 2}, {0, 1, 0, 0});
  Tensor synth({2, 2}, {0, 0, 1, 0});
  Tensor merged = merge_masks(native, synth);
  CHECK(merged.data[0] == 0.0);
  CHECK(merged.data[1] == 1.0);
  CHECK(merged.data[2] == 1.0);
  CHECK(merged.data[3] == 0.0);

  Tensor zeros({2, 2});
  Tensor same = merge_masks(zeros, synth);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same.data[i] == synth.data[i]);

  Tensor ones = Tensor::full({2, 2}, 1.0);
  Tensor all = merge_masks(ones, ones);
  for (double v : all.data) CHECK(v == 1.0);

  double pop_merged = 0.0, pop_native = 0.0, pop_synth = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    pop_merged += merged.data[i];
    pop_native += native.data[i];
    pop_synth += synth.data[i];
  }
  CHECK(pop_merged >= std::max(pop_native, pop_synth));
}

TEST_CASE("mask CSV round-trips exactly") {
  Tensor mask = gen_mcar(30, 5, 0.45, 3);
  const std::string path = "/tmp/misstsm_test_mask.csv";
  save_mask(path, mask);
  Tensor back = load_mask(path);
  REQUIRE(back.shape == mask.shape);
  for (std::size_t i = 0; i < mask.size(); ++i) CHECK(back.data[i] == mask.data[i]);
  std::remove(path.c_str());
}
