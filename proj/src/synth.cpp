#include "misstsm/synth.hpp"

#include <cmath>

#include "misstsm/rng.hpp"

namespace misstsm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

TimeSeries synth_forecast_series(std::size_t T, std::size_t N, std::uint64_t seed,
                                 double noise_std) {
  TimeSeries ts;
  ts.values = Tensor({T, N});
  ts.mask = Tensor({T, N});
  // All variates ride one seasonal driver (with its harmonic) at distinct
  // phases and amplitudes, as in real multivariate telemetry. The latent
  // state is then a few phase dimensions regardless of N; independent
  // per-variate frequencies would need model state linear in N.
  Rng shared = make_rng(derive_seed(seed, 1000003ULL));
  const double freq = uniform(shared, 1.0, 4.0) / 96.0;  // one to four cycles per 96 steps
  for (std::size_t d = 0; d < N; ++d) {
    ts.variate_names.push_back("v" + std::to_string(d + 1));
    Rng rng = make_rng(derive_seed(seed, d));
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double amp = uniform(rng, 0.7, 1.3);
    const double slope = uniform(rng, -0.5, 0.5);
    const double second_amp = uniform(rng, 0.1, 0.3);
    const double second_phase = uniform(rng, 0.0, kTwoPi);
    for (std::size_t t = 0; t < T; ++t) {
      const double x = static_cast<double>(t);
      double v = amp * std::sin(kTwoPi * freq * x + phase);
      v += second_amp * std::sin(kTwoPi * 2.0 * freq * x + second_phase);
      v += slope * x / static_cast<double>(T);
      if (noise_std > 0.0) v += noise_std * gaussian(rng);
      ts.values.at(t, d) = v;
    }
  }
  return ts;
}

std::vector<LabeledSegment> synth_classify_segments(std::size_t per_class, std::size_t classes,
                                                    std::size_t len, std::size_t n_variates,
                                                    std::uint64_t seed, double noise_std) {
  std::vector<LabeledSegment> segments;
  segments.reserve(per_class * classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      Rng rng = make_rng(derive_seed(seed, c * 1000003ULL + k));
      // Class bands: c cycles-per-segment intervals [2+4c, 4+4c), well apart.
      const double cycles = uniform(rng, 2.0 + 4.0 * static_cast<double>(c),
                                    4.0 + 4.0 * static_cast<double>(c));
      const double freq = cycles / static_cast<double>(len);
      // One rhythm per segment: variates share frequency and phase and
      // differ in amplitude, so any observed subset of a time step blends
      // to the same-frequency signal. Per-variate phases would let random
      // missingness patterns smear the spectrum of pooled features.
      const double phase = uniform(rng, 0.0, kTwoPi);
      LabeledSegment seg;
      seg.label = c;
      seg.series.values = Tensor({len, n_variates});
      seg.series.mask = Tensor({len, n_variates});
      for (std::size_t d = 0; d < n_variates; ++d) {
        seg.series.variate_names.push_back("v" + std::to_string(d + 1));
        const double amp = uniform(rng, 0.8, 1.2);
        for (std::size_t t = 0; t < len; ++t) {
          double v = amp * std::sin(kTwoPi * freq * static_cast<double>(t) + phase);
          if (noise_std > 0.0) v += noise_std * gaussian(rng);
          seg.series.values.at(t, d) = v;
        }
      }
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

}  // namespace misstsm
