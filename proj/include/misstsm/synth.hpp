#pragma once

#include <cstdint>
#include <vector>

#include "misstsm/dataio.hpp"

namespace misstsm {

// Mixed sinusoid-plus-trend multivariate series; fully observed (mask all
// zeros). Variates differ in frequency, phase, amplitude, and trend slope.
TimeSeries synth_forecast_series(std::size_t T, std::size_t N, std::uint64_t seed,
                                 double noise_std = 0.05);

// Frequency-discrimination classification set: class c draws its sinusoid
// frequency from a band separated from the other classes' bands.
std::vector<LabeledSegment> synth_classify_segments(std::size_t per_class, std::size_t classes,
                                                    std::size_t len, std::size_t n_variates,
                                                    std::uint64_t seed, double noise_std = 0.1);

}  // namespace misstsm
