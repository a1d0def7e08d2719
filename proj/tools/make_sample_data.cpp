// Regenerates the bundled sample datasets under the given directory
// (default data/). Both files are deterministic, so the checked-in copies
// can always be reproduced byte-for-byte.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "misstsm/dataio.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/synth.hpp"

using namespace misstsm;

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir);

  // 200-row, 3-variate forecasting sample with ~8% native missingness.
  TimeSeries forecast = synth_forecast_series(200, 3, 42, 0.05);
  forecast.mask = gen_mcar(200, 3, 0.08, 43);
  for (std::size_t i = 0; i < forecast.values.size(); ++i) {
    if (forecast.mask.data[i] != 0.0) forecast.values.data[i] = 0.0;
  }
  const std::string forecast_path = dir + "/sample_forecast.csv";
  save_forecast_csv(forecast_path, forecast);
  std::printf("wrote %s\n", forecast_path.c_str());

  // 20-segment, 2-class, 2-variate classification sample, fully observed.
  std::vector<LabeledSegment> segments = synth_classify_segments(10, 2, 24, 2, 44, 0.05);
  const std::string classify_path = dir + "/sample_classify.csv";
  std::ofstream out(classify_path);
  if (!out) {
    std::fprintf(stderr, "cannot write %s\n", classify_path.c_str());
    return 1;
  }
  out << "series_id,step,label,v1,v2\n";
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const LabeledSegment& seg = segments[s];
    for (std::size_t t = 0; t < seg.series.steps(); ++t) {
      out << s << ',' << t << ',' << seg.label;
      for (std::size_t d = 0; d < seg.series.variates(); ++d) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", seg.series.values.at(t, d));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  std::printf("wrote %s\n", classify_path.c_str());
  return 0;
}
