#include "misstsm/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace misstsm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& cell) {
  if (cell.empty()) return true;
  if (cell.size() != 3) return false;
  return std::tolower(cell[0]) == 'n' && std::tolower(cell[1]) == 'a' &&
         std::tolower(cell[2]) == 'n';
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("csv parse error at row " + std::to_string(row) + ", column " +
                             std::to_string(col) + ": non-numeric cell '" + cell + "'");
  }
  return v;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

TimeSeries load_forecast_csv(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) throw std::runtime_error("'" + path + "': need a header and data rows");

  std::vector<std::string> header = split_line(lines[0]);
  if (header.size() < 2) {
    throw std::runtime_error("'" + path + "': header must list a timestamp column and variates");
  }
  const std::size_t n = header.size() - 1;
  const std::size_t t = lines.size() - 1;

  TimeSeries ts;
  ts.values = Tensor({t, n});
  ts.mask = Tensor({t, n});
  ts.variate_names.assign(header.begin() + 1, header.end());
  for (auto& name : ts.variate_names) name = trim(name);
  ts.timestamps.resize(t);

  for (std::size_t r = 0; r < t; ++r) {
    std::vector<std::string> cells = split_line(lines[r + 1]);
    if (cells.size() != header.size()) {
      throw std::runtime_error("csv parse error at row " + std::to_string(r + 1) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    }
    ts.timestamps[r] = trim(cells[0]);
    for (std::size_t c = 0; c < n; ++c) {
      const std::string cell = trim(cells[c + 1]);
      if (is_missing_token(cell)) {
        ts.mask.at(r, c) = 1.0;
        ts.values.at(r, c) = 0.0;
      } else {
        ts.values.at(r, c) = parse_cell(cell, r + 1, c + 1);
      }
    }
  }
  return ts;
}

void save_forecast_csv(const std::string& path, const TimeSeries& ts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "timestamp";
  for (const auto& name : ts.variate_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < ts.steps(); ++r) {
    out << (r < ts.timestamps.size() && !ts.timestamps[r].empty() ? ts.timestamps[r]
                                                                  : std::to_string(r));
    for (std::size_t c = 0; c < ts.variates(); ++c) {
      out << ',';
      if (ts.mask.at(r, c) == 0.0) out << format_value(ts.values.at(r, c));
    }
    out << '\n';
  }
}

NormStats zscore_fit(const TimeSeries& train) {
  const std::size_t n = train.variates();
  NormStats stats;
  stats.mean.assign(n, 0.0);
  stats.stddev.assign(n, 1.0);
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < train.steps(); ++r) {
      if (train.mask.at(r, c) == 0.0) {
        sum += train.values.at(r, c);
        ++count;
      }
    }
    if (count == 0) {
      const std::string name =
          c < train.variate_names.size() ? train.variate_names[c] : std::to_string(c);
      throw std::runtime_error("zscore_fit: variate '" + name +
                               "' has no observed training entries");
    }
    const double mu = sum / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t r = 0; r < train.steps(); ++r) {
      if (train.mask.at(r, c) == 0.0) {
        const double d = train.values.at(r, c) - mu;
        var += d * d;
      }
    }
    var /= static_cast<double>(count);
    stats.mean[c] = mu;
    stats.stddev[c] = (count < 2 || var <= 0.0) ? 1.0 : std::sqrt(var);
  }
  return stats;
}

void zscore_apply(TimeSeries& ts, const NormStats& stats) {
  if (stats.mean.size() != ts.variates()) {
    throw std::invalid_argument("zscore_apply: statistics cover " +
                                std::to_string(stats.mean.size()) + " variates, series has " +
                                std::to_string(ts.variates()));
  }
  for (std::size_t r = 0; r < ts.steps(); ++r)
    for (std::size_t c = 0; c < ts.variates(); ++c) {
      if (ts.mask.at(r, c) == 0.0) {
        ts.values.at(r, c) = (ts.values.at(r, c) - stats.mean[c]) / stats.stddev[c];
      } else {
        ts.values.at(r, c) = 0.0;
      }
    }
}

void zscore_invert(TimeSeries& ts, const NormStats& stats) {
  for (std::size_t r = 0; r < ts.steps(); ++r)
    for (std::size_t c = 0; c < ts.variates(); ++c) {
      if (ts.mask.at(r, c) == 0.0) {
        ts.values.at(r, c) = ts.values.at(r, c) * stats.stddev[c] + stats.mean[c];
      }
    }
}

Tensor denormalize(const Tensor& values, const NormStats& stats) {
  if (values.rank() != 2 || values.shape[1] != stats.mean.size()) {
    throw std::invalid_argument("denormalize: shape " + values.shape_str() +
                                " does not match statistics width " +
                                std::to_string(stats.mean.size()));
  }
  Tensor out = values;
  for (std::size_t r = 0; r < out.shape[0]; ++r)
    for (std::size_t c = 0; c < out.shape[1]; ++c) {
      out.at(r, c) = out.at(r, c) * stats.stddev[c] + stats.mean[c];
    }
  return out;
}

std::vector<WindowPair> make_windows(const TimeSeries& ts, std::size_t L, std::size_t S,
                                     std::size_t stride) {
  std::vector<WindowPair> windows;
  if (stride == 0) throw std::invalid_argument("make_windows: stride must be positive");
  const std::size_t t = ts.steps();
  if (t < L + S) return windows;  // caller treats empty as a warning
  const std::size_t count = (t - L - S) / stride + 1;
  windows.reserve(count);
  const std::size_t n = ts.variates();
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    WindowPair wp{Tensor({L, n}), Tensor({L, n}), Tensor({S, n}), Tensor({S, n})};
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t c = 0; c < n; ++c) {
        wp.context_values.at(i, c) = ts.values.at(start + i, c);
        wp.context_mask.at(i, c) = ts.mask.at(start + i, c);
      }
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t c = 0; c < n; ++c) {
        wp.target.at(i, c) = ts.values.at(start + L + i, c);
        wp.target_observed.at(i, c) = 1.0 - ts.mask.at(start + L + i, c);
      }
    windows.push_back(std::move(wp));
  }
  return windows;
}

namespace {

TimeSeries slice_series(const TimeSeries& ts, std::size_t lo, std::size_t hi) {
  TimeSeries out;
  const std::size_t n = ts.variates();
  out.values = Tensor({hi - lo, n});
  out.mask = Tensor({hi - lo, n});
  out.variate_names = ts.variate_names;
  for (std::size_t r = lo; r < hi; ++r) {
    if (r < ts.timestamps.size()) out.timestamps.push_back(ts.timestamps[r]);
    for (std::size_t c = 0; c < n; ++c) {
      out.values.at(r - lo, c) = ts.values.at(r, c);
      out.mask.at(r - lo, c) = ts.mask.at(r, c);
    }
  }
  return out;
}

}  // namespace

SplitResult split(const TimeSeries& ts, const std::vector<double>& ratios, std::size_t min_len) {
  if (ratios.size() != 3) throw std::invalid_argument("split: need exactly three ratios");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split: ratios sum to " + std::to_string(total) + ", expected 1");
  }
  const std::size_t t = ts.steps();
  const std::size_t n_train = static_cast<std::size_t>(ratios[0] * static_cast<double>(t));
  const std::size_t n_val = static_cast<std::size_t>(ratios[1] * static_cast<double>(t));
  const std::size_t n_test = t - n_train - n_val;
  if (min_len > 0 && (n_train < min_len || n_val < min_len || n_test < min_len)) {
    throw std::runtime_error("split: a slice is shorter than the required " +
                             std::to_string(min_len) + " steps (train " +
                             std::to_string(n_train) + ", val " + std::to_string(n_val) +
                             ", test " + std::to_string(n_test) + ")");
  }
  return SplitResult{slice_series(ts, 0, n_train), slice_series(ts, n_train, n_train + n_val),
                     slice_series(ts, n_train + n_val, t)};
}

std::vector<LabeledSegment> load_classification(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) throw std::runtime_error("'" + path + "': need a header and data rows");
  std::vector<std::string> header = split_line(lines[0]);
  if (header.size() < 4 || trim(header[0]) != "series_id" || trim(header[1]) != "step" ||
      trim(header[2]) != "label") {
    throw std::runtime_error("'" + path + "': expected columns series_id, step, label, v1..vN");
  }
  const std::size_t n = header.size() - 3;
  std::vector<std::string> names(header.begin() + 3, header.end());
  for (auto& name : names) name = trim(name);

  struct Row {
    long step;
    std::size_t label;
    std::vector<double> values;
    std::vector<double> mask;
  };
  // std::map keys keep segments sorted by series id for deterministic order.
  std::map<long, std::vector<Row>> by_series;
  std::map<long, std::size_t> label_of;

  for (std::size_t r = 1; r < lines.size(); ++r) {
    std::vector<std::string> cells = split_line(lines[r]);
    if (cells.size() != header.size()) {
      throw std::runtime_error("csv parse error at row " + std::to_string(r) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    }
    Row row;
    const long sid = static_cast<long>(parse_cell(trim(cells[0]), r, 0));
    row.step = static_cast<long>(parse_cell(trim(cells[1]), r, 1));
    row.label = static_cast<std::size_t>(parse_cell(trim(cells[2]), r, 2));
    row.values.resize(n);
    row.mask.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
      const std::string cell = trim(cells[c + 3]);
      if (is_missing_token(cell)) {
        row.mask[c] = 1.0;
      } else {
        row.values[c] = parse_cell(cell, r, c + 3);
      }
    }
    auto it = label_of.find(sid);
    if (it == label_of.end()) {
      label_of[sid] = row.label;
    } else if (it->second != row.label) {
      throw std::runtime_error("series " + std::to_string(sid) + " carries conflicting labels " +
                               std::to_string(it->second) + " and " + std::to_string(row.label));
    }
    by_series[sid].push_back(std::move(row));
  }

  std::vector<LabeledSegment> segments;
  segments.reserve(by_series.size());
  for (auto& [sid, rows] : by_series) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.step < b.step; });
    LabeledSegment seg;
    seg.label = label_of[sid];
    seg.series.values = Tensor({rows.size(), n});
    seg.series.mask = Tensor({rows.size(), n});
    seg.series.variate_names = names;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) {
        seg.series.values.at(i, c) = rows[i].values[c];
        seg.series.mask.at(i, c) = rows[i].mask[c];
      }
    segments.push_back(std::move(seg));
  }
  return segments;
}

void pad_segments(std::vector<LabeledSegment>& segments, std::size_t target_len) {
  for (LabeledSegment& seg : segments) {
    const std::size_t t = seg.series.steps();
    if (t == target_len) continue;
    const std::size_t n = seg.series.variates();
    Tensor values({target_len, n});
    Tensor mask = Tensor::full({target_len, n}, 1.0);  // padding is missing
    const std::size_t keep = std::min(t, target_len);
    for (std::size_t r = 0; r < keep; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        values.at(r, c) = seg.series.values.at(r, c);
        mask.at(r, c) = seg.series.mask.at(r, c);
      }
    seg.series.values = std::move(values);
    seg.series.mask = std::move(mask);
    seg.series.timestamps.clear();
  }
}

std::size_t num_classes(const std::vector<LabeledSegment>& segments) {
  std::size_t c = 0;
  for (const LabeledSegment& seg : segments) c = std::max(c, seg.label + 1);
  return c;
}

}  // namespace misstsm
