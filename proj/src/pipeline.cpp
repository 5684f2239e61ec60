#include "multirc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "multirc/errors.hpp"

namespace multirc {

std::string to_string(Task task) { return task == Task::detection ? "detection" : "prediction"; }

Task parse_task(const std::string& text) {
  if (text == "detection") return Task::detection;
  if (text == "prediction") return Task::prediction;
  throw ConfigError("unknown task '" + text + "' (expected detection or prediction)");
}

std::vector<double> TimeSeries::channel(std::size_t ch) const {
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) out[t] = at(t, ch);
  return out;
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length) throw DataError("series slice out of range");
  TimeSeries out;
  out.length = end - begin;
  out.channels = channels;
  out.channel_names = channel_names;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * channels),
                    values.begin() + static_cast<std::ptrdiff_t>(end * channels));
  if (labels) {
    out.labels = std::vector<std::uint8_t>(labels->begin() + static_cast<std::ptrdiff_t>(begin),
                                           labels->begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void TimeSeries::validate() const {
  if (length == 0) throw DataError("empty series");
  if (channels == 0) throw DataError("series has no channels");
  if (values.size() != length * channels) throw DataError("series value count does not match T x c");
  if (!channel_names.empty() && channel_names.size() != channels) throw DataError("channel name count mismatch");
  if (labels) {
    if (labels->size() != length) throw DataError("label length does not match series length");
    for (auto l : *labels)
      if (l > 1) throw DataError("label outside {0,1}");
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    const auto pos = rest.find(',');
    out.push_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw DataError("non-numeric cell '" + cell + "' at line " + std::to_string(line_no));
  }
  if (!std::isfinite(v)) throw DataError("non-finite cell '" + cell + "' at line " + std::to_string(line_no));
  return v;
}

}  // namespace

TimeSeries read_csv(std::istream& in, bool has_labels) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty series");
  ++line_no;
  auto header = split_fields(line);
  const bool label_column = !header.empty() && header.back() == "label";
  if (has_labels && !label_column) throw DataError("expected a trailing 'label' column");
  const std::size_t width = header.size();
  const std::size_t channels = label_column ? width - 1 : width;
  if (channels == 0) throw DataError("series has no channels");

  TimeSeries ts;
  ts.channels = channels;
  ts.channel_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(channels));
  std::vector<std::uint8_t> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < channels; ++j) ts.values.push_back(parse_cell(fields[j], line_no));
    if (label_column) {
      const double l = parse_cell(fields.back(), line_no);
      if (l != 0.0 && l != 1.0) throw DataError("label value outside {0,1} at line " + std::to_string(line_no));
      labels.push_back(static_cast<std::uint8_t>(l));
    }
    ++ts.length;
  }
  if (ts.length == 0) throw DataError("empty series");
  if (label_column && has_labels) ts.labels = std::move(labels);
  ts.validate();
  return ts;
}

TimeSeries load_csv(const std::filesystem::path& path, bool has_labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path.string());
  return read_csv(in, has_labels);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const TimeSeries& series) {
  series.validate();
  for (std::size_t j = 0; j < series.channels; ++j) {
    if (j) out << ',';
    out << (series.channel_names.empty() ? "ch" + std::to_string(j) : series.channel_names[j]);
  }
  if (series.labels) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < series.length; ++t) {
    for (std::size_t j = 0; j < series.channels; ++j) {
      if (j) out << ',';
      out << format_double(series.at(t, j));
    }
    if (series.labels) out << ',' << static_cast<int>((*series.labels)[t]);
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const TimeSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  write_csv(out, series);
}

void WindowConfig::validate(std::size_t largest_patch) const {
  if (lookback == 0 || lookforward == 0 || stride == 0) {
    throw ConfigError("window lookback, lookforward and stride must be positive");
  }
  if (lookback < largest_patch) {
    throw ConfigError("lookback " + std::to_string(lookback) + " is smaller than the largest patch " +
                      std::to_string(largest_patch));
  }
}

std::size_t window_count(std::size_t length, const WindowConfig& cfg) {
  if (length < cfg.span()) return 0;
  return (length - cfg.span()) / cfg.stride + 1;
}

std::uint8_t lookahead_label(std::span<const std::uint8_t> labels, std::size_t end_time, std::size_t lookforward) {
  for (std::size_t k = end_time + 1; k <= end_time + lookforward && k < labels.size(); ++k)
    if (labels[k]) return 1;
  return 0;
}

WindowBatch slide_windows(const TimeSeries& series, const WindowConfig& cfg) {
  cfg.validate();
  series.validate();
  const std::size_t count = window_count(series.length, cfg);
  if (count == 0) {
    throw DataError("series of length " + std::to_string(series.length) + " is shorter than one window (" +
                    std::to_string(cfg.span()) + ")");
  }
  const std::size_t h = cfg.lookback, c = series.channels;
  WindowBatch batch;
  batch.lookback = h;
  batch.channels = c;
  batch.windows.reserve(count * h * c);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t end = h - 1 + w * cfg.stride;
    batch.end_times.push_back(end);
    const auto first = series.values.begin() + static_cast<std::ptrdiff_t>((end + 1 - h) * c);
    batch.windows.insert(batch.windows.end(), first, first + static_cast<std::ptrdiff_t>(h * c));
    if (!series.labels) continue;
    const auto& labels = *series.labels;
    if (cfg.task == Task::prediction) {
      batch.labels.push_back(lookahead_label(labels, end, cfg.lookforward));
    } else {
      batch.labels.insert(batch.labels.end(), labels.begin() + static_cast<std::ptrdiff_t>(end + 1 - h),
                          labels.begin() + static_cast<std::ptrdiff_t>(end + 1));
    }
  }
  return batch;
}

std::pair<std::vector<double>, NormStats> instance_normalize(std::span<const double> window, std::size_t lookback,
                                                             std::size_t channels) {
  if (lookback < 2) throw DataError("instance normalization needs at least two time steps");
  if (window.size() != lookback * channels) throw ShapeError("window size does not match h x c");
  NormStats stats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  std::vector<double> out(window.size());
  const double inv_h = 1.0 / static_cast<double>(lookback);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double mu = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) mu += window[t * channels + ch];
    mu *= inv_h;
    double var = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) {
      const double d = window[t * channels + ch] - mu;
      var += d * d;
    }
    const double sd = std::max(std::sqrt(var * inv_h), kStdFloor);
    stats.mean[ch] = mu;
    stats.std[ch] = sd;
    for (std::size_t t = 0; t < lookback; ++t) out[t * channels + ch] = (window[t * channels + ch] - mu) / sd;
  }
  return {std::move(out), std::move(stats)};
}

std::pair<TimeSeries, TimeSeries> split_train_valid(const TimeSeries& series, double ratio, std::size_t min_length) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie strictly between 0 and 1");
  const auto cut = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(series.length) + 1e-9));
  if (cut < min_length || series.length - cut < min_length) {
    throw DataError("train/valid split (" + std::to_string(cut) + "/" + std::to_string(series.length - cut) +
                    ") leaves a partition shorter than one window of " + std::to_string(min_length));
  }
  return {series.slice(0, cut), series.slice(cut, series.length)};
}

}  // namespace multirc
