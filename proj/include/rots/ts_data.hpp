#ifndef ROTS_TS_DATA_HPP
#define ROTS_TS_DATA_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace rots {

struct TimeSeries {
  Signal values;
  std::size_t label = 0;
};

enum class Split { train, validation, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

/// Labeled samples sharing a channel count. Labels are 0-based and contiguous;
/// original_labels[k] is the source token that was mapped to k.
struct Dataset {
  std::vector<TimeSeries> samples;
  std::size_t num_classes = 0;
  Split split = Split::train;
  std::vector<std::string> original_labels;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t channels() const { return samples.empty() ? 0 : samples.front().values.channels(); }
  std::size_t length() const { return samples.empty() ? 0 : samples.front().values.length(); }

  void validate() const {
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      if (s.values.channels() != channels())
        throw Error(ErrorKind::shape, "sample " + std::to_string(k) + " has " +
                                          std::to_string(s.values.channels()) + " channels, expected " +
                                          std::to_string(channels()));
      if (s.label >= num_classes)
        throw Error(ErrorKind::validation, "sample " + std::to_string(k) + " label out of range");
      if (!all_finite(s.values.values()))
        throw Error(ErrorKind::validation, "sample " + std::to_string(k) + " has non-finite values");
    }
  }
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  // from_chars for double is not available on every toolchain we build with
  std::string s(tok);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0';
}

inline std::vector<std::string_view> split_tokens(std::string_view line, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(seps, pos);
    if (start == std::string_view::npos) break;
    auto end = line.find_first_of(seps, start);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(start, end - start));
    pos = end;
  }
  return out;
}

// Remaps source label tokens to contiguous ids in first-seen order. Tokens that
// parse as numbers are keyed by value so "1" and "1.0" share an id.
class LabelMap {
 public:
  std::size_t id(std::string_view token) {
    double v = 0.0;
    std::string key = parse_double(token, v) ? "#" + std::to_string(v) : std::string(token);
    auto [it, inserted] = ids_.try_emplace(key, names_.size());
    if (inserted) names_.emplace_back(token);
    return it->second;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::map<std::string, std::size_t> ids_;
  std::vector<std::string> names_;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return in;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline Dataset finish(std::vector<TimeSeries> samples, const LabelMap& labels, const std::string& path) {
  if (samples.empty()) throw Error(ErrorKind::validation, "empty dataset: '" + path + "'");
  Dataset ds;
  ds.samples = std::move(samples);
  ds.original_labels = labels.names();
  ds.num_classes = ds.original_labels.size();
  ds.validate();
  return ds;
}

}  // namespace detail

/// Univariate UCR format: one series per line, label then T values separated
/// by tabs or spaces (commas are also accepted).
inline Dataset load_ucr_tsv(const std::string& path) {
  auto in = detail::open_input(path);
  detail::LabelMap labels;
  std::vector<TimeSeries> samples;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_len = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(std::move(line));
    auto toks = detail::split_tokens(line, "\t ,");
    if (toks.empty()) continue;
    if (toks.size() < 2)
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected label and values");
    Vec values;
    values.reserve(toks.size() - 1);
    for (std::size_t k = 1; k < toks.size(); ++k) {
      double v = 0.0;
      if (!detail::parse_double(toks[k], v) || !std::isfinite(v))
        throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": bad value '" +
                                          std::string(toks[k]) + "'");
      values.push_back(v);
    }
    if (samples.empty()) {
      expected_len = values.size();
    } else if (values.size() != expected_len) {
      throw Error(ErrorKind::shape, path + ":" + std::to_string(line_no) + ": length " +
                                        std::to_string(values.size()) + " != " +
                                        std::to_string(expected_len));
    }
    samples.push_back({Signal::univariate(std::move(values)), labels.id(toks[0])});
  }
  return detail::finish(std::move(samples), labels, path);
}

/// Multichannel CSV: label then C*T values, channel-major.
inline Dataset load_multichannel_csv(const std::string& path, std::size_t channels) {
  if (channels == 0) throw Error(ErrorKind::validation, "channels must be >= 1");
  auto in = detail::open_input(path);
  detail::LabelMap labels;
  std::vector<TimeSeries> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(std::move(line));
    auto toks = detail::split_tokens(line, ",");
    if (toks.empty() || (toks.size() == 1 && toks[0].find_first_not_of(" \t") == std::string_view::npos))
      continue;
    const auto count = toks.size() - 1;
    if (count == 0 || count % channels != 0)
      throw Error(ErrorKind::shape, path + ":" + std::to_string(line_no) + ": " + std::to_string(count) +
                                        " values not divisible into " + std::to_string(channels) +
                                        " channels");
    Vec values;
    values.reserve(count);
    for (std::size_t k = 1; k < toks.size(); ++k) {
      double v = 0.0;
      if (!detail::parse_double(toks[k], v) || !std::isfinite(v))
        throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": bad value '" +
                                          std::string(toks[k]) + "'");
      values.push_back(v);
    }
    const auto length = count / channels;
    if (!samples.empty() && samples.front().values.length() != length)
      throw Error(ErrorKind::shape, path + ":" + std::to_string(line_no) + ": length " +
                                        std::to_string(length) + " != " +
                                        std::to_string(samples.front().values.length()));
    samples.push_back({Signal(channels, length, std::move(values)), labels.id(toks[0])});
  }
  return detail::finish(std::move(samples), labels, path);
}

inline void write_ucr_tsv(const Dataset& ds, const std::string& path) {
  if (ds.channels() > 1) throw Error(ErrorKind::validation, "UCR TSV holds univariate series only");
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << std::setprecision(17);
  for (const auto& s : ds.samples) {
    out << (ds.original_labels.empty() ? std::to_string(s.label) : ds.original_labels[s.label]);
    for (double v : s.values.values()) out << '\t' << v;
    out << '\n';
  }
}

inline void write_multichannel_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << std::setprecision(17);
  for (const auto& s : ds.samples) {
    out << (ds.original_labels.empty() ? std::to_string(s.label) : ds.original_labels[s.label]);
    for (double v : s.values.values()) out << ',' << v;
    out << '\n';
  }
}

/// Two sine classes: label 0 is sin(2 pi t / T), label 1 is sin(4 pi t / T),
/// each with additive N(0, noise_sigma^2). The first n/2 samples are class 0.
inline Dataset synth_two_class(std::size_t n, std::size_t length, double noise_sigma, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw Error(ErrorKind::validation, "synth_two_class: n must be even and positive");
  if (length < 8) throw Error(ErrorKind::validation, "synth_two_class: T must be >= 8");
  if (noise_sigma < 0.0) throw Error(ErrorKind::validation, "synth_two_class: noise_sigma must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.num_classes = 2;
  ds.original_labels = {"0", "1"};
  ds.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t label = k < n / 2 ? 0 : 1;
    const double freq = label == 0 ? 2.0 : 4.0;
    Signal sig(1, length);
    for (std::size_t t = 0; t < length; ++t) {
      const double clean = std::sin(freq * std::numbers::pi * static_cast<double>(t) / static_cast<double>(length));
      sig(0, t) = clean + noise_sigma * noise(rng);
    }
    ds.samples.push_back({std::move(sig), label});
  }
  return ds;
}

/// Per-sample, per-channel z-score (population standard deviation).
/// Zero-variance channels become all zeros.
inline Dataset znormalize(Dataset ds) {
  for (auto& s : ds.samples) {
    auto& sig = s.values;
    const auto T = sig.length();
    for (std::size_t c = 0; c < sig.channels(); ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += sig(c, t);
      mean /= static_cast<double>(T);
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) var += (sig(c, t) - mean) * (sig(c, t) - mean);
      var /= static_cast<double>(T);
      const double sd = std::sqrt(var);
      const double scale = std::max(1.0, std::abs(mean));
      for (std::size_t t = 0; t < T; ++t) sig(c, t) = sd > 1e-12 * scale ? (sig(c, t) - mean) / sd : 0.0;
    }
  }
  return ds;
}

}  // namespace rots

#endif
