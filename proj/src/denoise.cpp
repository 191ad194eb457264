// SPDX-License-Identifier: Apache-2.0
#include "rcs/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs {

namespace {

struct EventWindow {
  const AnnotatedSpectrogram* doc;
  std::size_t begin;
  std::size_t end;
};

void pearson_per_band(const Spectrogram& s, const TargetVector& y, std::size_t begin, std::size_t end,
                      std::span<double> out) {
  const auto n = static_cast<double>(end - begin);
  double y_mean = 0.0;
  for (std::size_t t = begin; t < end; ++t) y_mean += y.values[t];
  y_mean /= n;
  double y_var = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const double d = y.values[t] - y_mean;
    y_var += d * d;
  }
  for (std::size_t f = 0; f < s.bands; ++f) {
    double s_mean = 0.0;
    for (std::size_t t = begin; t < end; ++t) s_mean += s.at(t, f);
    s_mean /= n;
    double cov = 0.0, s_var = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      const double ds = s.at(t, f) - s_mean;
      cov += ds * (y.values[t] - y_mean);
      s_var += ds * ds;
    }
    if (s_var == 0.0 || y_var == 0.0) {
      out[f] = 0.0;
    } else {
      out[f] = std::clamp(cov / std::sqrt(s_var * y_var), -1.0, 1.0);
    }
  }
}

std::size_t frames_for(double seconds, double hop) {
  return static_cast<std::size_t>(std::floor(seconds / hop + 1e-9));
}

}  // namespace

void DenoiseConfig::validate() const {
  if (!(subtraction_window_seconds > 0.0))
    throw Error(ErrorKind::Config, "denoise.subtraction_window_seconds must be > 0");
  if (context_seconds < 0.0) throw Error(ErrorKind::Config, "denoise.context_seconds must be >= 0");
}

ClassMask compute_class_mask(std::span<const AnnotatedSpectrogram> corpus, const std::string& class_label,
                             double context_seconds) {
  if (context_seconds < 0.0) throw Error(ErrorKind::Config, "context must be >= 0");
  std::size_t bands = 0;
  std::size_t context_frames = 0;
  std::vector<EventWindow> windows;
  for (const AnnotatedSpectrogram& doc : corpus) {
    const Spectrogram& s = *doc.spectrogram;
    if (doc.target->size() != s.frames)
      throw Error(ErrorKind::Shape, "target length differs from spectrogram frames for " + s.source_id);
    if (bands == 0) bands = s.bands;
    if (s.bands != bands) throw Error(ErrorKind::Shape, "corpus spectrograms differ in band count");
    context_frames = static_cast<std::size_t>(std::lround(context_seconds / s.hop));
    for (const Event& e : *doc.events) {
      if (e.source_id != s.source_id || e.class_label != class_label) continue;
      const FrameSpan span = event_frames(e.start, e.end, s.hop, s.frames);
      if (span.empty()) continue;
      const std::size_t begin = span.first > context_frames ? span.first - context_frames : 0;
      const std::size_t end = std::min(s.frames, span.last + context_frames);
      windows.push_back({&doc, begin, end});
    }
  }
  if (windows.empty())
    throw Error(ErrorKind::EmptyCorpus, "no events of class '" + class_label + "' in the mask corpus");

  std::vector<double> per_event(windows.size() * bands);
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const EventWindow& w = windows[static_cast<std::size_t>(i)];
    pearson_per_band(*w.doc->spectrogram, *w.doc->target, w.begin, w.end,
                     std::span<double>(per_event).subspan(static_cast<std::size_t>(i) * bands, bands));
  }

  ClassMask mask;
  mask.class_label = class_label;
  mask.context_frames = context_frames;
  mask.event_count = windows.size();
  mask.r.assign(bands, 0.0);
  for (std::size_t e = 0; e < windows.size(); ++e)
    for (std::size_t f = 0; f < bands; ++f) mask.r[f] += per_event[e * bands + f];
  for (double& v : mask.r) v /= static_cast<double>(windows.size());
  return mask;
}

Spectrogram apply_frequency_removal(const Spectrogram& s, const ClassMask& mask, double threshold) {
  if (mask.r.size() != s.bands)
    throw Error(ErrorKind::Shape, "class mask has " + std::to_string(mask.r.size()) + " bands, spectrogram " +
                                      std::to_string(s.bands));
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < s.bands; ++f)
    if (mask.r[f] >= threshold) keep.push_back(f);
  if (keep.empty())
    throw Error(ErrorKind::Config, "frequency removal at threshold " + detail::format_double(threshold) +
                                       " retains no bands");
  Spectrogram out(s.frames, keep.size(), s.hop);
  out.source_id = s.source_id;
  out.band_frequencies.reserve(keep.size());
  for (const std::size_t f : keep) out.band_frequencies.push_back(s.band_frequencies[f]);
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t k = 0; k < keep.size(); ++k) out.at(t, k) = s.at(t, keep[k]);
  return out;
}

Spectrogram spectral_subtraction(const Spectrogram& s, double window_seconds) {
  if (!(window_seconds > 0.0)) throw Error(ErrorKind::Config, "subtraction window must be > 0");
  const std::size_t window = std::max<std::size_t>(1, frames_for(window_seconds, s.hop));
  Spectrogram out = s;
  std::vector<double> mean(s.bands);
  for (std::size_t begin = 0; begin < s.frames; begin += window) {
    const std::size_t end = std::min(s.frames, begin + window);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t t = begin; t < end; ++t)
      for (std::size_t f = 0; f < s.bands; ++f) mean[f] += s.at(t, f);
    for (double& m : mean) m /= static_cast<double>(end - begin);
    for (std::size_t t = begin; t < end; ++t)
      for (std::size_t f = 0; f < s.bands; ++f)
        out.at(t, f) = static_cast<float>(static_cast<double>(s.at(t, f)) - mean[f]);
  }
  return out;
}

Standardizer fit_standardizer(std::span<const Spectrogram> training) {
  std::size_t count = 0;
  double sum = 0.0;
  for (const Spectrogram& s : training) {
    for (const float v : s.data) sum += v;
    count += s.data.size();
  }
  if (count < 2) throw Error(ErrorKind::DegenerateCorpus, "standardizer needs at least two entries");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const Spectrogram& s : training)
    for (const float v : s.data) {
      const double d = v - mean;
      sq += d * d;
    }
  const double std = std::sqrt(sq / static_cast<double>(count));
  if (!(std > 0.0)) throw Error(ErrorKind::DegenerateCorpus, "training spectrograms have zero variance");
  return Standardizer{mean, std};
}

Spectrogram apply_standardizer(const Spectrogram& s, const Standardizer& z) {
  Spectrogram out = s;
  for (float& v : out.data) v = static_cast<float>((static_cast<double>(v) - z.mean) / z.std);
  return out;
}

void save_class_mask(const std::filesystem::path& path, const ClassMask& mask,
                     std::span<const float> band_frequencies) {
  if (band_frequencies.size() != mask.r.size())
    throw Error(ErrorKind::Shape, "band frequency count differs from mask length");
  std::ostringstream out;
  out << "band_index,center_hz,r\n";
  for (std::size_t f = 0; f < mask.r.size(); ++f) {
    out << f << ',' << detail::format_float(band_frequencies[f]) << ',' << detail::format_double(mask.r[f])
        << '\n';
  }
  detail::write_text_file(path, out.str());
}

LoadedClassMask load_class_mask(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(detail::strip_bom(line)) !=
                                     std::vector<std::string>{"band_index", "center_hz", "r"})
    throw Error(ErrorKind::Format, path.string() + ": header must be band_index,center_hz,r");
  LoadedClassMask loaded;
  loaded.mask.class_label = path.stem().string();
  loaded.mask.event_count = 1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (fields.size() != 3) throw Error(ErrorKind::Parse, where + ": expected 3 fields");
    const auto index = detail::parse_double(fields[0]);
    const auto hz = detail::parse_double(fields[1]);
    const auto r = detail::parse_double(fields[2]);
    if (!index || !hz || !r) throw Error(ErrorKind::Parse, where + ": non-numeric field");
    if (*index != static_cast<double>(loaded.mask.r.size()))
      throw Error(ErrorKind::Validation, where + ": band_index out of sequence");
    if (*r < -1.0 || *r > 1.0) throw Error(ErrorKind::Validation, where + ": r outside [-1, 1]");
    loaded.band_frequencies.push_back(static_cast<float>(*hz));
    loaded.mask.r.push_back(*r);
  }
  if (loaded.mask.r.empty()) throw Error(ErrorKind::Format, path.string() + ": no bands");
  return loaded;
}

void save_standardizer(const std::filesystem::path& path, const Standardizer& z) {
  nlohmann::json j{{"mean", z.mean}, {"std", z.std}};
  detail::write_text_file(path, j.dump(2) + "\n");
}

Standardizer load_standardizer(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(detail::read_text_file(path));
    Standardizer z{j.at("mean").get<double>(), j.at("std").get<double>()};
    if (!(z.std > 0.0)) throw Error(ErrorKind::Validation, path.string() + ": std must be positive");
    return z;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

}  // namespace rcs
