// SPDX-License-Identifier: Apache-2.0
#include "rcs/audio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>

#include "rcs/detail/bytes.hpp"
#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

[[noreturn]] void format_error(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorKind::Format, path.string() + ": " + what);
}

[[noreturn]] void unsupported(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorKind::Unsupported, path.string() + ": " + what);
}

WavFormat parse_fmt(const std::filesystem::path& path, std::span<const std::byte> chunk) {
  if (chunk.size() < 16) format_error(path, "fmt chunk size " + std::to_string(chunk.size()) + " < 16");
  WavFormat fmt;
  fmt.format = detail::read_le<std::uint16_t>(chunk, 0);
  fmt.channels = detail::read_le<std::uint16_t>(chunk, 2);
  fmt.sample_rate = detail::read_le<std::uint32_t>(chunk, 4);
  fmt.block_align = detail::read_le<std::uint16_t>(chunk, 12);
  fmt.bits = detail::read_le<std::uint16_t>(chunk, 14);
  if (fmt.format == kFormatExtensible) {
    if (chunk.size() < 26) format_error(path, "fmt extensible chunk too short for sub-format");
    fmt.format = detail::read_le<std::uint16_t>(chunk, 24);
  }
  if (fmt.channels == 0) format_error(path, "fmt.channels = 0");
  if (fmt.sample_rate == 0) format_error(path, "fmt.sample_rate = 0");
  if (fmt.format != kFormatPcm && fmt.format != kFormatFloat)
    unsupported(path, "fmt.audio_format = " + std::to_string(fmt.format));
  if (fmt.channels > 2) unsupported(path, "fmt.channels = " + std::to_string(fmt.channels));
  const bool int_ok = fmt.format == kFormatPcm && (fmt.bits == 8 || fmt.bits == 16 || fmt.bits == 24);
  const bool float_ok = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!int_ok && !float_ok)
    unsupported(path, "fmt.bits_per_sample = " + std::to_string(fmt.bits) + " for audio_format " +
                          std::to_string(fmt.format));
  if (fmt.block_align != fmt.channels * (fmt.bits / 8))
    format_error(path, "fmt.block_align = " + std::to_string(fmt.block_align));
  return fmt;
}

float decode_sample(std::span<const std::byte> data, std::size_t offset, const WavFormat& fmt) {
  switch (fmt.bits) {
    case 8:
      return (static_cast<float>(std::to_integer<std::uint8_t>(data[offset])) - 128.0f) / 128.0f;
    case 16:
      return static_cast<float>(detail::read_le<std::int16_t>(data, offset)) / 32768.0f;
    case 24: {
      std::uint32_t raw = std::to_integer<std::uint32_t>(data[offset]) |
                          (std::to_integer<std::uint32_t>(data[offset + 1]) << 8) |
                          (std::to_integer<std::uint32_t>(data[offset + 2]) << 16);
      if (raw & 0x800000u) raw |= 0xFF000000u;
      return static_cast<float>(static_cast<std::int32_t>(raw)) / 8388608.0f;
    }
    default:
      return detail::read_le<float>(data, offset);
  }
}

}  // namespace

AudioSignal load_wav(const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = detail::read_file_bytes(path);
  const std::span<const std::byte> file(bytes);
  if (file.size() < 12) format_error(path, "file shorter than RIFF header");
  if (detail::read_tag(file, 0) != "RIFF") format_error(path, "RIFF magic missing");
  if (detail::read_tag(file, 8) != "WAVE") format_error(path, "RIFF form type is not WAVE");

  std::optional<WavFormat> fmt;
  std::span<const std::byte> data;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= file.size()) {
    const std::string id = detail::read_tag(file, pos);
    const std::size_t size = detail::read_le<std::uint32_t>(file, pos + 4);
    const std::size_t body = pos + 8;
    if (size > file.size() - body) {
      format_error(path, "chunk '" + id + "' size " + std::to_string(size) + " exceeds file length");
    }
    if (id == "fmt ") {
      fmt = parse_fmt(path, file.subspan(body, size));
    } else if (id == "data") {
      data = file.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!fmt) format_error(path, "fmt chunk missing");
  if (!have_data) format_error(path, "data chunk missing");

  const std::size_t frame_bytes = fmt->block_align;
  if (data.size() % frame_bytes != 0)
    format_error(path, "data chunk size " + std::to_string(data.size()) +
                           " is not a multiple of block_align");
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) format_error(path, "data chunk holds no samples");

  AudioSignal signal;
  signal.sample_rate = static_cast<int>(fmt->sample_rate);
  signal.source_id = path.stem().string();
  signal.samples.resize(frames);
  const std::size_t sample_bytes = fmt->bits / 8;
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t offset = i * frame_bytes;
    if (fmt->channels == 1) {
      signal.samples[i] = decode_sample(data, offset, *fmt);
    } else {
      const float left = decode_sample(data, offset, *fmt);
      const float right = decode_sample(data, offset + sample_bytes, *fmt);
      signal.samples[i] = 0.5f * (left + right);
    }
  }
  return signal;
}

void write_wav(const std::filesystem::path& path, const AudioSignal& signal) {
  if (signal.sample_rate <= 0) throw Error(ErrorKind::Validation, "sample_rate must be positive");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  std::vector<std::byte> out;
  out.reserve(44 + data_bytes);
  detail::append_tag(out, "RIFF");
  detail::append_le<std::uint32_t>(out, 36 + data_bytes);
  detail::append_tag(out, "WAVE");
  detail::append_tag(out, "fmt ");
  detail::append_le<std::uint32_t>(out, 16);
  detail::append_le<std::uint16_t>(out, kFormatPcm);
  detail::append_le<std::uint16_t>(out, 1);
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);
  detail::append_le<std::uint16_t>(out, 2);
  detail::append_le<std::uint16_t>(out, 16);
  detail::append_tag(out, "data");
  detail::append_le<std::uint32_t>(out, data_bytes);
  for (const float x : signal.samples) {
    const float clipped = std::clamp(x, -1.0f, 1.0f);
    const long q = std::lround(static_cast<double>(clipped) * 32767.0);
    detail::append_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }
  detail::write_file_bytes(path, out);
}

AudioSignal peak_normalize(AudioSignal signal) {
  float peak = 0.0f;
  for (const float x : signal.samples) peak = std::max(peak, std::abs(x));
  if (peak == 0.0f) return signal;
  for (float& x : signal.samples) x /= peak;
  return signal;
}

EventList parse_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open annotation file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, path.string() + ": missing header");
  ++line_no;
  const auto header = detail::split_csv_line(detail::strip_bom(line));
  const std::vector<std::string> expected{"recording_id", "start_seconds", "end_seconds", "class"};
  if (header != expected)
    throw Error(ErrorKind::Format,
                path.string() + ": header must be recording_id,start_seconds,end_seconds,class");

  EventList events;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path.string() + " row " + std::to_string(line_no);
    if (fields.size() != 4)
      throw Error(ErrorKind::Parse, where + ": expected 4 fields, got " + std::to_string(fields.size()));
    Event e;
    e.source_id = fields[0];
    e.class_label = fields[3];
    const auto start = detail::parse_double(fields[1]);
    const auto end = detail::parse_double(fields[2]);
    if (!start) throw Error(ErrorKind::Parse, where + ": start_seconds '" + fields[1] + "' is not numeric");
    if (!end) throw Error(ErrorKind::Parse, where + ": end_seconds '" + fields[2] + "' is not numeric");
    e.start = *start;
    e.end = *end;
    if (e.start < 0.0) throw Error(ErrorKind::Validation, where + ": start_seconds < 0");
    if (!(e.end > e.start)) throw Error(ErrorKind::Validation, where + ": end_seconds <= start_seconds");
    events.push_back(std::move(e));
  }
  return events;
}

void write_annotations(const std::filesystem::path& path, const EventList& events) {
  std::ostringstream out;
  out << "recording_id,start_seconds,end_seconds,class\n";
  for (const Event& e : events) {
    out << e.source_id << ',' << detail::format_double(e.start) << ','
        << detail::format_double(e.end) << ',' << e.class_label << '\n';
  }
  detail::write_text_file(path, out.str());
}

std::size_t TargetVector::positives() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

FrameSpan event_frames(double start, double end, double hop, std::size_t frame_count) {
  constexpr double kSnap = 1e-9;
  const auto to_frame = [&](double seconds) -> std::size_t {
    const double idx = std::ceil(seconds / hop - kSnap);
    if (idx <= 0.0) return 0;
    if (idx >= static_cast<double>(frame_count)) return frame_count;
    return static_cast<std::size_t>(idx);
  };
  return FrameSpan{to_frame(start), to_frame(end)};
}

TargetVector rasterize_targets(const EventList& events, std::string_view source_id,
                               std::size_t frame_count, double hop,
                               std::string_view class_label) {
  if (frame_count == 0) throw Error(ErrorKind::Validation, "frame_count must be positive");
  if (!(hop > 0.0)) throw Error(ErrorKind::Validation, "hop must be positive");
  TargetVector target;
  target.hop = hop;
  target.values.assign(frame_count, 0);
  for (const Event& e : events) {
    if (e.source_id != source_id || e.class_label != class_label) continue;
    const FrameSpan span = event_frames(e.start, e.end, hop, frame_count);
    for (std::size_t t = span.first; t < span.last; ++t) target.values[t] = 1;
  }
  return target;
}

}  // namespace rcs
