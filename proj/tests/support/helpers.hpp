// SPDX-License-Identifier: Apache-2.0
// Shared test utilities: scratch directories, WAV byte builders and
// hand-rolled random generators for property tests.
#pragma once

#include <cstdint>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rcs/audio.hpp"
#include "rcs/features.hpp"

namespace rcs::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rcs-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}
inline void put_tag(std::vector<std::uint8_t>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

/// RIFF/WAVE bytes around already-encoded interleaved sample data.
inline std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                           std::uint16_t bits, const std::vector<std::uint8_t>& data,
                                           bool extensible = false) {
  std::vector<std::uint8_t> fmt;
  put_u16(fmt, extensible ? 0xFFFE : format);
  put_u16(fmt, channels);
  put_u32(fmt, rate);
  put_u32(fmt, rate * channels * (bits / 8));
  put_u16(fmt, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(fmt, bits);
  if (extensible) {
    put_u16(fmt, 22);
    put_u16(fmt, bits);
    put_u32(fmt, channels == 1 ? 0x4 : 0x3);
    put_u16(fmt, format);  // sub-format GUID starts with the format tag
    const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                        0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
    fmt.insert(fmt.end(), guid_tail, guid_tail + 14);
  }
  std::vector<std::uint8_t> out;
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data.size() + (data.size() & 1)));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, static_cast<std::uint32_t>(fmt.size()));
  out.insert(out.end(), fmt.begin(), fmt.end());
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), data.begin(), data.end());
  if (data.size() & 1) out.push_back(0);
  return out;
}

inline std::vector<std::uint8_t> pcm16(const std::vector<std::int16_t>& v) {
  std::vector<std::uint8_t> b;
  for (auto s : v) put_u16(b, static_cast<std::uint16_t>(s));
  return b;
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// ---- generators ----

using Gen = std::mt19937_64;

inline std::vector<float> random_floats(Gen& g, std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

inline std::vector<std::uint8_t> random_labels(Gen& g, std::size_t n, double p_one) {
  std::bernoulli_distribution d(p_one);
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = d(g) ? 1 : 0;
  return v;
}

inline std::size_t random_size(Gen& g, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

inline Spectrogram random_spectrogram(Gen& g, std::size_t t, std::size_t f, double hop = 0.02,
                                      const std::string& id = "s") {
  Spectrogram s(t, f, hop);
  s.data = random_floats(g, t * f, -3.0f, 3.0f);
  s.band_frequencies.resize(f);
  for (std::size_t i = 0; i < f; ++i) s.band_frequencies[i] = 100.0f * static_cast<float>(i + 1);
  s.source_id = id;
  return s;
}

inline AudioSignal sine(double freq, double seconds, int rate = 16000, double amp = 0.5, const std::string& id = "x") {
  AudioSignal a;
  a.sample_rate = rate;
  a.source_id = id;
  a.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * 3.141592653589793 * freq * i / rate));
  return a;
}

}  // namespace rcs::testing

#include <optional>

#include "rcs/error.hpp"

namespace rcs::testing {

/// Kind of the rcs::Error thrown by @p f, or nothing when it returns normally.
template <typename F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

template <typename F>
std::string error_text(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace rcs::testing
