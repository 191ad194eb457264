// SPDX-License-Identifier: Apache-2.0
#include "rcs/features.hpp"

#include <fftw3.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "rcs/detail/bytes.hpp"
#include "rcs/detail/fftw.hpp"
#include "rcs/error.hpp"

namespace rcs {

namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMinLogHz = 1000.0;
constexpr double kMinLogMel = kMinLogHz / kMelLinearStep;
const double kLogStep = std::log(6.4) / 27.0;

constexpr std::uint32_t kSpecVersion = 1;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// numpy "reflect" padding (edge sample not repeated), applied repeatedly for long overhangs.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t length) {
  if (length == 1) return 0;
  const auto n = static_cast<std::ptrdiff_t>(length);
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// Windowed frame t, zero-filled outside the centred window.
void fill_frame(std::span<const float> x, const StftGeometry& g, std::span<const double> window,
                std::size_t t, std::span<double> buffer) {
  std::fill(buffer.begin(), buffer.end(), 0.0);
  const std::size_t offset = (g.fft_size - g.frame_samples) / 2;
  const auto pad = static_cast<std::ptrdiff_t>(g.fft_size / 2);
  const auto base = static_cast<std::ptrdiff_t>(t * g.hop_samples) - pad + static_cast<std::ptrdiff_t>(offset);
  for (std::size_t k = 0; k < g.frame_samples; ++k) {
    const std::size_t idx = reflect_index(base + static_cast<std::ptrdiff_t>(k), x.size());
    buffer[offset + k] = static_cast<double>(x[idx]) * window[k];
  }
}

class FftPlanCache {
 public:
  static fftw_plan get(std::size_t n) {
    static FftPlanCache cache;
    std::lock_guard lock(detail::fftw_planner_mutex());
    auto it = cache.plans_.find(n);
    if (it != cache.plans_.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    cache.plans_.emplace(n, plan);
    return plan;
  }

 private:
  // Touch the lock first so it outlives the cache at static destruction.
  FftPlanCache() { (void)detail::fftw_planner_mutex(); }
  ~FftPlanCache() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::map<std::size_t, fftw_plan> plans_;
};

struct FftwRealBuffer {
  explicit FftwRealBuffer(std::size_t n) : ptr(fftw_alloc_real(n)), size(n) {}
  ~FftwRealBuffer() { fftw_free(ptr); }
  FftwRealBuffer(const FftwRealBuffer&) = delete;
  FftwRealBuffer& operator=(const FftwRealBuffer&) = delete;
  double* ptr;
  std::size_t size;
};

struct FftwComplexBuffer {
  explicit FftwComplexBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {}
  ~FftwComplexBuffer() { fftw_free(ptr); }
  FftwComplexBuffer(const FftwComplexBuffer&) = delete;
  FftwComplexBuffer& operator=(const FftwComplexBuffer&) = delete;
  fftw_complex* ptr;
};

Spectrogram make_output(const AudioSignal& signal, const StftGeometry& g) {
  if (signal.samples.empty()) throw Error(ErrorKind::Validation, "signal has no samples");
  Spectrogram s(g.frame_count(signal.samples.size()), static_cast<std::size_t>(g.n_mels), g.hop_seconds());
  s.band_frequencies = band_center_frequencies(g.n_mels, g.fmin, g.fmax);
  s.source_id = signal.source_id;
  return s;
}

void store_log_mel(std::span<const double> mel, double floor, std::span<float> out) {
  for (std::size_t f = 0; f < mel.size(); ++f) out[f] = static_cast<float>(std::log(std::max(mel[f], floor)));
}

}  // namespace

StftGeometry StftGeometry::resolve(const FeatureConfig& config, int sample_rate) {
  if (sample_rate <= 0) throw Error(ErrorKind::Config, "sample_rate must be positive");
  if (!(config.frame_length > 0.0) || !(config.hop_length > 0.0))
    throw Error(ErrorKind::Config, "frame_length and hop_length must be positive");
  if (config.hop_length > config.frame_length)
    throw Error(ErrorKind::Config, "hop_length must not exceed frame_length");
  if (config.n_mels < 1) throw Error(ErrorKind::Config, "n_mels must be >= 1");
  if (!(config.log_floor > 0.0)) throw Error(ErrorKind::Config, "log_floor must be positive");

  StftGeometry g;
  g.sample_rate = sample_rate;
  g.n_mels = config.n_mels;
  g.log_floor = config.log_floor;
  g.frame_samples = static_cast<std::size_t>(std::lround(config.frame_length * sample_rate));
  g.hop_samples = static_cast<std::size_t>(std::lround(config.hop_length * sample_rate));
  if (g.frame_samples == 0 || g.hop_samples == 0)
    throw Error(ErrorKind::Config, "frame or hop shorter than one sample");
  g.fft_size = config.fft_size > 0 ? static_cast<std::size_t>(config.fft_size) : next_pow2(g.frame_samples);
  if (g.fft_size < g.frame_samples) throw Error(ErrorKind::Config, "fft_size smaller than frame");
  const double nyquist = sample_rate / 2.0;
  g.fmin = config.fmin;
  g.fmax = config.fmax > 0.0 ? config.fmax : nyquist;
  if (g.fmin < 0.0 || !(g.fmin < g.fmax) || g.fmax > nyquist)
    throw Error(ErrorKind::Config, "require 0 <= fmin < fmax <= sample_rate/2");
  return g;
}

void Spectrogram::check() const {
  if (frames == 0 || bands == 0) throw Error(ErrorKind::Shape, "spectrogram must have T >= 1 and F >= 1");
  if (data.size() != frames * bands) throw Error(ErrorKind::Shape, "spectrogram data size != T*F");
  if (band_frequencies.size() != bands)
    throw Error(ErrorKind::Shape, "band_frequencies size != F");
  for (const float v : data)
    if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "spectrogram contains NaN/Inf");
}

double hz_to_mel(double hz) {
  if (hz >= kMinLogHz) return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
  return hz / kMelLinearStep;
}

double mel_to_hz(double mel) {
  if (mel >= kMinLogMel) return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
  return kMelLinearStep * mel;
}

MelFilterbank::MelFilterbank(int sample_rate, std::size_t fft_size, int n_mels, double fmin, double fmax)
    : n_mels_(n_mels), bins_(fft_size / 2 + 1), weights_(static_cast<std::size_t>(n_mels) * bins_, 0.0) {
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(edges.size() - 1));
  }
  support_.resize(static_cast<std::size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    std::size_t first = bins_, last = 0;
    for (std::size_t k = 0; k < bins_; ++k) {
      const double freq = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      const double rising = (freq - lo) / (centre - lo);
      const double falling = (hi - freq) / (hi - centre);
      const double w = std::max(0.0, std::min(rising, falling));
      if (w > 0.0) {
        weights_[m * bins_ + k] = w * norm;
        first = std::min(first, k);
        last = k + 1;
      }
    }
    support_[m] = first < last ? std::pair{first, last} : std::pair{std::size_t{0}, std::size_t{0}};
  }
}

void MelFilterbank::apply(std::span<const double> magnitude, std::span<double> out) const {
  for (int m = 0; m < n_mels_; ++m) {
    const auto [first, last] = support_[m];
    double acc = 0.0;
    for (std::size_t k = first; k < last; ++k) acc += weights_[m * bins_ + k] * magnitude[k];
    out[m] = acc;
  }
}

std::vector<float> band_center_frequencies(int n_mels, double fmin, double fmax) {
  std::vector<float> centres(static_cast<std::size_t>(n_mels));
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (int i = 0; i < n_mels; ++i) {
    const double frac = n_mels > 1 ? static_cast<double>(i) / (n_mels - 1) : 0.0;
    centres[i] = static_cast<float>(mel_to_hz(lo + (hi - lo) * frac));
  }
  return centres;
}

Spectrogram compute_log_mel(const AudioSignal& signal, const FeatureConfig& config) {
  const StftGeometry g = StftGeometry::resolve(config, signal.sample_rate);
  Spectrogram s = make_output(signal, g);
  const MelFilterbank bank(g.sample_rate, g.fft_size, g.n_mels, g.fmin, g.fmax);
  const std::vector<double> window = periodic_hann(g.frame_samples);
  const fftw_plan plan = FftPlanCache::get(g.fft_size);
  const std::size_t bins = g.fft_size / 2 + 1;
  const auto frames = static_cast<std::ptrdiff_t>(s.frames);

#pragma omp parallel
  {
    FftwRealBuffer in(g.fft_size);
    FftwComplexBuffer out(bins);
    std::vector<double> magnitude(bins), mel(static_cast<std::size_t>(g.n_mels));
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
      fill_frame(signal.samples, g, window, static_cast<std::size_t>(t), {in.ptr, g.fft_size});
      fftw_execute_dft_r2c(plan, in.ptr, out.ptr);
      for (std::size_t k = 0; k < bins; ++k) magnitude[k] = std::hypot(out.ptr[k][0], out.ptr[k][1]);
      bank.apply(magnitude, mel);
      store_log_mel(mel, g.log_floor, s.frame(static_cast<std::size_t>(t)));
    }
  }
  return s;
}

namespace reference {

Spectrogram compute_log_mel(const AudioSignal& signal, const FeatureConfig& config) {
  const StftGeometry g = StftGeometry::resolve(config, signal.sample_rate);
  Spectrogram s = make_output(signal, g);
  const MelFilterbank bank(g.sample_rate, g.fft_size, g.n_mels, g.fmin, g.fmax);
  const std::vector<double> window = periodic_hann(g.frame_samples);
  const std::size_t n = g.fft_size;
  const std::size_t bins = n / 2 + 1;
  std::vector<double> cos_table(n), sin_table(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    cos_table[i] = std::cos(angle);
    sin_table[i] = std::sin(angle);
  }
  std::vector<double> frame(n), magnitude(bins), mel(static_cast<std::size_t>(g.n_mels));
  for (std::size_t t = 0; t < s.frames; ++t) {
    fill_frame(signal.samples, g, window, t, frame);
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t phase = (k * j) % n;
        re += frame[j] * cos_table[phase];
        im -= frame[j] * sin_table[phase];
      }
      magnitude[k] = std::hypot(re, im);
    }
    bank.apply(magnitude, mel);
    store_log_mel(mel, g.log_floor, s.frame(t));
  }
  return s;
}

}  // namespace reference

std::vector<std::size_t> band_range(std::span<const float> band_frequencies, double lo, double hi) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < band_frequencies.size(); ++i) {
    const double whole_hz = std::floor(static_cast<double>(band_frequencies[i]));
    if (whole_hz >= lo && whole_hz <= hi) out.push_back(i);
  }
  return out;
}

void save_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  s.check();
  std::vector<std::byte> out;
  out.reserve(20 + 4 * (s.bands + s.data.size()));
  detail::append_tag(out, "SPEC");
  detail::append_le<std::uint32_t>(out, kSpecVersion);
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.bands));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::llround(s.hop * 1e6)));
  for (const float f : s.band_frequencies) detail::append_le<float>(out, f);
  for (const float v : s.data) detail::append_le<float>(out, v);
  detail::write_file_bytes(path, out);
}

Spectrogram load_spectrogram(const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = detail::read_file_bytes(path);
  detail::ByteReader reader(bytes, path.string());
  if (reader.read_string(4, "magic") != "SPEC") throw Error(ErrorKind::Load, path.string() + ": bad magic");
  const auto version = reader.read<std::uint32_t>("version");
  if (version != kSpecVersion)
    throw Error(ErrorKind::Load, path.string() + ": unsupported version " + std::to_string(version));
  const auto frames = reader.read<std::uint32_t>("T");
  const auto bands = reader.read<std::uint32_t>("F");
  const auto hop_us = reader.read<std::uint32_t>("hop_microseconds");
  Spectrogram s(frames, bands, static_cast<double>(hop_us) / 1e6);
  s.source_id = path.stem().string();
  reader.require(4ull * bands, "band frequencies");
  s.band_frequencies.resize(bands);
  for (auto& f : s.band_frequencies) f = reader.read<float>("band frequencies");
  reader.require(4ull * frames * bands, "spectrogram data");
  for (auto& v : s.data) v = reader.read<float>("spectrogram data");
  if (reader.remaining() != 0) throw Error(ErrorKind::Load, path.string() + ": trailing bytes");
  return s;
}

}  // namespace rcs
