// SPDX-License-Identifier: Apache-2.0
#include "rcs/synthgen.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <numbers>

#include "rcs/detail/fftw.hpp"
#include "rcs/detail/random.hpp"
#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs {

std::string_view to_string(EventStyle s) noexcept { return s == EventStyle::Pulses ? "pulses" : "harmonic"; }

EventStyle parse_event_style(std::string_view text) {
  if (text == "pulses") return EventStyle::Pulses;
  if (text == "harmonic") return EventStyle::Harmonic;
  throw Error(ErrorKind::Config, "unknown event style '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
  if (sample_rate <= 0) throw Error(ErrorKind::Config, "synth.sample_rate must be positive");
  if (!(recording_seconds > 0.0)) throw Error(ErrorKind::Config, "synth.recording_seconds must be positive");
  if (!(frame_hop > 0.0)) throw Error(ErrorKind::Config, "synth.frame_hop must be positive");
  if (!(noise_variance >= 0.0)) throw Error(ErrorKind::Config, "synth.noise_variance must be >= 0");
  if (!std::isfinite(snr_db)) throw Error(ErrorKind::Config, "synth.snr_db must be finite");
  const double nyquist = sample_rate / 2.0;
  bool budgeted = false;
  for (const auto& c : classes) {
    if (!(c.band_lo >= 0.0 && c.band_hi > c.band_lo && c.band_hi <= nyquist))
      throw Error(ErrorKind::Config, "class " + c.label + ": band must satisfy 0 <= lo < hi <= Nyquist");
    if (!(c.min_duration > 0.0 && c.max_duration >= c.min_duration))
      throw Error(ErrorKind::Config, "class " + c.label + ": durations must be positive with min <= max");
    if (c.label.empty()) throw Error(ErrorKind::Config, "class label must be non-empty");
    budgeted = budgeted || !c.events_per_recording;
  }
  if (budgeted && !(prevalence > 0.0 && prevalence < 1.0))
    throw Error(ErrorKind::Config, "synth.prevalence must lie in (0, 1)");
}

SynthConfig drumming_preset() {
  SynthConfig c;
  c.classes = {EventClassSpec{"drumming", EventStyle::Pulses, 30.0, 150.0, 0.8, 2.0, std::nullopt}};
  c.prevalence = 0.0002;
  return c;
}

SynthConfig vocalization_preset() {
  SynthConfig c;
  c.classes = {EventClassSpec{"vocalization", EventStyle::Harmonic, 200.0, 2000.0, 2.0, 6.0, std::nullopt}};
  c.prevalence = 0.0006;
  return c;
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& k : c.classes) {
    nlohmann::json j{{"label", k.label},
                     {"style", std::string(to_string(k.style))},
                     {"band_lo", k.band_lo},
                     {"band_hi", k.band_hi},
                     {"min_duration", k.min_duration},
                     {"max_duration", k.max_duration}};
    if (k.events_per_recording) j["events_per_recording"] = *k.events_per_recording;
    classes.push_back(j);
  }
  return {{"n_recordings", c.n_recordings}, {"recording_seconds", c.recording_seconds},
          {"sample_rate", c.sample_rate},   {"classes", classes},
          {"prevalence", c.prevalence},     {"noise_variance", c.noise_variance},
          {"snr_db", c.snr_db},             {"seed", c.seed},
          {"frame_hop", c.frame_hop},       {"id_prefix", c.id_prefix}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c;
    c.n_recordings = j.value("n_recordings", c.n_recordings);
    c.recording_seconds = j.value("recording_seconds", c.recording_seconds);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.prevalence = j.value("prevalence", c.prevalence);
    c.noise_variance = j.value("noise_variance", c.noise_variance);
    c.snr_db = j.value("snr_db", c.snr_db);
    c.seed = j.value("seed", c.seed);
    c.frame_hop = j.value("frame_hop", c.frame_hop);
    c.id_prefix = j.value("id_prefix", c.id_prefix);
    if (j.contains("classes")) {
      c.classes.clear();
      for (const auto& k : j.at("classes")) {
        EventClassSpec s;
        s.label = k.value("label", s.label);
        s.style = parse_event_style(k.value("style", std::string(to_string(s.style))));
        s.band_lo = k.value("band_lo", s.band_lo);
        s.band_hi = k.value("band_hi", s.band_hi);
        s.min_duration = k.value("min_duration", s.min_duration);
        s.max_duration = k.value("max_duration", s.max_duration);
        if (k.contains("events_per_recording")) s.events_per_recording = k.at("events_per_recording").get<std::size_t>();
        c.classes.push_back(s);
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("synth config: ") + e.what());
  }
}

namespace {

using Complex = std::complex<double>;

constexpr double kEdgeGap = 0.5;        // s kept free at recording edges and between events
constexpr double kPulseLength = 0.06;   // s
constexpr double kPulseSpacingLo = 0.04;
constexpr double kPulseSpacingHi = 0.08;
constexpr double kHarmonicFade = 0.02;  // s
constexpr double kOutputPeak = 0.9;
constexpr std::size_t kBumps = 3;
constexpr int kPlacementAttempts = 500;

std::vector<Complex> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> in(x);
  std::vector<Complex> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// Unnormalised inverse: x[t] = sum over the full spectrum of X[k] e^{+2 pi i k t / n}.
std::vector<double> irfft(std::vector<Complex> spectrum, std::size_t n) {
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(spectrum.data()), out.data(),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

struct NoiseProfile {
  double slope_db_per_octave = -3.0;
  struct Bump {
    double center_hz, gain_db, width_octaves;
  };
  std::vector<Bump> bumps;

  [[nodiscard]] double gain_db(double f) const {
    const double octave = std::log2(std::max(f, 20.0) / 1000.0);
    double g = slope_db_per_octave * octave;
    for (const auto& b : bumps) {
      const double d = (std::log2(std::max(f, 20.0)) - std::log2(b.center_hz)) / b.width_octaves;
      g += b.gain_db * std::exp(-0.5 * d * d);
    }
    return g;
  }
};

NoiseProfile draw_profile(detail::Rng& rng, double variance) {
  NoiseProfile p;
  p.slope_db_per_octave = -3.0 + 3.0 * variance * detail::normal(rng);
  for (std::size_t k = 0; k < kBumps; ++k) {
    const double center = std::exp(detail::uniform(rng, std::log(40.0), std::log(6000.0)));
    p.bumps.push_back({center, 8.0 * variance * detail::normal(rng), detail::uniform(rng, 0.3, 1.0)});
  }
  return p;
}

struct PlannedEvent {
  std::size_t recording;
  std::size_t class_index;
  std::size_t start;   // sample
  std::size_t length;  // samples
  std::uint64_t seed;
};

class Planner {
 public:
  Planner(const SynthConfig& c, std::size_t samples) : c_(c), samples_(samples), taken_(c.n_recordings) {}

  /// Place an event of @p length samples in recording @p rec, or return false.
  bool place(std::size_t rec, std::size_t length, detail::Rng& rng, std::size_t& start) {
    const auto gap = static_cast<std::size_t>(std::llround(kEdgeGap * c_.sample_rate));
    if (length + 2 * gap > samples_) return false;
    for (int a = 0; a < kPlacementAttempts; ++a) {
      const std::size_t s = gap + detail::uniform_below(rng, samples_ - length - 2 * gap + 1);
      const bool clash = std::any_of(taken_[rec].begin(), taken_[rec].end(), [&](const auto& iv) {
        return s < iv.second + gap && iv.first < s + length + gap;
      });
      if (!clash) {
        taken_[rec].emplace_back(s, s + length);
        start = s;
        return true;
      }
    }
    return false;
  }

 private:
  const SynthConfig& c_;
  std::size_t samples_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> taken_;
};

std::vector<double> pulse_event(const EventClassSpec& k, std::size_t n, int sr, detail::Rng& rng) {
  std::vector<double> white(n);
  for (double& v : white) v = detail::normal(rng);
  auto spec = rfft(white);
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const double f = static_cast<double>(b) * sr / static_cast<double>(n);
    if (f < k.band_lo || f > k.band_hi) spec[b] = 0.0;
  }
  std::vector<double> x = irfft(std::move(spec), n);
  std::vector<double> env(n, 0.0);
  const auto pl = static_cast<std::size_t>(std::max(2.0, std::round(kPulseLength * sr)));
  for (std::size_t t = 0; t < n;) {
    for (std::size_t i = 0; i < pl && t + i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(pl - 1));
      env[t + i] = std::max(env[t + i], w);
    }
    t += static_cast<std::size_t>(std::max(1.0, std::round(detail::uniform(rng, kPulseSpacingLo, kPulseSpacingHi) * sr)));
  }
  for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  return x;
}

std::vector<double> harmonic_event(const EventClassSpec& k, std::size_t n, int sr, detail::Rng& rng) {
  const double f0a = detail::uniform(rng, k.band_lo, std::min(1.5 * std::max(k.band_lo, 1.0), k.band_hi));
  const double f0b = std::clamp(f0a * detail::uniform(rng, 0.75, 1.33), std::max(k.band_lo, 1.0), k.band_hi);
  const auto harmonics = std::max<std::size_t>(1, static_cast<std::size_t>(k.band_hi / std::max(f0a, f0b)));
  std::vector<double> offsets(harmonics);
  for (double& o : offsets) o = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  const auto fade = static_cast<std::size_t>(std::round(kHarmonicFade * sr));
  for (std::size_t t = 0; t < n; ++t) {
    const double f0 = f0a + (f0b - f0a) * static_cast<double>(t) / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t h = 1; h <= harmonics; ++h) v += std::sin(static_cast<double>(h) * phase + offsets[h - 1]) / h;
    const std::size_t edge = std::min(t, n - 1 - t);
    if (edge < fade) v *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / fade);
    x[t] = v;
    phase += 2.0 * std::numbers::pi * f0 / sr;
  }
  return x;
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& c) {
  c.validate();
  const int sr = c.sample_rate;
  const auto samples = static_cast<std::size_t>(std::llround(c.recording_seconds * sr));
  const auto hop_samples = static_cast<std::size_t>(std::llround(c.frame_hop * sr));
  const std::size_t frames = samples / std::max<std::size_t>(1, hop_samples) + 1;

  std::vector<std::string> ids(c.n_recordings);
  const std::size_t width = std::to_string(std::max<std::size_t>(1, c.n_recordings) - 1).size();
  for (std::size_t i = 0; i < c.n_recordings; ++i) {
    std::string num = std::to_string(i);
    ids[i] = c.id_prefix + std::string(std::max<std::size_t>(3, width) - num.size(), '0') + num;
  }

  // Schedule every event serially so the layout depends on the seed only.
  detail::Rng rng(detail::hash_seed(c.seed, "schedule"));
  Planner planner(c, samples);
  std::vector<PlannedEvent> planned;
  const auto frames_of = [&](std::size_t start, std::size_t length) {
    return event_frames(static_cast<double>(start) / sr, static_cast<double>(start + length) / sr, c.frame_hop, frames);
  };
  const auto place_somewhere = [&](std::size_t first_rec, std::size_t length, std::size_t k) {
    for (std::size_t a = 0; a < c.n_recordings; ++a) {
      const std::size_t rec = (first_rec + a) % c.n_recordings;
      std::size_t start = 0;
      if (planner.place(rec, length, rng, start)) {
        planned.push_back({rec, k, start, length, rng()});
        return;
      }
    }
    throw Error(ErrorKind::Config, "cannot fit a " + detail::format_double(static_cast<double>(length) / sr) +
                                       " s " + c.classes[k].label + " event into any recording (prevalence " +
                                       detail::format_double(c.prevalence) + " infeasible)");
  };

  for (std::size_t k = 0; k < c.classes.size() && c.n_recordings > 0; ++k) {
    const auto& spec = c.classes[k];
    const auto draw_length = [&] {
      return static_cast<std::size_t>(std::llround(detail::uniform(rng, spec.min_duration, spec.max_duration) * sr));
    };
    if (spec.events_per_recording) {
      for (std::size_t rec = 0; rec < c.n_recordings; ++rec)
        for (std::size_t e = 0; e < *spec.events_per_recording; ++e) {
          std::size_t start = 0;
          const std::size_t length = draw_length();
          if (!planner.place(rec, length, rng, start))
            throw Error(ErrorKind::Config, "cannot fit " + std::to_string(*spec.events_per_recording) + " " +
                                               spec.label + " events into recording " + ids[rec]);
          planned.push_back({rec, k, start, length, rng()});
        }
      continue;
    }
    // Spend the positive-frame budget round-robin; the last event is shortened to land on target.
    const double target = c.prevalence * static_cast<double>(frames * c.n_recordings);
    double spent = 0.0;
    std::size_t rec = detail::uniform_below(rng, c.n_recordings);
    while (target - spent >= 1.0) {
      std::size_t length = draw_length();
      const double remaining = target - spent;
      if (static_cast<double>(length) / hop_samples > remaining)
        length = static_cast<std::size_t>(std::llround(remaining * hop_samples));
      place_somewhere(rec, length, k);
      const auto span = frames_of(planned.back().start, planned.back().length);
      spent += static_cast<double>(span.last - span.first);
      rec = (rec + 1) % c.n_recordings;
    }
  }

  SynthCorpus corpus;
  corpus.recordings.resize(c.n_recordings);
  std::vector<NoiseProfile> profiles(c.n_recordings);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(c.n_recordings); ++ri) {
    try {
      const auto i = static_cast<std::size_t>(ri);
      detail::Rng r(detail::hash_seed(c.seed, "noise/" + ids[i]));
      profiles[i] = draw_profile(r, c.noise_variance);
      std::vector<Complex> spec(samples / 2 + 1);
      for (std::size_t b = 1; b < spec.size(); ++b) {
        const double f = static_cast<double>(b) * sr / static_cast<double>(samples);
        const double a = std::pow(10.0, profiles[i].gain_db(f) / 20.0);
        spec[b] = Complex(a * detail::normal(r), a * detail::normal(r));
      }
      if (samples % 2 == 0) spec.back() = spec.back().real();
      std::vector<double> x = irfft(spec, samples);
      double power = 0.0;
      for (double v : x) power += v * v;
      const double scale = 0.1 / std::sqrt(power / static_cast<double>(samples));
      for (double& v : x) v *= scale;

      for (const auto& ev : planned) {
        if (ev.recording != i) continue;
        const auto& k = c.classes[ev.class_index];
        // Noise power inside the event band, from the spectrum: 2 sum |X_k|^2 over band bins (times scale^2).
        double band = 0.0;
        for (std::size_t b = 1; b < spec.size(); ++b) {
          const double f = static_cast<double>(b) * sr / static_cast<double>(samples);
          if (f >= k.band_lo && f <= k.band_hi) band += 2.0 * std::norm(spec[b]);
        }
        band *= scale * scale;
        detail::Rng er(ev.seed);
        std::vector<double> e = k.style == EventStyle::Pulses ? pulse_event(k, ev.length, sr, er)
                                                              : harmonic_event(k, ev.length, sr, er);
        double ep = 0.0;
        for (double v : e) ep += v * v;
        ep /= static_cast<double>(std::max<std::size_t>(1, e.size()));
        const double gain = ep > 0.0 ? std::sqrt(band * std::pow(10.0, c.snr_db / 10.0) / ep) : 0.0;
        for (std::size_t t = 0; t < e.size(); ++t) x[ev.start + t] += gain * e[t];
      }

      double peak = 0.0;
      for (double v : x) peak = std::max(peak, std::abs(v));
      AudioSignal& out = corpus.recordings[i];
      out.sample_rate = sr;
      out.source_id = ids[i];
      out.samples.resize(samples);
      for (std::size_t t = 0; t < samples; ++t) out.samples[t] = static_cast<float>(kOutputPeak * x[t] / peak);
    } catch (...) {
#pragma omp critical(rcs_synth_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::stable_sort(planned.begin(), planned.end(), [](const PlannedEvent& a, const PlannedEvent& b) {
    return a.recording != b.recording ? a.recording < b.recording : a.start < b.start;
  });
  for (const auto& ev : planned)
    corpus.events.push_back({ids[ev.recording], static_cast<double>(ev.start) / sr,
                             static_cast<double>(ev.start + ev.length) / sr, c.classes[ev.class_index].label});

  nlohmann::json recs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.n_recordings; ++i) {
    nlohmann::json bumps = nlohmann::json::array();
    for (const auto& b : profiles[i].bumps)
      bumps.push_back({{"center_hz", b.center_hz}, {"gain_db", b.gain_db}, {"width_octaves", b.width_octaves}});
    const auto n_events = std::count_if(planned.begin(), planned.end(), [&](const auto& e) { return e.recording == i; });
    recs.push_back({{"id", ids[i]},
                    {"events", n_events},
                    {"noise", {{"slope_db_per_octave", profiles[i].slope_db_per_octave}, {"bumps", bumps}}}});
  }
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& k : c.classes) {
    std::size_t positive = 0, count = 0;
    for (std::size_t i = 0; i < c.n_recordings; ++i)
      positive += rasterize_targets(corpus.events, ids[i], frames, c.frame_hop, k.label).positives();
    double seconds = 0.0;
    for (const auto& e : corpus.events)
      if (e.class_label == k.label) {
        seconds += e.end - e.start;
        ++count;
      }
    const std::size_t total = frames * c.n_recordings;
    classes.push_back({{"label", k.label},
                       {"events", count},
                       {"positive_frames", positive},
                       {"total_frames", total},
                       {"positive_seconds", seconds},
                       {"prevalence", total ? static_cast<double>(positive) / static_cast<double>(total) : 0.0}});
  }
  corpus.manifest = {{"config", to_json(c)}, {"frames_per_recording", frames}, {"recordings", recs}, {"classes", classes}};
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& r : corpus.recordings) write_wav(dir / (r.source_id + ".wav"), r);
  write_annotations(dir / "annotations.csv", corpus.events);
  detail::write_text_file(dir / "manifest.json", corpus.manifest.dump(2) + "\n");
}

}  // namespace rcs
