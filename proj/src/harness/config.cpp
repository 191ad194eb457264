// SPDX-License-Identifier: Apache-2.0
#include "rcs/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs::harness {

namespace pt = boost::property_tree;

std::string_view to_string(DenoiseSetting d) noexcept {
  switch (d) {
    case DenoiseSetting::None: return "none";
    case DenoiseSetting::FrequencyRemoval: return "freq-removal";
    case DenoiseSetting::SpectralSubtraction: return "spec-subtraction";
    case DenoiseSetting::Both: return "both";
  }
  return "unknown";
}

DenoiseSetting parse_denoise_setting(std::string_view text) {
  for (auto d : {DenoiseSetting::None, DenoiseSetting::FrequencyRemoval, DenoiseSetting::SpectralSubtraction,
                 DenoiseSetting::Both})
    if (text == to_string(d)) return d;
  throw Error(ErrorKind::Config, "unknown denoise setting '" + std::string(text) + "'");
}

DenoiseSetting denoise_setting(const DenoiseConfig& c) {
  if (c.apply_frequency_removal) return c.apply_spectral_subtraction ? DenoiseSetting::Both : DenoiseSetting::FrequencyRemoval;
  return c.apply_spectral_subtraction ? DenoiseSetting::SpectralSubtraction : DenoiseSetting::None;
}

DenoiseConfig with_setting(DenoiseConfig c, DenoiseSetting d) {
  c.apply_frequency_removal = d == DenoiseSetting::FrequencyRemoval || d == DenoiseSetting::Both;
  c.apply_spectral_subtraction = d == DenoiseSetting::SpectralSubtraction || d == DenoiseSetting::Both;
  return c;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data", {"train", "val", "test", "class"}},
      {"features", {"frame_seconds", "hop_seconds", "n_mels", "fft_size", "fmin", "fmax", "log_floor"}},
      {"denoise",
       {"frequency_removal", "spectral_subtraction", "mask_threshold", "context_seconds", "window_seconds"}},
      {"pipeline", {"segment_seconds", "threshold", "resample", "seed"}},
      {"resample", {"undersample", "oversample"}},
      {"crnn", {"conv_depth", "channel_size", "pool_size", "freq_integration", "bidirectional"}},
      {"loss", {"variant", "gamma"}},
      {"train", {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience"}},
      {"grid",
       {"denoise", "channels", "depth", "pool", "integration", "bidirectional", "loss", "oversample", "undersample",
        "repetitions", "round1_loss", "round1_oversample", "round1_undersample"}},
      {"synth",
       {"preset", "n_recordings", "recording_seconds", "sample_rate", "prevalence", "noise_variance", "snr_db",
        "seed", "label", "style", "band_lo", "band_hi", "min_duration", "max_duration", "events_per_recording",
        "splits", "id_prefix"}},
  };
  return keys;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  [[nodiscard]] bool has(const std::string& key) const { return tree_.get_child_optional(pt::path(key, '.')).has_value(); }

  [[nodiscard]] std::string text(const std::string& key) const {
    return std::string(detail::trim(tree_.get<std::string>(pt::path(key, '.'))));
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    const std::string v = text(key);
    if constexpr (std::is_same_v<T, bool>) {
      std::string lower(v);
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") out = true;
      else if (lower == "false" || lower == "0" || lower == "no" || lower == "off") out = false;
      else fail(key, v, "a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = v;
    } else if constexpr (std::is_floating_point_v<T>) {
      const auto d = detail::parse_double(v);
      if (!d) fail(key, v, "a number");
      out = static_cast<T>(*d);
    } else {
      static_assert(std::is_integral_v<T>);
      T parsed{};
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
      if (ec != std::errc() || ptr != v.data() + v.size()) fail(key, v, "an integer");
      out = parsed;
    }
  }

  [[nodiscard]] std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> items;
    for (auto& item : detail::split_csv_line(text(key)))
      if (!item.empty()) items.push_back(item);
    if (items.empty()) throw Error(ErrorKind::Config, key + ": empty list");
    return items;
  }

  template <typename T, typename F>
  void read_list(const std::string& key, std::vector<T>& out, const F& convert) const {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : list(key)) out.push_back(convert(item, key));
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& value, const char* what) {
    throw Error(ErrorKind::Config, key + ": '" + value + "' is not " + what);
  }

 private:
  const pt::ptree& tree_;
};

std::size_t to_count(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) Reader::fail(key, s, "a count");
  return v;
}

double to_real(const std::string& s, const std::string& key) {
  const auto d = detail::parse_double(s);
  if (!d) Reader::fail(key, s, "a number");
  return *d;
}

bool to_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  Reader::fail(key, s, "a boolean");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void HarnessConfig::validate() const {
  denoise.validate();
  resample.validate();
  train.validate();
  loss.validate();
  if (!(pipeline.segment_seconds > 0.0)) throw Error(ErrorKind::Config, "pipeline.segment_seconds must be positive");
  if (!(pipeline.threshold >= 0.0 && pipeline.threshold <= 1.0))
    throw Error(ErrorKind::Config, "pipeline.threshold must lie in [0, 1]");
  if (grid.repetitions < 1) throw Error(ErrorKind::Config, "grid.repetitions must be >= 1");
  if (data.target_class.empty()) throw Error(ErrorKind::Config, "data.class must be set");
}

HarnessConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Config, std::string("config line ") + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw Error(ErrorKind::Config, "unknown config section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.contains(key)) throw Error(ErrorKind::Config, "unknown key " + section + "." + key);
  }

  HarnessConfig c;
  const Reader r(tree);
  try {
    std::string path;
    if (r.has("data.train")) c.data.train_dir = resolve(base_dir, r.text("data.train"));
    if (r.has("data.val")) c.data.val_dir = resolve(base_dir, r.text("data.val"));
    if (r.has("data.test")) c.data.test_dir = resolve(base_dir, r.text("data.test"));
    r.read("data.class", c.data.target_class);

    r.read("features.frame_seconds", c.features.frame_length);
    r.read("features.hop_seconds", c.features.hop_length);
    r.read("features.n_mels", c.features.n_mels);
    r.read("features.fft_size", c.features.fft_size);
    r.read("features.fmin", c.features.fmin);
    r.read("features.fmax", c.features.fmax);
    r.read("features.log_floor", c.features.log_floor);

    r.read("denoise.frequency_removal", c.denoise.apply_frequency_removal);
    r.read("denoise.spectral_subtraction", c.denoise.apply_spectral_subtraction);
    r.read("denoise.mask_threshold", c.denoise.mask_threshold);
    r.read("denoise.context_seconds", c.denoise.context_seconds);
    r.read("denoise.window_seconds", c.denoise.subtraction_window_seconds);

    r.read("pipeline.segment_seconds", c.pipeline.segment_seconds);
    r.read("pipeline.threshold", c.pipeline.threshold);
    r.read("pipeline.resample", c.pipeline.resample);
    r.read("pipeline.seed", c.seed);

    r.read("resample.undersample", c.resample.undersample_fraction);
    r.read("resample.oversample", c.resample.oversample_duplications);

    r.read("crnn.conv_depth", c.model.conv_depth);
    r.read("crnn.channel_size", c.model.channel_size);
    r.read("crnn.pool_size", c.model.pool_size);
    if (r.has("crnn.freq_integration"))
      c.model.freq_integration = crnn::parse_frequency_integration(r.text("crnn.freq_integration"));
    r.read("crnn.bidirectional", c.model.bidirectional);

    if (r.has("loss.variant")) c.loss.variant = crnn::parse_loss_variant(r.text("loss.variant"));
    r.read("loss.gamma", c.loss.gamma);

    r.read("train.learning_rate", c.train.learning_rate);
    r.read("train.beta1", c.train.beta1);
    r.read("train.beta2", c.train.beta2);
    r.read("train.epsilon", c.train.epsilon);
    r.read("train.batch_size", c.train.batch_size);
    r.read("train.max_epochs", c.train.max_epochs);
    r.read("train.patience", c.train.early_stop_patience);

    r.read_list("grid.denoise", c.grid.denoise, [](const std::string& s, const std::string&) { return parse_denoise_setting(s); });
    r.read_list("grid.channels", c.grid.channels, to_count);
    r.read_list("grid.depth", c.grid.depth, to_count);
    r.read_list("grid.pool", c.grid.pool, to_count);
    r.read_list("grid.integration", c.grid.integration,
                [](const std::string& s, const std::string&) { return crnn::parse_frequency_integration(s); });
    r.read_list("grid.bidirectional", c.grid.bidirectional, to_bool);
    r.read_list("grid.loss", c.grid.loss, [](const std::string& s, const std::string&) { return crnn::parse_loss_variant(s); });
    r.read_list("grid.oversample", c.grid.oversample,
                [](const std::string& s, const std::string& k) { return static_cast<int>(to_count(s, k)); });
    r.read_list("grid.undersample", c.grid.undersample, to_real);
    r.read("grid.repetitions", c.grid.repetitions);
    if (r.has("grid.round1_loss")) c.grid.round1_loss = crnn::parse_loss_variant(r.text("grid.round1_loss"));
    r.read("grid.round1_oversample", c.grid.round1_oversample);
    r.read("grid.round1_undersample", c.grid.round1_undersample);

    if (r.has("synth.preset")) {
      const std::string preset = r.text("synth.preset");
      if (preset == "drumming") c.synth = drumming_preset();
      else if (preset == "vocalization") c.synth = vocalization_preset();
      else throw Error(ErrorKind::Config, "synth.preset: unknown preset '" + preset + "'");
    }
    r.read("synth.n_recordings", c.synth.n_recordings);
    r.read("synth.recording_seconds", c.synth.recording_seconds);
    r.read("synth.sample_rate", c.synth.sample_rate);
    r.read("synth.prevalence", c.synth.prevalence);
    r.read("synth.noise_variance", c.synth.noise_variance);
    r.read("synth.snr_db", c.synth.snr_db);
    r.read("synth.seed", c.synth.seed);
    r.read("synth.id_prefix", c.synth.id_prefix);
    auto& k = c.synth.classes.front();
    r.read("synth.label", k.label);
    if (r.has("synth.style")) k.style = parse_event_style(r.text("synth.style"));
    r.read("synth.band_lo", k.band_lo);
    r.read("synth.band_hi", k.band_hi);
    r.read("synth.min_duration", k.min_duration);
    r.read("synth.max_duration", k.max_duration);
    if (r.has("synth.events_per_recording")) {
      std::size_t n = 0;
      r.read("synth.events_per_recording", n);
      k.events_per_recording = n;
    }
    if (r.has("synth.splits")) {
      for (const auto& item : r.list("synth.splits")) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) Reader::fail("synth.splits", item, "of the form name:count");
        c.synth_splits.emplace_back(item.substr(0, colon), to_count(item.substr(colon + 1), "synth.splits"));
      }
    }
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  c.validate();
  return c;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::Config, "config file " + path.string() + " not found");
  return parse_config(detail::read_text_file(path), path.parent_path());
}

void check_data_dirs(const DataConfig& data) {
  const std::pair<const char*, const std::filesystem::path*> dirs[] = {
      {"data.train", &data.train_dir}, {"data.val", &data.val_dir}, {"data.test", &data.test_dir}};
  for (const auto& [key, dir] : dirs) {
    if (dir->empty()) throw Error(ErrorKind::Config, std::string(key) + " is not set");
    if (!std::filesystem::is_directory(*dir))
      throw Error(ErrorKind::Config, std::string(key) + ": directory " + dir->string() + " does not exist");
  }
}

}  // namespace rcs::harness
