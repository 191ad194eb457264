// SPDX-License-Identifier: Apache-2.0
#include "rcs/harness/grid.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "rcs/detail/random.hpp"
#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

bool same_metrics(const SplitMetrics& a, const SplitMetrics& b) {
  return same_double(a.frame_ap, b.frame_ap) && same_double(a.frame_f1, b.frame_f1) &&
         same_double(a.pooled_ap, b.pooled_ap) && same_double(a.pooled_f1, b.pooled_f1) &&
         same_double(a.ap_avg, b.ap_avg) && same_double(a.f1_avg, b.f1_avg);
}

SplitMetrics nan_metrics() { return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN}; }

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

nlohmann::json metrics_json(const SplitMetrics& m) {
  return {{"frame_ap", number(m.frame_ap)},   {"frame_f1", number(m.frame_f1)}, {"pooled_ap", number(m.pooled_ap)},
          {"pooled_f1", number(m.pooled_f1)}, {"ap_avg", number(m.ap_avg)},     {"f1_avg", number(m.f1_avg)}};
}

SplitMetrics metrics_from_json(const nlohmann::json& j) {
  return {number_from(j.at("frame_ap")),  number_from(j.at("frame_f1")), number_from(j.at("pooled_ap")),
          number_from(j.at("pooled_f1")), number_from(j.at("ap_avg")),   number_from(j.at("f1_avg"))};
}

nlohmann::json point_json(const GridPoint& p) {
  return {{"denoise", std::string(to_string(p.denoise))},
          {"channel_size", p.channels},
          {"conv_depth", p.depth},
          {"pool_size", p.pool},
          {"freq_integration", std::string(crnn::to_string(p.integration))},
          {"bidirectional", p.bidirectional},
          {"loss", std::string(crnn::to_string(p.loss))},
          {"oversample", p.oversample},
          {"undersample", p.undersample}};
}

GridPoint point_from_json(const nlohmann::json& j) {
  GridPoint p;
  p.denoise = parse_denoise_setting(j.at("denoise").get<std::string>());
  p.channels = j.at("channel_size").get<std::size_t>();
  p.depth = j.at("conv_depth").get<std::size_t>();
  p.pool = j.at("pool_size").get<std::size_t>();
  p.integration = crnn::parse_frequency_integration(j.at("freq_integration").get<std::string>());
  p.bidirectional = j.at("bidirectional").get<bool>();
  p.loss = crnn::parse_loss_variant(j.at("loss").get<std::string>());
  p.oversample = j.at("oversample").get<int>();
  p.undersample = j.at("undersample").get<double>();
  return p;
}

std::string csv_number(double v) { return std::isnan(v) ? "NA" : detail::format_double(v); }

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Selection score of a mean row for the table's round.
double selection_score(const ResultsTable& t, const ResultRow& r) {
  return t.round == GridRound::Architecture ? r.val.ap_avg : r.test.ap_avg;
}

}  // namespace

GridRound parse_grid_round(std::string_view text) {
  if (text == "1" || text == "architecture") return GridRound::Architecture;
  if (text == "2" || text == "loss-resample") return GridRound::LossResample;
  throw Error(ErrorKind::Config, "unknown grid round '" + std::string(text) + "' (expected 1 or 2)");
}

std::string GridPoint::key() const {
  return "denoise=" + std::string(to_string(denoise)) + ";channels=" + std::to_string(channels) +
         ";depth=" + std::to_string(depth) + ";pool=" + std::to_string(pool) +
         ";integration=" + std::string(crnn::to_string(integration)) +
         ";bidirectional=" + (bidirectional ? "1" : "0") + ";loss=" + std::string(crnn::to_string(loss)) +
         ";oversample=" + std::to_string(oversample) + ";undersample=" + detail::format_double(undersample);
}

crnn::ModelConfig GridPoint::model(std::size_t frames, std::size_t bands) const {
  crnn::ModelConfig m;
  m.conv_depth = depth;
  m.channel_size = channels;
  m.pool_size = pool;
  m.freq_integration = integration;
  m.bidirectional = bidirectional;
  m.input_frames = frames;
  m.input_bands = bands;
  return m;
}

GridPoint fixed_point(const HarnessConfig& config) {
  GridPoint p;
  p.denoise = denoise_setting(config.denoise);
  p.channels = config.model.channel_size;
  p.depth = config.model.conv_depth;
  p.pool = config.model.pool_size;
  p.integration = config.model.freq_integration;
  p.bidirectional = config.model.bidirectional;
  p.loss = config.loss.variant;
  p.oversample = config.resample.oversample_duplications;
  p.undersample = config.resample.undersample_fraction;
  return p;
}

std::vector<GridPoint> expand_grid(const GridAxes& axes, GridRound round, const GridPoint& fixed) {
  std::vector<GridPoint> points;
  if (round == GridRound::Architecture) {
    for (auto d : axes.denoise)
      for (auto c : axes.channels)
        for (auto depth : axes.depth)
          for (auto pool : axes.pool)
            for (auto integ : axes.integration)
              for (bool bi : axes.bidirectional) {
                GridPoint p;
                p.denoise = d;
                p.channels = c;
                p.depth = depth;
                p.pool = pool;
                p.integration = integ;
                p.bidirectional = bi;
                p.loss = axes.round1_loss;
                p.oversample = axes.round1_oversample;
                p.undersample = axes.round1_undersample;
                points.push_back(p);
              }
  } else {
    for (auto loss : axes.loss)
      for (int o : axes.oversample)
        for (double u : axes.undersample) {
          GridPoint p = fixed;
          p.loss = loss;
          p.oversample = o;
          p.undersample = u;
          points.push_back(p);
        }
  }
  return points;
}

std::optional<std::string> infeasibility(const GridPoint& point, std::size_t frames, std::size_t bands) {
  try {
    point.model(frames, bands).validate();
  } catch (const Error& e) {
    return e.message();
  }
  return std::nullopt;
}

SplitMetrics split_metrics(const EvalReport& r) {
  return {r.frame.ap, r.frame.f1, r.pooled.ap, r.pooled.f1, r.ap_avg, r.f1_avg};
}

std::uint64_t run_seed(std::uint64_t master_seed, const GridPoint& point, std::size_t rep) {
  return detail::hash_seed(master_seed, point.key() + "#" + std::to_string(rep));
}

ResultRow mean_row(const GridPoint& point, std::span<const ResultRow> repetitions) {
  ResultRow m;
  m.point = point;
  std::size_t n = 0;
  SplitMetrics* const out[] = {&m.train, &m.val, &m.test};
  for (auto* s : out) *s = SplitMetrics{};
  for (const auto& r : repetitions) {
    if (!r.ok()) continue;
    ++n;
    const SplitMetrics* const in[] = {&r.train, &r.val, &r.test};
    for (int k = 0; k < 3; ++k) {
      out[k]->frame_ap += in[k]->frame_ap;
      out[k]->frame_f1 += in[k]->frame_f1;
      out[k]->pooled_ap += in[k]->pooled_ap;
      out[k]->pooled_f1 += in[k]->pooled_f1;
      out[k]->ap_avg += in[k]->ap_avg;
      out[k]->f1_avg += in[k]->f1_avg;
    }
    m.epochs += r.epochs;
    m.best_epoch += r.best_epoch;
    m.wall_seconds += r.wall_seconds;
  }
  if (n == 0) {
    m.status = "failed: no successful repetition";
    m.train = m.val = m.test = nan_metrics();
    m.epochs = m.best_epoch = m.wall_seconds = kNaN;
    return m;
  }
  const double d = static_cast<double>(n);
  for (auto* s : out) {
    s->frame_ap /= d;
    s->frame_f1 /= d;
    s->pooled_ap /= d;
    s->pooled_f1 /= d;
    s->ap_avg /= d;
    s->f1_avg /= d;
  }
  m.epochs /= d;
  m.best_epoch /= d;
  m.wall_seconds /= d;
  return m;
}

void verify_means(const ResultsTable& table) {
  std::map<std::string, std::vector<ResultRow>> reps;
  for (const auto& r : table.rows)
    if (!r.is_mean()) reps[r.point.key()].push_back(r);
  for (const auto& r : table.rows) {
    if (!r.is_mean() || r.status.rfind("skipped", 0) == 0) continue;
    const auto it = reps.find(r.point.key());
    if (it == reps.end()) throw Error(ErrorKind::Usage, "mean row without repetitions: " + r.point.key());
    const ResultRow expect = mean_row(r.point, it->second);
    const bool same = expect.status == r.status && same_metrics(expect.train, r.train) &&
                      same_metrics(expect.val, r.val) && same_metrics(expect.test, r.test) &&
                      same_double(expect.epochs, r.epochs) && same_double(expect.best_epoch, r.best_epoch) &&
                      same_double(expect.wall_seconds, r.wall_seconds);
    if (!same) throw Error(ErrorKind::Usage, "mean row does not match its repetitions: " + r.point.key());
  }
}

std::optional<ResultRow> best_row(const ResultsTable& table) {
  std::optional<ResultRow> best;
  for (const auto& r : table.rows) {
    if (!r.is_mean() || !r.ok()) continue;
    const double s = selection_score(table, r);
    if (std::isnan(s)) continue;
    if (!best || s > selection_score(table, *best)) best = r;
  }
  return best;
}

bool same_results(const ResultsTable& a, const ResultsTable& b) {
  if (a.round != b.round || a.master_seed != b.master_seed || a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (!(x.point == y.point) || x.repetition != y.repetition || x.status != y.status || x.seed != y.seed ||
        !same_metrics(x.train, y.train) || !same_metrics(x.val, y.val) || !same_metrics(x.test, y.test) ||
        !same_double(x.epochs, y.epochs) || !same_double(x.best_epoch, y.best_epoch))
      return false;
  }
  return true;
}

nlohmann::json to_json(const ResultsTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"key", r.point.key()},
                    {"point", point_json(r.point)},
                    {"repetition", r.repetition ? nlohmann::json(*r.repetition) : nlohmann::json(nullptr)},
                    {"status", r.status},
                    {"seed", r.seed},
                    {"train", metrics_json(r.train)},
                    {"val", metrics_json(r.val)},
                    {"test", metrics_json(r.test)},
                    {"epochs", number(r.epochs)},
                    {"best_epoch", number(r.best_epoch)},
                    {"wall_seconds", number(r.wall_seconds)}});
  }
  return {{"round", static_cast<int>(table.round)}, {"master_seed", table.master_seed}, {"rows", rows}};
}

ResultsTable results_table_from_json(const nlohmann::json& j) {
  try {
    ResultsTable t;
    t.round = parse_grid_round(std::to_string(j.at("round").get<int>()));
    t.master_seed = j.at("master_seed").get<std::uint64_t>();
    for (const auto& r : j.at("rows")) {
      ResultRow row;
      row.point = point_from_json(r.at("point"));
      if (!r.at("repetition").is_null()) row.repetition = r.at("repetition").get<std::size_t>();
      row.status = r.at("status").get<std::string>();
      row.seed = r.at("seed").get<std::uint64_t>();
      row.train = metrics_from_json(r.at("train"));
      row.val = metrics_from_json(r.at("val"));
      row.test = metrics_from_json(r.at("test"));
      row.epochs = number_from(r.at("epochs"));
      row.best_epoch = number_from(r.at("best_epoch"));
      row.wall_seconds = number_from(r.at("wall_seconds"));
      t.rows.push_back(std::move(row));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Load, std::string("results table: ") + e.what());
  }
}

void save_results(const ResultsTable& table, const std::filesystem::path& path) {
  verify_means(table);
  detail::write_text_file(path, to_json(table).dump(2) + "\n");
}

ResultsTable load_results(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Load, path.string() + ": " + e.what());
  }
  return results_table_from_json(j);
}

std::string results_csv(const ResultsTable& table) {
  if (table.rows.empty()) throw Error(ErrorKind::Usage, "cannot export an empty results table");
  verify_means(table);
  std::string out =
      "round,key,status,repetition,denoise,channel_size,conv_depth,pool_size,freq_integration,bidirectional,"
      "loss,oversample,undersample,seed";
  for (const char* split : {"train", "val", "test"})
    for (const char* m : {"frame_ap", "frame_f1", "pooled_ap", "pooled_f1", "ap_avg", "f1_avg"})
      out += std::string(",") + split + "_" + m;
  out += ",epochs,best_epoch,wall_seconds\n";
  for (const auto& r : table.rows) {
    const auto& p = r.point;
    out += std::to_string(static_cast<int>(table.round)) + "," + csv_text(p.key()) + "," + csv_text(r.status) + "," +
           (r.repetition ? std::to_string(*r.repetition) : std::string("mean")) + "," +
           std::string(to_string(p.denoise)) + "," + std::to_string(p.channels) + "," + std::to_string(p.depth) +
           "," + std::to_string(p.pool) + "," + std::string(crnn::to_string(p.integration)) + "," +
           (p.bidirectional ? "true" : "false") + "," + std::string(crnn::to_string(p.loss)) + "," +
           std::to_string(p.oversample) + "," + detail::format_double(p.undersample) + "," +
           (r.repetition ? std::to_string(r.seed) : std::string("NA"));
    for (const SplitMetrics* s : {&r.train, &r.val, &r.test})
      for (double v : {s->frame_ap, s->frame_f1, s->pooled_ap, s->pooled_f1, s->ap_avg, s->f1_avg})
        out += "," + csv_number(v);
    out += "," + csv_number(r.epochs) + "," + csv_number(r.best_epoch) + "," + csv_number(r.wall_seconds) + "\n";
  }
  return out;
}

void export_results_csv(const ResultsTable& table, const std::filesystem::path& path) {
  detail::write_text_file(path, results_csv(table));
}

std::size_t effective_workers(std::size_t requested) {
  if (const char* env = std::getenv("RCS_WORKERS"); env && *env) {
    const auto v = detail::parse_double(env);
    if (!v || *v < 1 || *v != std::floor(*v))
      throw Error(ErrorKind::Config, "RCS_WORKERS must be a positive integer, got '" + std::string(env) + "'");
    return static_cast<std::size_t>(*v);
  }
  return std::max<std::size_t>(1, requested);
}

ResultsTable run_grid(const HarnessConfig& config, const Dataset& dataset, const GridOptions& options) {
  config.validate();
  const auto say = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  std::mutex mutex;  // guards log output and result slots

  const std::vector<GridPoint> points = expand_grid(config.grid, options.round, options.fixed);
  if (points.empty()) throw Error(ErrorKind::Config, "grid has no point");
  const std::size_t reps = config.grid.repetitions;

  std::map<DenoiseSetting, PreparedData> prepared;
  for (const auto& p : points) {
    if (prepared.contains(p.denoise)) continue;
    say("preparing data with denoising " + std::string(to_string(p.denoise)));
    prepared.emplace(p.denoise, prepare(dataset, with_setting(config.denoise, p.denoise), config.data.target_class));
  }

  const double hop = prepared.begin()->second.train.spectrograms.front().hop;
  const std::size_t frames = segment_frames(config.pipeline.segment_seconds, hop);

  struct Job {
    std::size_t point;
    std::size_t rep;
  };
  std::vector<std::optional<std::string>> skipped(points.size());
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    skipped[i] = infeasibility(points[i], frames, prepared.at(points[i].denoise).bands);
    if (skipped[i]) {
      say("skipping " + points[i].key() + ": " + *skipped[i]);
      continue;
    }
    for (std::size_t r = 0; r < reps; ++r) jobs.push_back({i, r});
  }

  std::vector<ResultRow> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  const auto worker = [&] {
    omp_set_num_threads(1);
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const GridPoint& p = points[jobs[j].point];
      const PreparedData& data = prepared.at(p.denoise);
      ResultRow row;
      row.point = p;
      row.repetition = jobs[j].rep;
      row.seed = run_seed(config.seed, p, jobs[j].rep);
      try {
        RunSettings rs;
        rs.model = p.model(frames, data.bands);
        rs.loss = config.loss;
        rs.loss.variant = p.loss;
        rs.train = config.train;
        rs.resample = ResampleConfig{p.undersample, p.oversample, 0};
        rs.segment_seconds = config.pipeline.segment_seconds;
        rs.threshold = config.pipeline.threshold;
        rs.seed = row.seed;
        const RunOutcome o = run_experiment(data, rs);
        row.train = split_metrics(o.train.report);
        row.val = split_metrics(o.val.report);
        row.test = split_metrics(o.test.report);
        row.epochs = static_cast<double>(o.history.epochs.size());
        row.best_epoch = static_cast<double>(o.history.best_epoch);
        row.wall_seconds = o.wall_seconds;
      } catch (const Error& e) {
        row.status = "failed: " + e.message();
        row.train = row.val = row.test = nan_metrics();
        row.epochs = row.best_epoch = row.wall_seconds = kNaN;
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        next = jobs.size();
        return;
      }
      std::lock_guard lock(mutex);
      say("[" + std::to_string(j + 1) + "/" + std::to_string(jobs.size()) + "] " + p.key() + " rep " +
          std::to_string(row.repetition.value()) + ": " +
          (row.ok() ? "test AP_avg " + csv_number(row.test.ap_avg) + " val AP_avg " + csv_number(row.val.ap_avg)
                    : row.status));
      results[j] = std::move(row);
    }
  };

  const std::size_t workers = std::min(effective_workers(options.workers), std::max<std::size_t>(1, jobs.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (fatal) std::rethrow_exception(fatal);

  ResultsTable table;
  table.round = options.round;
  table.master_seed = config.seed;
  std::size_t j = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (skipped[i]) {
      ResultRow row;
      row.point = points[i];
      row.status = "skipped: " + *skipped[i];
      row.train = row.val = row.test = nan_metrics();
      row.epochs = row.best_epoch = row.wall_seconds = kNaN;
      table.rows.push_back(std::move(row));
      continue;
    }
    const std::size_t first = table.rows.size();
    for (std::size_t r = 0; r < reps; ++r) table.rows.push_back(std::move(results[j++]));
    table.rows.push_back(mean_row(points[i], std::span<const ResultRow>(table.rows).subspan(first, reps)));
  }
  verify_means(table);
  return table;
}

}  // namespace rcs::harness
