// SPDX-License-Identifier: Apache-2.0
/**
 * @file grid.hpp
 * @brief Two-round grid search with repeated runs per point and a flat
 *        results table for external analysis.
 *
 * Round 1 sweeps denoising x architecture with the loss and resampling held
 * at their defaults. Round 2 sweeps loss x resampling at one fixed
 * architecture and denoising setting.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcs/harness/config.hpp"
#include "rcs/harness/experiment.hpp"

namespace rcs::harness {

enum class GridRound { Architecture = 1, LossResample = 2 };

GridRound parse_grid_round(std::string_view text);

/// One configuration of the searched hyperparameters.
struct GridPoint {
  DenoiseSetting denoise = DenoiseSetting::Both;
  std::size_t channels = 96;
  std::size_t depth = 2;
  std::size_t pool = 2;
  crnn::FrequencyIntegration integration = crnn::FrequencyIntegration::GlobalAverage;
  bool bidirectional = true;
  crnn::LossVariant loss = crnn::LossVariant::Bce;
  int oversample = 2;
  double undersample = 0.75;

  /// Stable text identity, used for seed derivation and table lookup.
  std::string key() const;
  crnn::ModelConfig model(std::size_t frames, std::size_t bands) const;
  bool operator==(const GridPoint&) const = default;
};

/// Fixed part of a round-2 sweep taken from the [crnn] and [denoise] sections.
GridPoint fixed_point(const HarnessConfig& config);

/// Points of a round in sweep order. Round 2 takes its architecture from @p fixed.
std::vector<GridPoint> expand_grid(const GridAxes& axes, GridRound round, const GridPoint& fixed = {});

/// Empty when the point yields a valid model for @p bands, otherwise the reason.
std::optional<std::string> infeasibility(const GridPoint& point, std::size_t frames, std::size_t bands);

struct SplitMetrics {
  double frame_ap = 0.0;
  double frame_f1 = 0.0;
  double pooled_ap = 0.0;
  double pooled_f1 = 0.0;
  double ap_avg = 0.0;
  double f1_avg = 0.0;
};

SplitMetrics split_metrics(const EvalReport& report);

/**
 * @brief One table row.
 *
 * Repetition rows carry their run seed; the mean row of a point has no
 * repetition and averages the point's successful repetitions. A point that
 * could not be built is a single row whose status starts with "skipped".
 */
struct ResultRow {
  GridPoint point;
  std::optional<std::size_t> repetition;
  std::string status = "ok";
  std::uint64_t seed = 0;
  SplitMetrics train, val, test;
  double epochs = 0.0;
  double best_epoch = 0.0;
  double wall_seconds = 0.0;

  bool is_mean() const noexcept { return !repetition.has_value(); }
  bool ok() const noexcept { return status == "ok"; }
};

struct ResultsTable {
  GridRound round = GridRound::Architecture;
  std::uint64_t master_seed = 0;
  std::vector<ResultRow> rows;
};

/// Seed of repetition @p rep of @p point under @p master_seed.
std::uint64_t run_seed(std::uint64_t master_seed, const GridPoint& point, std::size_t rep);

/// Mean row over the successful repetition rows of one point.
ResultRow mean_row(const GridPoint& point, std::span<const ResultRow> repetitions);

/// Usage error if any mean row differs from the mean of its repetition rows.
void verify_means(const ResultsTable& table);

/// Mean row with the highest selection score (validation AP_avg in round 1, test AP_avg in round 2).
std::optional<ResultRow> best_row(const ResultsTable& table);

/// Equality of every field except wall-clock time.
bool same_results(const ResultsTable& a, const ResultsTable& b);

nlohmann::json to_json(const ResultsTable& table);
ResultsTable results_table_from_json(const nlohmann::json& j);
void save_results(const ResultsTable& table, const std::filesystem::path& path);
ResultsTable load_results(const std::filesystem::path& path);

/// Flat CSV with one hyperparameter per column; Usage error on an empty table.
std::string results_csv(const ResultsTable& table);
void export_results_csv(const ResultsTable& table, const std::filesystem::path& path);

struct GridOptions {
  GridRound round = GridRound::Architecture;
  GridPoint fixed;          ///< architecture and denoising for round 2
  std::size_t workers = 1;  ///< RCS_WORKERS overrides this when set
  std::function<void(const std::string&)> log;
};

/// Worker count after applying the RCS_WORKERS override.
std::size_t effective_workers(std::size_t requested);

/**
 * @brief Run every point of the round @p config.grid.repetitions times.
 *
 * Each run trains single-threaded; runs execute concurrently on up to
 * options.workers threads. Rows are ordered by point, then repetition,
 * regardless of completion order.
 */
ResultsTable run_grid(const HarnessConfig& config, const Dataset& dataset, const GridOptions& options);

}  // namespace rcs::harness
