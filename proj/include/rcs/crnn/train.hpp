// SPDX-License-Identifier: Apache-2.0
/**
 * @file train.hpp
 * @brief Mini-batch Adam training with early stopping on validation loss,
 *        plus batched inference.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "rcs/crnn/loss.hpp"
#include "rcs/crnn/model.hpp"
#include "rcs/pipeline.hpp"

namespace rcs::crnn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;  ///< segments
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Stops once @p patience epochs in a row fail to improve strictly on the best loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Record the next epoch's validation loss; true when it is a new best.
  bool update(double loss);
  [[nodiscard]] bool should_stop() const { return since_best_ >= patience_; }
  [[nodiscard]] std::size_t best_epoch() const { return best_epoch_; }  ///< 1-based, 0 before any update
  [[nodiscard]] double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Adam with bias correction folded into the step size.
class Adam {
 public:
  Adam(const TrainConfig& config, const Crnn& model);
  void step(Crnn& model, const Gradients<float>& grads);
  [[nodiscard]] std::size_t steps() const { return t_; }

 private:
  TrainConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

/// Loss config with class weights filled in from @p train's target frames when the variant needs them.
LossConfig resolve_loss(LossConfig config, const SegmentBatch& train);

/**
 * @brief Train @p model in place; on return it holds the parameters of the
 *        epoch with the lowest validation loss.
 *
 * Each epoch is one pass over a fresh shuffle of @p train. Raises Diverged on
 * a non-finite loss, Usage on empty batches or missing targets, Shape when a
 * segment does not match the model's input shape.
 */
TrainHistory train(Crnn& model, const SegmentBatch& train, const SegmentBatch& val, const LossConfig& loss,
                   const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Mean per-frame loss in inference mode.
double evaluate_loss(const Crnn& model, const SegmentBatch& segments, const LossConfig& loss,
                     std::size_t batch_size = 32);

/// Per-segment probabilities in inference mode.
std::vector<std::vector<float>> predict(const Crnn& model, const SegmentBatch& segments,
                                        std::size_t batch_size = 32);

}  // namespace rcs::crnn
