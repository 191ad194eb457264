// SPDX-License-Identifier: Apache-2.0
/**
 * @file model.hpp
 * @brief Convolutional recurrent network with a per-frame sigmoid output.
 *
 * Layer stack for an input of T frames by F bands:
 *   depth x [5x5 same conv -> batch norm -> ReLU -> max-pool over frequency]
 *   -> frequency integration (flatten | mean | max over bands)
 *   -> GRU over time (optionally bidirectional, half the units per direction)
 *   -> sigmoid(w . h_t + b) per frame.
 *
 * Activations are channel-last, [batch][frames][bands][channels]. The GRU is
 * the reset-after variant with gate order (z, r, n):
 *   n = tanh(W_n x + b_in_n + r * (U_n h + b_rec_n)),  h' = z * h + (1 - z) * n.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcs/crnn/config.hpp"

namespace rcs::crnn {

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

enum class Mode { Training, Inference };

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> data;
  bool trainable = true;

  [[nodiscard]] std::size_t size() const { return data.size(); }
};

/// One gradient buffer per model tensor, same order; non-trainable entries stay zero.
template <typename T>
using Gradients = std::vector<std::vector<T>>;

/// Intermediate values kept by a forward pass for the backward pass.
template <typename T>
struct ForwardCache {
  struct ConvLayer {
    std::vector<T> xhat;                 ///< normalised conv output [B][T][F_l][C]
    std::vector<T> inv_std;              ///< per channel, of the statistics actually used
    std::vector<double> batch_mean;      ///< training mode only
    std::vector<double> batch_var;       ///< training mode only (biased)
    std::vector<std::uint8_t> pool_arg;  ///< winning offset in each pool window [B][T][F_{l+1}][C]
  };
  struct Direction {
    std::vector<T> h;   ///< hidden state after each step, in time order [B][T][H]
    std::vector<T> z, r, n, hn;
  };

  Mode mode = Mode::Inference;
  std::size_t batch = 0;
  std::vector<std::vector<T>> activations;  ///< input of each conv layer, plus the final pooled volume
  std::vector<ConvLayer> conv;
  std::vector<std::uint32_t> integration_arg;  ///< global-max winners [B][T][C]
  std::vector<T> features;                     ///< [B][T][D]
  std::vector<Direction> directions;
  std::vector<T> hidden;  ///< [B][T][C]
  std::vector<T> logits;  ///< [B][T]
};

template <typename T>
class BasicCrnn {
 public:
  /// All weights zero, batch-norm scale 1 and running variance 1. Config error if invalid.
  explicit BasicCrnn(ModelConfig config);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] std::vector<Tensor<T>>& tensors() { return tensors_; }
  [[nodiscard]] const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  [[nodiscard]] Tensor<T>& tensor(std::string_view name);
  [[nodiscard]] const Tensor<T>& tensor(std::string_view name) const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] Gradients<T> zero_gradients() const;

  /**
   * @brief Per-frame probabilities for @p batch segments laid out [B][T][F].
   *
   * Training mode normalises with batch statistics and does not touch the
   * running statistics (see update_running_stats). Fills @p cache when given.
   */
  std::vector<T> forward(std::span<const T> input, std::size_t batch, Mode mode,
                         ForwardCache<T>* cache = nullptr) const;

  /// Gradients of a loss with respect to every trainable tensor, given dL/dlogit per frame.
  void backward(const ForwardCache<T>& cache, std::span<const T> grad_logits, Gradients<T>& grads) const;

  /// Fold a training forward pass's batch statistics into the running statistics.
  /// The first update copies them instead of blending.
  void update_running_stats(const ForwardCache<T>& cache);
  [[nodiscard]] bool running_stats_initialised() const { return running_initialised_; }
  void set_running_stats_initialised(bool v) { running_initialised_ = v; }

  template <typename U>
  [[nodiscard]] BasicCrnn<U> cast() const {
    BasicCrnn<U> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      for (std::size_t k = 0; k < tensors_[i].size(); ++k)
        out.tensors()[i].data[k] = static_cast<U>(tensors_[i].data[k]);
    out.set_running_stats_initialised(running_initialised_);
    return out;
  }

  bool operator==(const BasicCrnn& other) const;

 private:
  struct Index {
    std::vector<std::size_t> kernel, bias, scale, shift, mean, var;
    std::size_t w_in[2]{}, w_rec[2]{}, b_in[2]{}, b_rec[2]{};
    std::size_t out_weight = 0, out_bias = 0;
  };

  std::size_t add(std::string name, std::vector<std::size_t> shape, bool trainable = true);
  void gru_forward(std::size_t dir, std::size_t batch, std::span<const T> features,
                   typename ForwardCache<T>::Direction& state, std::span<T> hidden) const;
  void gru_backward(std::size_t dir, const ForwardCache<T>& cache, std::span<const T> grad_hidden,
                    std::span<T> grad_features, Gradients<T>& grads) const;

  ModelConfig config_;
  std::vector<Tensor<T>> tensors_;
  Index idx_;
  bool running_initialised_ = false;
};

using Crnn = BasicCrnn<float>;

/**
 * Uniform(+-1/sqrt(fan_in)) weights, zero biases, batch-norm scale 1 / shift 0,
 * and output bias ln(pos / neg). Config error on an invalid config or
 * non-positive counts.
 */
Crnn build_model(const ModelConfig& config, std::size_t train_pos_frames, std::size_t train_neg_frames,
                 std::uint64_t seed);

}  // namespace rcs::crnn
