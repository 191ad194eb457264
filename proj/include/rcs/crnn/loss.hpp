// SPDX-License-Identifier: Apache-2.0
/**
 * @file loss.hpp
 * @brief Frame-wise binary losses: cross entropy, class-weighted cross entropy,
 *        focal loss and class-weighted focal loss.
 */
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace rcs::crnn {

/// Probabilities are clamped to [kLossEpsilon, 1 - kLossEpsilon] before the logarithm.
inline constexpr double kLossEpsilon = 1e-7;

enum class LossVariant { Bce, WeightedBce, Focal, WeightedFocal };

std::string_view to_string(LossVariant v) noexcept;
/// bce, weighted-bce, focal, weighted-focal. Config error otherwise.
LossVariant parse_loss_variant(std::string_view text);

struct LossConfig {
  LossVariant variant = LossVariant::Bce;
  double gamma = 2.0;
  double w0 = 1.0;  ///< negative-class weight (weighted variants only)
  double w1 = 1.0;  ///< positive-class weight (weighted variants only)

  [[nodiscard]] bool weighted() const {
    return variant == LossVariant::WeightedBce || variant == LossVariant::WeightedFocal;
  }
  [[nodiscard]] bool focal() const { return variant == LossVariant::Focal || variant == LossVariant::WeightedFocal; }
  void validate() const;
};

/// w_k = N / (2 N_k) from positive and total frame counts. Config error if a class is absent.
LossConfig with_class_weights(LossConfig config, std::size_t positive_frames, std::size_t total_frames);

/// Loss of one frame.
double frame_loss(const LossConfig& config, double p, int y);

/// dL/dz for p = sigmoid(z); zero where the clamp is active.
double frame_loss_grad_logit(const LossConfig& config, double p, int y);

/// Mean loss over frames.
double mean_loss(const LossConfig& config, std::span<const float> p, std::span<const unsigned char> y);

}  // namespace rcs::crnn
