// SPDX-License-Identifier: Apache-2.0
/**
 * @file conv.hpp
 * @brief 5x5 "same" convolution over channel-last [batch][frames][bands][channels]
 *        volumes, stride 1, zero padding 2 on both spatial axes.
 *
 * The kernel is laid out [5][5][in_channels][out_channels]. Two implementations
 * share each signature: the default one (im2col + GEMM, OpenMP over the batch)
 * and kernels::reference (direct loops, serial, double accumulation) which the
 * tests use as the oracle. Weight and bias gradients are reduced over a fixed
 * partition of the batch, so results do not depend on the thread count.
 */
#pragma once

#include <cstddef>
#include <span>

namespace rcs::kernels {

inline constexpr std::size_t kConvSize = 5;
inline constexpr std::size_t kConvPad = kConvSize / 2;

struct ConvShape {
  std::size_t batch = 1;
  std::size_t frames = 1;
  std::size_t bands = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  [[nodiscard]] std::size_t input_size() const { return batch * frames * bands * in_channels; }
  [[nodiscard]] std::size_t output_size() const { return batch * frames * bands * out_channels; }
  [[nodiscard]] std::size_t kernel_size() const {
    return kConvSize * kConvSize * in_channels * out_channels;
  }
};

/// output = conv(input, kernel) + bias. Output is overwritten.
template <typename T>
void conv2d_forward(const ConvShape& shape, std::span<const T> input, std::span<const T> kernel,
                    std::span<const T> bias, std::span<T> output);

/**
 * Gradients of conv2d_forward. All outputs are overwritten. Pass an empty
 * @p grad_input to skip the input gradient (first layer).
 */
template <typename T>
void conv2d_backward(const ConvShape& shape, std::span<const T> input, std::span<const T> kernel,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias);

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& shape, std::span<const T> input, std::span<const T> kernel,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvShape& shape, std::span<const T> input, std::span<const T> kernel,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias);

}  // namespace reference

/// Number of fixed reduction blocks used for a batch of @p batch segments.
std::size_t reduction_blocks(std::size_t batch);

}  // namespace rcs::kernels
