#pragma once

#include <cstdint>
#include <vector>

#include "unetplus/autodiff.hpp"

namespace unetplus {

enum class Mode { Train, Eval };

// Non-learned batch-norm state. gamma/beta are ordinary parameters and live
// on the tape; the running statistics are updated in place by train-mode
// forwards.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

// Cross-correlation over NCHW input with weights [O, C, kh, kw] and bias [O].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride = 1,
              std::size_t padding = 0);

// Train mode normalizes with batch statistics and updates state; eval mode
// uses the running statistics only.
template <typename T>
Var<T> batchnorm(Var<T> input, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, Mode mode);

// 2x2 window, stride 2. Ties go to the smallest flat index. When argmax is
// given it receives, per output element, the flat input index selected.
template <typename T>
Var<T> maxpool2d(Var<T> input, std::vector<std::size_t>* argmax = nullptr);

// Block average with window = stride = factor.
template <typename T>
Var<T> avg_pool2d(Var<T> input, std::size_t factor);

// Nearest-neighbour upsampling: out[n,c,i,j] = in[n,c,i/theta,j/theta].
template <typename T>
Var<T> nn_upsample(Var<T> input, std::size_t theta);

// Fractionally strided convolution with weights [C_in, C_out, k, k]. Only
// stride 2 with k = 2 (padding 0) or k = 4 (padding 1) is supported; both
// exactly double the spatial size.
template <typename T>
Var<T> transposed_conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride = 2);

// [N, C, H, W] -> [N, C]
template <typename T>
Var<T> global_avg_pool(Var<T> input);

// [N, F] x weight [O, F] + bias [O] -> [N, O]
template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias);

// Zero-mean normal samples with variance 2 / fan_in, fan_in being the
// product of all dimensions after the first.
template <typename T>
Tensor<T> he_init(const Shape& shape, std::uint64_t seed);

}  // namespace unetplus
