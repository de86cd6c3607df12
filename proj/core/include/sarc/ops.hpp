#pragma once

#include <cstddef>

#include "sarc/tensor.hpp"

namespace sarc {

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

// Running statistics owned by a batch-norm layer. Updated in place by
// batchnorm2d in train mode; never tracked by autodiff.
template <typename T>
struct BatchNormStats {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean(Shape{channels}), running_var(BasicTensor<T>::full(Shape{channels}, T(1))) {}
};

// input [B,C,H,W], weight [K,C,kh,kw], bias [K] -> [B,K,H',W'] with
// H' = (H + 2*padding - kh) / stride + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);
// Same without a bias term.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      std::size_t stride, std::size_t padding);

// Per-channel normalisation of [B,C,H,W]. Train mode uses batch statistics
// and folds them into `stats` with momentum 0.1 (unbiased variance); eval
// mode uses `stats` unchanged.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormStats<T>& stats, Mode mode);

// max(0, x); the subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

enum class PoolKind { kMax, kGlobalAvg };

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride,
                          std::size_t padding = 0);
// [B,C,H,W] -> [B,C,1,1]
template <typename T>
BasicTensor<T> global_avg_pool2d(const BasicTensor<T>& input);
// Dispatcher; window and stride are ignored for kGlobalAvg.
template <typename T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, std::size_t window,
                      std::size_t stride, std::size_t padding = 0);

// input [B,F], weight [O,F], bias [O] -> [B,O]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// mean((pred - target)^2) over all elements; shapes must match.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// [B,Fa] ++ [B,Fb] -> [B,Fa+Fb]
template <typename T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input);

}  // namespace sarc
