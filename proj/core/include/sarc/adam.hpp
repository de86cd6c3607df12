#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sarc/tensor.hpp"

namespace sarc {

template <typename T>
struct NamedParameter {
  std::string name;
  BasicTensor<T> tensor;
};

struct AdamOptions {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter moment estimates for bias-corrected Adam.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  explicit AdamState(AdamOptions opts = {}) : options(opts) {}
};

// One Adam update of every parameter from its accumulated gradient (a missing
// gradient counts as zero). Gradients are validated before any parameter is
// touched, so a NaN leaves the whole set unchanged and raises NumericError
// naming the offending parameter.
template <typename T>
void adam_step(std::span<NamedParameter<T>> params, AdamState<T>& state);

extern template void adam_step<float>(std::span<NamedParameter<float>>, AdamState<float>&);
extern template void adam_step<double>(std::span<NamedParameter<double>>, AdamState<double>&);

}  // namespace sarc
