#include "sarc/adam.hpp"

#include <cmath>

#include "sarc/error.hpp"

namespace sarc {

template <typename T>
void adam_step(std::span<NamedParameter<T>> params, AdamState<T>& state) {
  const AdamOptions& opt = state.options;
  if (!(opt.lr >= 0.0) || !std::isfinite(opt.lr)) {
    throw ConfigError("adam: learning rate must be finite and non-negative");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.numel(), T(0));
      state.second_moment.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.first_moment[i].size() != p.tensor.numel()) {
      throw DimensionError("adam: moment size mismatch for parameter '" + p.name + "'");
    }
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    auto values = tensor.values();
    const auto grad = tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
      const double mj = opt.beta1 * m[j] + (1.0 - opt.beta1) * g;
      const double vj = opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = opt.lr * (mj / bc1) / (std::sqrt(vj / bc2) + opt.epsilon);
      values[j] = static_cast<T>(static_cast<double>(values[j]) - update);
    }
  }
}

template void adam_step<float>(std::span<NamedParameter<float>>, AdamState<float>&);
template void adam_step<double>(std::span<NamedParameter<double>>, AdamState<double>&);

}  // namespace sarc
