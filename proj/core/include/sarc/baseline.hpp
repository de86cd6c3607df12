#pragma once

#include <span>
#include <vector>

#include "sarc/config.hpp"
#include "sarc/features.hpp"

namespace sarc {

inline constexpr double kBaselineRidge = 1e-8;

struct LinearBaseline {
  Protocol protocol = Protocol::kP2;
  std::vector<double> weights;  // one per feature
  double intercept = 0;
  bool ridge_used = false;

  double predict(const FeatureVector& scaled) const;
  std::vector<double> predict(std::span<const FeatureVector> scaled) const;

  void write_to(KeyValueConfig& kv) const;  // baseline.* keys
  static LinearBaseline read_from(const KeyValueConfig& kv);
};

// Ordinary least squares with intercept via the normal equations; falls back
// to ridge (lambda 1e-8, intercept unpenalised) when the system is singular.
LinearBaseline fit_linear_baseline(std::span<const FeatureVector> scaled, std::span<const double> targets);

}  // namespace sarc
