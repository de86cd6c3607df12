#pragma once

#include <span>
#include <vector>

namespace sarc {

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);

// Pearson correlation of average ranks. Needs n >= 3 and both inputs
// non-constant, otherwise DegenerateInputError.
double spearman(std::span<const double> a, std::span<const double> b);

double mae(std::span<const double> pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);
// 1 - SS_res / SS_tot; constant target throws DegenerateInputError.
double r2(std::span<const double> pred, std::span<const double> target);

}  // namespace sarc
