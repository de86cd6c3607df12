#include "sarc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sarc/error.hpp"

namespace sarc {

namespace {

void require_pair(const char* what, std::span<const double> a, std::span<const double> b, std::size_t min_n) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.size() < min_n) {
    throw DegenerateInputError(std::string(what) + ": need at least " + std::to_string(min_n) +
                               " values, got " + std::to_string(a.size()));
  }
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_pair("pearson", a, b, 2);
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) throw DegenerateInputError("correlation undefined: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  require_pair("spearman", a, b, 3);
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

double mae(std::span<const double> pred, std::span<const double> target) {
  require_pair("mae", pred, target, 1);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> target) {
  require_pair("mse", pred, target, 1);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> target) {
  require_pair("r2", pred, target, 1);
  const double m = mean_of(target);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
    ss_tot += (target[i] - m) * (target[i] - m);
  }
  if (ss_tot == 0) throw DegenerateInputError("r2 undefined: constant target");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace sarc
