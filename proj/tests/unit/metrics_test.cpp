#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sarc/baseline.hpp"
#include "sarc/error.hpp"
#include "sarc/metrics.hpp"

namespace sarc {
namespace {

// Brute-force references, written independently of the library.
std::vector<double> ref_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

double ref_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

double ref_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return ref_pearson(ref_ranks(a), ref_ranks(b));
}

struct Pair {
  std::vector<double> a, b;
};

// Lengths 3-50, values on a coarse grid so ties are common, plus explicit duplicates.
std::vector<Pair> random_pairs(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(3, 50);
  std::uniform_int_distribution<int> grid(0, 8);
  std::normal_distribution<double> n;
  std::vector<Pair> out;
  while (out.size() < count) {
    const std::size_t L = len(rng);
    Pair p;
    for (std::size_t i = 0; i < L; ++i) {
      p.a.push_back(1 + 0.5 * grid(rng));
      p.b.push_back(out.size() % 2 ? p.a.back() + n(rng) : std::round(3 * n(rng)) / 2);
    }
    p.b[0] = p.b[L - 1];
    auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
    };
    if (!constant(p.a) && !constant(p.b)) out.push_back(std::move(p));
  }
  return out;
}

TEST(MetricOracles, TwoHundredPairsWithTies) {
  for (const auto& [a, b] : random_pairs(200, 1)) {
    EXPECT_NEAR(spearman(a, b), ref_spearman(a, b), 1e-9);
    double ae = 0, se = 0, mean = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ae += std::abs(a[i] - b[i]);
      se += (a[i] - b[i]) * (a[i] - b[i]);
      mean += b[i];
    }
    mean /= b.size();
    double tot = 0;
    for (double v : b) tot += (v - mean) * (v - mean);
    EXPECT_NEAR(mae(a, b), ae / a.size(), 1e-9);
    EXPECT_NEAR(mse(a, b), se / a.size(), 1e-9);
    EXPECT_NEAR(r2(a, b), 1 - se / tot, 1e-9);
  }
}

TEST(MetricOracles, AverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, Examples) {
  const std::vector<double> a{0.3, 1.7, -2, 5, 4.4};
  EXPECT_NEAR(spearman(a, a), 1.0, 1e-15);
  std::vector<double> rev(a.rbegin(), a.rend()), sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> desc(sorted.rbegin(), sorted.rend());
  EXPECT_NEAR(spearman(sorted, desc), -1.0, 1e-15);
  const std::vector<double> x{1, 2, 2, 4}, y{1, 3, 2, 4};
  EXPECT_NEAR(spearman(x, y), ref_spearman(x, y), 1e-12);
}

TEST(Spearman, RankInvariantUnderMonotoneMaps) {
  for (const auto& [a, b] : random_pairs(30, 2)) {
    std::vector<double> m;
    for (double v : a) m.push_back(std::exp(3 * v) + v * v * v);
    EXPECT_NEAR(spearman(a, b), spearman(m, b), 1e-12);
  }
}

TEST(Spearman, DegenerateInputs) {
  EXPECT_THROW(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInputError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DegenerateInputError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), DimensionError);
}

TEST(ErrorMetrics, Examples) {
  const std::vector<double> t{1, 4};
  EXPECT_EQ(mae(t, t), 0.0);
  EXPECT_EQ(mse(t, t), 0.0);
  EXPECT_EQ(r2(t, t), 1.0);
  const std::vector<double> p{1, 2};
  EXPECT_EQ(mae(p, t), 1.0);
  EXPECT_EQ(mse(p, t), 2.0);
  EXPECT_THROW(r2(p, std::vector<double>{3, 3}), DegenerateInputError);
}

TEST(ErrorMetrics, MeanPredictorHasZeroR2) {
  for (const auto& pr : random_pairs(20, 3)) {
    const auto& target = pr.b;
    double m = 0;
    for (double v : target) m += v;
    m /= target.size();
    EXPECT_NEAR(r2(std::vector<double>(target.size(), m), target), 0.0, 1e-12);
  }
}

TEST(ErrorMetrics, ZeroIffZero) {
  for (const auto& [a, b] : random_pairs(20, 4)) {
    EXPECT_GE(mse(a, b), 0.0);
    EXPECT_GE(mae(a, b), 0.0);
    EXPECT_EQ(mse(a, b) == 0.0, mae(a, b) == 0.0);
  }
}

std::vector<FeatureVector> rows_of(const std::vector<std::vector<double>>& xs) {
  std::vector<FeatureVector> out;
  for (const auto& x : xs) out.push_back({Protocol::kP1, x, true});
  return out;
}

TEST(LinearBaseline, ExactLinearTargetsRecovered) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> xs;
  std::vector<double> y;
  const std::vector<double> w{0.5, -1.25, 2.0, 0.0, 0.75};
  for (int i = 0; i < 40; ++i) {
    std::vector<double> x(5);
    double t = 3.0;
    for (std::size_t j = 0; j < 5; ++j) t += w[j] * (x[j] = n(rng));
    xs.push_back(x);
    y.push_back(t);
  }
  const auto rows = rows_of(xs);
  const LinearBaseline b = fit_linear_baseline(rows, y);
  EXPECT_FALSE(b.ridge_used);
  EXPECT_LE(mse(b.predict(rows), y), 1e-10);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(b.weights[j], w[j], 1e-9);
  EXPECT_NEAR(b.intercept, 3.0, 1e-9);
}

TEST(LinearBaseline, SingleFeatureSlopeIntercept) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  std::vector<FeatureVector> rows;
  std::vector<double> y;
  for (int i = 0; i < 30; ++i) {
    FeatureVector v{Protocol::kP1, {0.1 * i - 0.4, n(rng), n(rng), n(rng), n(rng)}, true};
    rows.push_back(v);
    y.push_back(-0.7 * v.values[0] + 2.2);
  }
  const LinearBaseline b = fit_linear_baseline(rows, y);
  EXPECT_NEAR(b.weights[0], -0.7, 1e-9);
  EXPECT_NEAR(b.intercept, 2.2, 1e-9);
  for (std::size_t j = 1; j < 5; ++j) EXPECT_NEAR(b.weights[j], 0.0, 1e-9);
}

TEST(LinearBaseline, ConstantColumnEngagesRidge) {
  std::vector<FeatureVector> rows;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    rows.push_back({Protocol::kP1, {0.1 * i, 0.3 * (i % 4), 0.0, 1.0 * (i % 3), -0.2 * i * (i % 2)}, true});
    y.push_back(1.0 + 0.5 * i);
  }
  const LinearBaseline b = fit_linear_baseline(rows, y);
  EXPECT_TRUE(b.ridge_used);
  for (double w : b.weights) EXPECT_TRUE(std::isfinite(w));
  EXPECT_TRUE(std::isfinite(b.intercept));
}

TEST(LinearBaseline, TooFewRowsThrows) {
  EXPECT_THROW(fit_linear_baseline(rows_of({{1, 2, 3, 4, 5}}), std::vector<double>{1}), DegenerateInputError);
}

TEST(LinearBaseline, KeyValueRoundTrip) {
  LinearBaseline b;
  b.protocol = Protocol::kP1;
  b.weights = {0.1, -0.2, 0.3, 0.4, 1.0 / 3};
  b.intercept = 2.5;
  KeyValueConfig kv;
  b.write_to(kv);
  const LinearBaseline back = LinearBaseline::read_from(KeyValueConfig::parse(kv.to_text()));
  EXPECT_EQ(back.weights, b.weights);
  EXPECT_EQ(back.intercept, 2.5);
}

}  // namespace
}  // namespace sarc
