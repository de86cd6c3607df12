#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sarc/error.hpp"
#include "sarc/features.hpp"
#include "sarc/synthetic.hpp"

namespace sarc {
namespace {

CellMask full_mask(std::size_t h, std::size_t w) { return CellMask(h, w, std::vector<std::uint8_t>(h * w, 1)); }

// Pixel centres inside a w x h rectangle centred in the frame and rotated by `deg`.
CellMask rectangle_mask(std::size_t frame, double w, double h, double deg) {
  const double c = (static_cast<double>(frame) - 1) / 2, t = deg * std::numbers::pi / 180;
  std::vector<std::uint8_t> m(frame * frame);
  for (std::size_t y = 0; y < frame; ++y)
    for (std::size_t x = 0; x < frame; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      const double u = dx * std::cos(t) + dy * std::sin(t), v = -dx * std::sin(t) + dy * std::cos(t);
      m[y * frame + x] = std::abs(u) < w / 2 && std::abs(v) < h / 2;
    }
  return CellMask(frame, frame, m);
}

CellMask disc_mask(std::size_t frame, double r) {
  const double c = (static_cast<double>(frame) - 1) / 2;
  std::vector<std::uint8_t> m(frame * frame);
  for (std::size_t y = 0; y < frame; ++y)
    for (std::size_t x = 0; x < frame; ++x) m[y * frame + x] = std::hypot(x - c, y - c) <= r;
  return CellMask(frame, frame, m);
}

GrayImage stripes(std::size_t size, double period, bool vary_along_y) {
  GrayImage img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double s = static_cast<double>(vary_along_y ? y : x);
      img.at(y, x) = static_cast<float>(0.5 + 0.5 * std::cos(2 * std::numbers::pi * s / period));
    }
  return img;
}

// Brute-force reference: quantise, enumerate ordered pairs, symmetrise, normalise.
std::vector<double> reference_glcm(const GrayImage& img, const CellMask& mask, std::size_t L, int dx, int dy) {
  double lo = 1e9, hi = -1e9;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      if (mask.contains(y, x)) {
        lo = std::min<double>(lo, img.at(y, x));
        hi = std::max<double>(hi, img.at(y, x));
      }
  auto bin = [&](std::size_t y, std::size_t x) {
    const double t = (img.at(y, x) - lo) / (hi - lo);
    return std::min<std::size_t>(static_cast<std::size_t>(t * L), L - 1);
  };
  std::vector<double> c(L * L, 0);
  double n = 0;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      const long y2 = static_cast<long>(y) + dy, x2 = static_cast<long>(x) + dx;
      if (y2 < 0 || x2 < 0 || y2 >= static_cast<long>(img.height()) || x2 >= static_cast<long>(img.width())) continue;
      if (!mask.contains(y, x) || !mask.contains(y2, x2)) continue;
      const auto a = bin(y, x), b = bin(y2, x2);
      c[a * L + b] += 1;
      c[b * L + a] += 1;
      n += 2;
    }
  for (auto& v : c) v /= n;
  return c;
}

double reference_correlation(const std::vector<double>& p, std::size_t L) {
  double mi = 0, mj = 0;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      mi += i * p[i * L + j];
      mj += j * p[i * L + j];
    }
  double vi = 0, vj = 0, cov = 0;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      vi += (i - mi) * (i - mi) * p[i * L + j];
      vj += (j - mj) * (j - mj) * p[i * L + j];
      cov += (i - mi) * (j - mj) * p[i * L + j];
    }
  return cov / std::sqrt(vi * vj);
}

TEST(CellArea, Examples) {
  EXPECT_EQ(cell_area(full_mask(10, 10)), 100u);
  std::vector<std::uint8_t> m(100, 0);
  for (int i = 0; i < 16; ++i) m[i * 5] = 1;
  EXPECT_EQ(cell_area(CellMask(10, 10, m)), 16u);
  std::mt19937_64 rng(1);
  std::bernoulli_distribution b(0.3);
  std::size_t count = 0;
  for (auto& v : m) count += (v = b(rng));
  EXPECT_EQ(cell_area(CellMask(10, 10, m)), count);
}

TEST(AspectRatio, AxisAlignedRectangles) {
  for (double ratio : {1.0, 2.0, 4.0}) {
    const double got = aspect_ratio(rectangle_mask(64, 40, 40 / ratio, 0));
    EXPECT_NEAR(got, ratio, 0.02 * ratio) << ratio;
  }
}

TEST(AspectRatio, RotatedRectangles) {
  for (double ratio : {1.0, 2.0, 4.0}) {
    const double got = aspect_ratio(rectangle_mask(80, 48, 48 / ratio, 30));
    EXPECT_NEAR(got, ratio, 0.05 * ratio) << ratio;
  }
}

TEST(AspectRatio, DiscIsRound) { EXPECT_NEAR(aspect_ratio(disc_mask(64, 20)), 1.0, 0.02); }

TEST(AspectRatio, TranslationInvariant) {
  std::vector<std::uint8_t> a(50 * 50, 0), b(50 * 50, 0);
  for (std::size_t y = 5; y < 15; ++y)
    for (std::size_t x = 3; x < 28; ++x) {
      a[y * 50 + x] = 1;
      b[(y + 20) * 50 + x + 17] = 1;
    }
  EXPECT_DOUBLE_EQ(aspect_ratio(CellMask(50, 50, a)), aspect_ratio(CellMask(50, 50, b)));
}

TEST(AspectRatio, CollinearMaskIsDegenerate) {
  std::vector<std::uint8_t> m(20 * 20, 0);
  for (std::size_t x = 0; x < 20; ++x) m[5 * 20 + x] = 1;
  EXPECT_THROW(aspect_ratio(CellMask(20, 20, m)), DegenerateInputError);
}

TEST(Glcm, CheckerboardIsOffDiagonal) {
  GrayImage img(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(y, x) = static_cast<float>((x + y) % 2);
  const Glcm m = glcm(img, full_mask(8, 8), 2, 1, 0);
  EXPECT_DOUBLE_EQ(m.at(0, 0) + m.at(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 0.5);
  EXPECT_NEAR(glcm_correlation(m), -1.0, 1e-9);
}

TEST(Glcm, VerticalStripesAlongColumnAreDiagonal) {
  GrayImage img(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(y, x) = static_cast<float>((x / 2) % 2);
  const Glcm m = glcm(img, full_mask(8, 8), 2, 0, 1);
  EXPECT_DOUBLE_EQ(m.at(0, 1) + m.at(1, 0), 0.0);
  EXPECT_NEAR(glcm_correlation(m), 1.0, 1e-9);
}

TEST(Glcm, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  std::bernoulli_distribution in(0.8);
  for (int trial = 0; trial < 5; ++trial) {
    GrayImage img(16, 16);
    std::vector<std::uint8_t> mm(256);
    for (std::size_t i = 0; i < 256; ++i) {
      img.at(i / 16, i % 16) = u(rng);
      mm[i] = in(rng);
    }
    const CellMask mask(16, 16, mm);
    for (auto [dx, dy] : {std::pair{1, 0}, {0, -2}, {3, -3}, {-2, -2}}) {
      const Glcm m = glcm(img, mask, 8, dx, dy);
      const auto ref = reference_glcm(img, mask, 8, dx, dy);
      double total = 0;
      for (std::size_t i = 0; i < 64; ++i) {
        EXPECT_NEAR(m.p[i], ref[i], 1e-12);
        total += m.p[i];
        EXPECT_DOUBLE_EQ(m.at(i / 8, i % 8), m.at(i % 8, i / 8));
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      const double c = glcm_correlation(m);
      EXPECT_NEAR(c, reference_correlation(ref, 8), 1e-12);
      EXPECT_GE(c, -1.0);
      EXPECT_LE(c, 1.0);
    }
  }
}

TEST(Glcm, ErrorContracts) {
  EXPECT_THROW(glcm(GrayImage(8, 8, 0.5F), full_mask(8, 8), 8, 1, 0), DegenerateInputError);
  GrayImage img(8, 8);
  img.at(0, 0) = 1;
  EXPECT_THROW(glcm(img, full_mask(8, 8), 8, 0, 0), ConfigError);
  EXPECT_THROW(glcm(img, full_mask(8, 8), 8, 9, 0), DegenerateInputError);
  Glcm diag{2, {1.0, 0.0, 0.0, 0.0}};
  EXPECT_THROW(glcm_correlation(diag), DegenerateInputError);
}

TEST(Glcm, PerfectDiagonalCorrelationIsOne) {
  Glcm m{4, std::vector<double>(16, 0.0)};
  for (std::size_t i = 0; i < 4; ++i) m.p[i * 4 + i] = 0.25;
  EXPECT_NEAR(glcm_correlation(m), 1.0, 1e-9);
}

TEST(Glcm, RandomMatrixMatchesFormula) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  Glcm m{6, std::vector<double>(36)};
  double s = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.p[i * 6 + j] = m.p[j * 6 + i] = u(rng);
  for (double v : m.p) s += v;
  for (auto& v : m.p) v /= s;
  EXPECT_NEAR(glcm_correlation(m), reference_correlation(m.p, 6), 1e-12);
}

TEST(CorrelationProfile, StripesPeakAtPeriod) {
  const GrayImage img = stripes(96, 10, true);
  const CorrelationProfile prof = correlation_profile(img, full_mask(96, 96));
  ASSERT_FALSE(prof.mean_curve.empty());
  for (std::size_t i = 0; i < prof.distances.size(); ++i) {
    double m = 0;
    for (const auto& d : prof.per_direction) {
      EXPECT_GE(d[i], -1.0);
      EXPECT_LE(d[i], 1.0);
      m += d[i];
    }
    EXPECT_NEAR(prof.mean_curve[i], m / 4, 1e-12);
  }
  const AlignmentMetrics a = alignment_metrics(prof);
  EXPECT_NEAR(a.peak_distance_px, 10.0, 1.0);
  EXPECT_GT(a.peak_height, 0.1);
}

TEST(CorrelationProfile, StripePeriodsRecoveredByGenerator) {
  SyntheticSpec spec;
  spec.image_size = 128;
  spec.major_axis = {40, 56};
  spec.minor_axis = {28, 40};
  spec.orientation_step_deg = 90;
  for (double period : {6.0, 10.0, 14.0}) {
    spec.stripe_period = period;
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const SyntheticCell cell = render_cell(spec, 5, 1000 + seed);
      const auto a = alignment_metrics(correlation_profile(cell.image, cell.mask));
      ok += std::abs(a.peak_distance_px - period) <= 1.0;
    }
    EXPECT_GE(ok, 19) << "period " << period;
  }
}

TEST(CorrelationProfile, SmoothedNoiseIsIsotropic) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const std::size_t S = 128;
  std::vector<double> raw(S * S);
  for (auto& v : raw) v = n(rng);
  // Separable Gaussian blur, sigma 4, so correlations stay well above zero for d <= 5.
  std::vector<double> k;
  for (int i = -12; i <= 12; ++i) k.push_back(std::exp(-i * i / 32.0));
  auto blur = [&](const std::vector<double>& in, bool rows) {
    std::vector<double> out(S * S, 0);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x)
        for (int i = -12; i <= 12; ++i) {
          const long yy = static_cast<long>(y) + (rows ? i : 0), xx = static_cast<long>(x) + (rows ? 0 : i);
          const long cy = std::clamp<long>(yy, 0, S - 1), cx = std::clamp<long>(xx, 0, S - 1);
          out[y * S + x] += k[i + 12] * in[cy * S + cx];
        }
    return out;
  };
  const auto sm = blur(blur(raw, true), false);
  const auto [lo, hi] = std::minmax_element(sm.begin(), sm.end());
  GrayImage img(S, S);
  for (std::size_t i = 0; i < S * S; ++i) img.at(i / S, i % S) = static_cast<float>((sm[i] - *lo) / (*hi - *lo));
  const CorrelationProfile prof = correlation_profile(img, full_mask(S, S), {8, 8});
  for (std::size_t i = 0; i < prof.distances.size() && prof.distances[i] <= 5; ++i) {
    double m = 0, v = 0;
    for (const auto& d : prof.per_direction) m += d[i] / 4;
    for (const auto& d : prof.per_direction) v += (d[i] - m) * (d[i] - m) / 4;
    EXPECT_LT(std::sqrt(v) / std::abs(m), 0.5) << "d = " << prof.distances[i];
  }
}

TEST(CorrelationProfile, TooFewDistancesIsDegenerate) {
  GrayImage img(8, 8);
  img.at(3, 3) = 1;
  std::vector<std::uint8_t> m(64, 0);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) m[y * 8 + x] = 1;
  EXPECT_THROW(correlation_profile(img, CellMask(8, 8, m)), DegenerateInputError);
  EXPECT_THROW(correlation_profile(img, full_mask(8, 8), {8, 3}), ConfigError);
}

CorrelationProfile synthetic_profile(const std::vector<double>& curve) {
  CorrelationProfile p;
  p.max_distance = curve.size();
  for (std::size_t i = 0; i < curve.size(); ++i) p.distances.push_back(i + 1);
  for (auto& d : p.per_direction) d = curve;
  p.mean_curve = curve;
  return p;
}

TEST(AlignmentMetrics, MonotoneCurveFallsBack) {
  std::vector<double> c;
  for (int d = 1; d <= 12; ++d) c.push_back(std::exp(-d / 3.0));
  const auto a = alignment_metrics(synthetic_profile(c));
  EXPECT_EQ(a.peak_height, 0.0);
  EXPECT_EQ(a.peak_distance_px, 12.0);
  EXPECT_NEAR(a.max_cv, 0.0, 1e-6);
}

TEST(AlignmentMetrics, FirstMinimumThenFirstMaximum) {
  const auto a = alignment_metrics(synthetic_profile({0.9, 0.5, 0.1, 0.3, 0.6, 0.6, 0.2, 0.8, 0.1}));
  EXPECT_EQ(a.peak_distance_px, 5.0);  // plateau at 5,6 resolves to the smaller distance
  EXPECT_NEAR(a.peak_height, 0.5, 1e-12);
}

TEST(AlignmentMetrics, CvAcrossDirections) {
  CorrelationProfile p = synthetic_profile({0.8, 0.6, 0.4, 0.2});
  p.per_direction[0] = {0.8, 0.2, 0.4, 0.2};
  p.per_direction[1] = {0.8, 1.0, 0.4, 0.2};
  for (std::size_t i = 0; i < 4; ++i) {
    double m = 0;
    for (const auto& d : p.per_direction) m += d[i] / 4;
    p.mean_curve[i] = m;
  }
  // d = 2: values 0.2, 1.0, 0.6, 0.6 -> mean 0.6, std sqrt(0.08)
  EXPECT_NEAR(alignment_metrics(p).max_cv, std::sqrt(0.08) / 0.6, 1e-6);
}

TEST(ClassFractions, Examples) {
  const CellMask mask = full_mask(8, 8);
  ClassMap uniform{8, 8, std::vector<std::uint8_t>(64, 3)};
  const auto u = class_fractions(uniform, mask);
  for (std::size_t k = 0; k < kClassCount; ++k) EXPECT_EQ(u[k], k == 3 ? 1.0 : 0.0);

  ClassMap half{8, 8, std::vector<std::uint8_t>(64, 2)};
  for (std::size_t i = 32; i < 64; ++i) half.labels[i] = 5;
  const auto h = class_fractions(half, mask);
  const std::array<double, 6> want{0, 0, 0.5, 0, 0, 0.5};
  for (std::size_t k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(h[k], want[k]);
}

TEST(ClassFractions, MatchCountingOracleAndSumToOne) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lab(0, 5);
  std::bernoulli_distribution in(0.6);
  for (int t = 0; t < 10; ++t) {
    ClassMap cm{12, 12, std::vector<std::uint8_t>(144)};
    std::vector<std::uint8_t> mm(144);
    for (std::size_t i = 0; i < 144; ++i) {
      cm.labels[i] = static_cast<std::uint8_t>(lab(rng));
      mm[i] = in(rng);
    }
    mm[0] = 1;
    const CellMask mask(12, 12, mm);
    std::array<double, 6> counts{};
    for (std::size_t i = 0; i < 144; ++i)
      if (mm[i]) counts[cm.labels[i]] += 1;
    const auto f = class_fractions(cm, mask);
    double s = 0;
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_NEAR(f[k], counts[k] / mask.foreground_count(), 1e-15);
      s += f[k];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(ClassFractions, InvalidLabelAndShape) {
  ClassMap bad{8, 8, std::vector<std::uint8_t>(64, 6)};
  EXPECT_THROW(class_fractions(bad, full_mask(8, 8)), ParseError);
  ClassMap small{8, 9, std::vector<std::uint8_t>(72, 1)};
  EXPECT_THROW(class_fractions(small, full_mask(8, 8)), DimensionError);
}

TEST(ExtractFeatures, ProtocolWidthsAndDomains) {
  SyntheticSpec spec;
  const SyntheticCell cell = render_cell(spec, 5, 42);
  const CellMeasurements m{&cell.image, &cell.mask, &cell.classmap};
  const FeatureVector p1 = extract_features(m, Protocol::kP1);
  const FeatureVector p2 = extract_features(m, Protocol::kP2);
  ASSERT_EQ(p1.values.size(), 5u);
  ASSERT_EQ(p2.values.size(), 11u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p1.values[i], p2.values[i]);
  EXPECT_GT(p2.values[0], 0);
  EXPECT_GE(p2.values[1], 1);
  EXPECT_GE(p2.values[4], 1);
  double s = 0;
  for (std::size_t i = 5; i < 11; ++i) s += p2.values[i];
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_THROW(extract_features({&cell.image, &cell.mask, nullptr}, Protocol::kP2), ConfigError);
}

std::vector<FeatureVector> random_vectors(std::size_t n, std::uint64_t seed, double shift = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector v{Protocol::kP1, {}, false};
    for (std::size_t j = 0; j < 5; ++j) v.values.push_back(10.0 * j + (1.0 + j) * g(rng) + shift * (1.0 + j));
    v.values[3] = 2.5;  // constant column
    out.push_back(v);
  }
  return out;
}

TEST(Scaler, TrainColumnsStandardised) {
  const auto train = random_vectors(200, 6);
  const ScalerParams s = fit_scaler(train);
  std::array<double, 5> sum{}, sq{};
  for (const auto& v : train) {
    const auto z = apply_scaler(v, s);
    EXPECT_TRUE(z.scaled);
    for (std::size_t j = 0; j < 5; ++j) {
      sum[j] += z.values[j];
      sq[j] += z.values[j] * z.values[j];
    }
  }
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(sum[j] / 200, 0.0, 1e-6);
    if (j == 3) {
      EXPECT_EQ(sq[j], 0.0);
      EXPECT_EQ(s.std[j], kScalerStdFloor);
    } else {
      EXPECT_NEAR(std::sqrt(sq[j] / 200), 1.0, 1e-6);
    }
  }
}

TEST(Scaler, ShiftedTestSetKeepsNonzeroMean) {
  const ScalerParams s = fit_scaler(random_vectors(500, 7));
  const auto test = random_vectors(300, 8, 0.5);
  double m = 0;
  for (const auto& v : test) m += apply_scaler(v, s).values[0] / 300;
  // Column 0 is shifted by +0.5 std; clamping to the fitted range trims only the far tail.
  EXPECT_GT(m, 0.3);
}

TEST(Scaler, InvertRecoversInputs) {
  const auto train = random_vectors(100, 9);
  const ScalerParams s = fit_scaler(train);
  for (const auto& v : train) {
    const auto back = invert_scaler(apply_scaler(v, s), s);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(back.values[j], v.values[j], 1e-6);
  }
}

TEST(Scaler, ClampsToFittedRange) {
  const auto train = random_vectors(50, 10);
  const ScalerParams s = fit_scaler(train);
  FeatureVector far = train[0];
  far.values[2] = 1e9;
  far.values[4] = -1e9;
  const auto z = apply_scaler(far, s);
  EXPECT_DOUBLE_EQ(z.values[2], (s.hi[2] - s.mean[2]) / s.std[2]);
  EXPECT_DOUBLE_EQ(z.values[4], (s.lo[4] - s.mean[4]) / s.std[4]);
  ScalerParams open = s;
  open.lo.clear();
  open.hi.clear();
  EXPECT_DOUBLE_EQ(apply_scaler(far, open).values[2], (1e9 - s.mean[2]) / s.std[2]);
}

TEST(Scaler, ProtocolMismatchThrows) {
  const ScalerParams s = fit_scaler(random_vectors(20, 11));
  FeatureVector p2{Protocol::kP2, std::vector<double>(11, 0.1), false};
  EXPECT_THROW(apply_scaler(p2, s), ProtocolMismatchError);
}

TEST(Protocol, NamesAndCounts) {
  EXPECT_EQ(feature_count(Protocol::kP1), 5u);
  EXPECT_EQ(feature_count(Protocol::kP2), 11u);
  EXPECT_EQ(parse_protocol("p2"), Protocol::kP2);
  EXPECT_EQ(protocol_name(Protocol::kP1), "p1");
  EXPECT_THROW(parse_protocol("p3"), ConfigError);
  EXPECT_EQ(feature_names()[4], "peak_distance_px");
}

}  // namespace
}  // namespace sarc
