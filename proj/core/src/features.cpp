#include "sarc/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sarc/error.hpp"

namespace sarc {

std::size_t feature_count(Protocol protocol) { return protocol == Protocol::kP1 ? 5 : 11; }

std::string_view protocol_name(Protocol protocol) {
  return protocol == Protocol::kP1 ? "p1" : "p2";
}

Protocol parse_protocol(std::string_view text) {
  if (text == "p1" || text == "P1" || text == "1") return Protocol::kP1;
  if (text == "p2" || text == "P2" || text == "2") return Protocol::kP2;
  throw ConfigError("unknown protocol '" + std::string(text) + "' (expected p1 or p2)");
}

const std::array<std::string_view, 11>& feature_names() {
  static constexpr std::array<std::string_view, 11> names{
      "cell_area_px",          "aspect_ratio",           "max_cv",
      "peak_height",           "peak_distance_px",       "frac_background",
      "frac_diffuse_other",    "frac_fibers",            "frac_disorganized_puncta",
      "frac_organized_puncta", "frac_organized_zdiscs"};
  return names;
}

std::size_t cell_area(const CellMask& mask) { return mask.foreground_count(); }

double aspect_ratio(const CellMask& mask) {
  double n = 0, sx = 0, sy = 0;
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (!mask.contains(y, x)) continue;
      n += 1;
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
    }
  }
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (!mask.contains(y, x)) continue;
      const double dx = static_cast<double>(x) - mx, dy = static_cast<double>(y) - my;
      cxx += dx * dx;
      cyy += dy * dy;
      cxy += dx * dy;
    }
  }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double half_trace = 0.5 * (cxx + cyy);
  const double disc = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
  const double lmax = half_trace + disc;
  const double lmin = half_trace - disc;
  if (!(lmin > 1e-12 * std::max(lmax, 1.0))) {
    throw DegenerateInputError("aspect_ratio: mask pixels are collinear");
  }
  return std::sqrt(lmax / lmin);
}

namespace {

// Mask-restricted quantisation shared by every displacement of a profile.
struct Quantized {
  std::size_t height = 0, width = 0, levels = 0;
  std::vector<int> bins;  // -1 outside the mask
};

Quantized quantize(const GrayImage& image, const CellMask& mask, std::size_t levels) {
  require_same_size(image, mask);
  if (levels < 2) throw ConfigError("glcm: need at least 2 quantisation levels");
  float lo = 1.0F, hi = 0.0F;
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      if (!mask.contains(y, x)) continue;
      lo = std::min(lo, image.at(y, x));
      hi = std::max(hi, image.at(y, x));
    }
  }
  if (!(hi > lo)) {
    throw DegenerateInputError("glcm: masked region is constant; correlation undefined");
  }
  Quantized q{image.height(), image.width(), levels, std::vector<int>(image.size(), -1)};
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      if (!mask.contains(y, x)) continue;
      const double t = (static_cast<double>(image.at(y, x)) - lo) / span;
      const auto bin = static_cast<std::size_t>(std::floor(t * static_cast<double>(levels)));
      q.bins[y * q.width + x] = static_cast<int>(std::min(bin, levels - 1));
    }
  }
  return q;
}

Glcm cooccurrence(const Quantized& q, int dx, int dy) {
  if (dx == 0 && dy == 0) throw ConfigError("glcm: displacement (0,0) is not allowed");
  const std::size_t L = q.levels;
  std::vector<double> counts(L * L, 0.0);
  double pairs = 0;
  const auto h = static_cast<std::ptrdiff_t>(q.height), w = static_cast<std::ptrdiff_t>(q.width);
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min(h, h - dy); ++y) {
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, -dx); x < std::min(w, w - dx); ++x) {
      const int a = q.bins[static_cast<std::size_t>(y * w + x)];
      const int b = q.bins[static_cast<std::size_t>((y + dy) * w + (x + dx))];
      if (a < 0 || b < 0) continue;
      counts[static_cast<std::size_t>(a) * L + static_cast<std::size_t>(b)] += 1;
      pairs += 1;
    }
  }
  if (pairs == 0) {
    throw DegenerateInputError("glcm: no in-mask pixel pair at displacement (" +
                               std::to_string(dx) + "," + std::to_string(dy) + ")");
  }
  Glcm m{L, std::vector<double>(L * L)};
  const double total = 2.0 * pairs;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) m.p[i * L + j] = (counts[i * L + j] + counts[j * L + i]) / total;
  }
  return m;
}

}  // namespace

Glcm glcm(const GrayImage& image, const CellMask& mask, std::size_t levels, int dx, int dy) {
  if (dx == 0 && dy == 0) throw ConfigError("glcm: displacement (0,0) is not allowed");
  return cooccurrence(quantize(image, mask, levels), dx, dy);
}

double glcm_correlation(const Glcm& m) {
  const std::size_t L = m.levels;
  double mu_i = 0, mu_j = 0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      mu_i += static_cast<double>(i) * m.at(i, j);
      mu_j += static_cast<double>(j) * m.at(i, j);
    }
  }
  double var_i = 0, var_j = 0, cov = 0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const double di = static_cast<double>(i) - mu_i, dj = static_cast<double>(j) - mu_j;
      var_i += di * di * m.at(i, j);
      var_j += dj * dj * m.at(i, j);
      cov += di * dj * m.at(i, j);
    }
  }
  if (!(var_i > 1e-15) || !(var_j > 1e-15)) {
    throw DegenerateInputError("glcm_correlation: zero marginal variance");
  }
  return std::clamp(cov / std::sqrt(var_i * var_j), -1.0, 1.0);
}

std::pair<int, int> glcm_displacement(std::size_t distance, double theta_deg) {
  const double rad = theta_deg * std::numbers::pi / 180.0;
  const double d = static_cast<double>(distance);
  // Rows grow downwards, so positive angles move up the image.
  return {static_cast<int>(std::lround(d * std::cos(rad))),
          static_cast<int>(-std::lround(d * std::sin(rad)))};
}

CorrelationProfile correlation_profile(const GrayImage& image, const CellMask& mask,
                                       const GlcmOptions& options) {
  if (options.max_distance < 4) throw ConfigError("correlation_profile: max distance must be >= 4");
  const Quantized q = quantize(image, mask, options.levels);
  CorrelationProfile prof;
  prof.max_distance = options.max_distance;
  for (std::size_t d = 1; d <= options.max_distance; ++d) {
    std::array<double, 4> values{};
    bool ok = true;
    for (std::size_t k = 0; k < 4 && ok; ++k) {
      const auto [dx, dy] = glcm_displacement(d, kGlcmDirectionsDeg[k]);
      try {
        values[k] = glcm_correlation(cooccurrence(q, dx, dy));
      } catch (const DegenerateInputError&) {
        ok = false;
      }
    }
    if (!ok) continue;
    prof.distances.push_back(d);
    double mean = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      prof.per_direction[k].push_back(values[k]);
      mean += values[k];
    }
    prof.mean_curve.push_back(mean / 4.0);
  }
  if (prof.distances.size() < 4) {
    throw DegenerateInputError("correlation_profile: only " + std::to_string(prof.distances.size()) +
                               " distances have defined texture (need 4)");
  }
  return prof;
}

AlignmentMetrics alignment_metrics(const CorrelationProfile& profile) {
  AlignmentMetrics out;
  const auto& c = profile.mean_curve;
  const std::size_t n = c.size();

  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0;
    for (std::size_t k = 0; k < 4; ++k) mean += profile.per_direction[k][i];
    mean /= 4.0;
    double var = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = profile.per_direction[k][i] - mean;
      var += d * d;
    }
    const double cv = std::sqrt(var / 4.0) / (std::abs(mean) + 1e-8);
    out.max_cv = std::max(out.max_cv, cv);
  }

  out.peak_height = 0.0;
  out.peak_distance_px = static_cast<double>(profile.max_distance);
  std::size_t minimum = n;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (c[i] < c[i - 1] && c[i] <= c[i + 1]) {
      minimum = i;
      break;
    }
  }
  if (minimum == n) return out;
  for (std::size_t j = minimum + 1; j + 1 < n; ++j) {
    // A plateau of equal maxima resolves to its first (smallest-distance) point.
    if (c[j] > c[j - 1] && c[j] >= c[j + 1]) {
      out.peak_distance_px = static_cast<double>(profile.distances[j]);
      out.peak_height = c[j] - c[minimum];
      return out;
    }
  }
  return out;
}

std::array<double, kClassCount> class_fractions(const ClassMap& classmap, const CellMask& mask) {
  if (classmap.height != mask.height() || classmap.width != mask.width() ||
      classmap.labels.size() != classmap.height * classmap.width) {
    throw DimensionError("class map " + std::to_string(classmap.height) + "x" +
                         std::to_string(classmap.width) + " does not match mask " +
                         std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
  std::array<double, kClassCount> counts{};
  for (std::size_t i = 0; i < classmap.labels.size(); ++i) {
    const auto label = classmap.labels[i];
    if (label >= kClassCount) {
      throw ParseError("class map label " + std::to_string(label) + " outside the 6-class set");
    }
    if (mask.membership()[i]) counts[label] += 1;
  }
  const double total = static_cast<double>(mask.foreground_count());
  for (auto& v : counts) v /= total;
  return counts;
}

FeatureVector extract_features(const CellMeasurements& cell, Protocol protocol,
                               const GlcmOptions& options) {
  if (!cell.image || !cell.mask) throw ConfigError("extract_features: image and mask are required");
  require_same_size(*cell.image, *cell.mask);
  FeatureVector fv{protocol, {}, false};
  fv.values.reserve(feature_count(protocol));
  fv.values.push_back(static_cast<double>(cell_area(*cell.mask)));
  fv.values.push_back(aspect_ratio(*cell.mask));
  const AlignmentMetrics am = alignment_metrics(correlation_profile(*cell.image, *cell.mask, options));
  fv.values.push_back(am.max_cv);
  fv.values.push_back(am.peak_height);
  fv.values.push_back(am.peak_distance_px);
  if (protocol == Protocol::kP2) {
    if (!cell.classmap) throw ConfigError("extract_features: protocol p2 needs a class map");
    for (double f : class_fractions(*cell.classmap, *cell.mask)) fv.values.push_back(f);
  }
  return fv;
}

FeatureVector select_protocol(std::span<const double> all_values, Protocol protocol) {
  const std::size_t n = feature_count(protocol);
  if (all_values.size() < n) {
    throw DimensionError("protocol " + std::string(protocol_name(protocol)) + " needs " +
                         std::to_string(n) + " features, got " + std::to_string(all_values.size()));
  }
  return {protocol, std::vector<double>(all_values.begin(), all_values.begin() + static_cast<std::ptrdiff_t>(n)), false};
}

ScalerParams fit_scaler(std::span<const FeatureVector> train, std::string fitted_on) {
  if (train.empty()) throw DegenerateInputError("fit_scaler: no training vectors");
  const Protocol protocol = train.front().protocol;
  const std::size_t n = feature_count(protocol);
  ScalerParams p{protocol,
                 std::vector<double>(n, 0.0),
                 std::vector<double>(n, 0.0),
                 std::vector<double>(n, INFINITY),
                 std::vector<double>(n, -INFINITY),
                 std::move(fitted_on)};
  for (const auto& v : train) {
    if (v.protocol != protocol || v.values.size() != n) {
      throw ProtocolMismatchError("fit_scaler: mixed protocols in training vectors");
    }
    if (v.scaled) throw ConfigError("fit_scaler: vectors are already scaled");
    for (std::size_t j = 0; j < n; ++j) {
      p.mean[j] += v.values[j];
      p.lo[j] = std::min(p.lo[j], v.values[j]);
      p.hi[j] = std::max(p.hi[j], v.values[j]);
    }
  }
  const double count = static_cast<double>(train.size());
  for (auto& m : p.mean) m /= count;
  for (const auto& v : train) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = v.values[j] - p.mean[j];
      p.std[j] += d * d;
    }
  }
  for (auto& s : p.std) s = std::max(std::sqrt(s / count), kScalerStdFloor);
  return p;
}

namespace {
void check_scaler_match(const FeatureVector& v, const ScalerParams& params) {
  if (v.protocol != params.protocol || v.values.size() != params.mean.size()) {
    throw ProtocolMismatchError("scaler fitted for protocol " +
                                std::string(protocol_name(params.protocol)) +
                                " applied to a protocol " + std::string(protocol_name(v.protocol)) +
                                " vector");
  }
}
}  // namespace

FeatureVector apply_scaler(const FeatureVector& v, const ScalerParams& params) {
  check_scaler_match(v, params);
  if (v.scaled) throw ConfigError("apply_scaler: vector is already scaled");
  FeatureVector out{v.protocol, v.values, true};
  const bool clamp = !params.lo.empty();
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    double x = out.values[j];
    if (clamp) x = std::clamp(x, params.lo[j], params.hi[j]);
    out.values[j] = (x - params.mean[j]) / params.std[j];
  }
  return out;
}

FeatureVector invert_scaler(const FeatureVector& v, const ScalerParams& params) {
  check_scaler_match(v, params);
  if (!v.scaled) throw ConfigError("invert_scaler: vector is not scaled");
  FeatureVector out{v.protocol, v.values, false};
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    out.values[j] = out.values[j] * params.std[j] + params.mean[j];
  }
  return out;
}

}  // namespace sarc
