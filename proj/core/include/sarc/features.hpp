#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sarc/image.hpp"

namespace sarc {

// Protocol 1: morphology + GLCM alignment (5 values).
// Protocol 2: Protocol 1 + six organisation-class area fractions (11 values).
enum class Protocol { kP1, kP2 };

std::size_t feature_count(Protocol protocol);
std::string_view protocol_name(Protocol protocol);  // "p1" / "p2"
Protocol parse_protocol(std::string_view text);

inline constexpr std::size_t kClassCount = 6;

enum class OrganizationClass : std::uint8_t {
  kBackground = 0,
  kDiffuseOther = 1,
  kFibers = 2,
  kDisorganizedPuncta = 3,
  kOrganizedPuncta = 4,
  kOrganizedZDiscs = 5,
};

// Column names in protocol order; P1 is a prefix of P2.
const std::array<std::string_view, 11>& feature_names();

struct FeatureVector {
  Protocol protocol = Protocol::kP2;
  std::vector<double> values;
  bool scaled = false;
};

// --- Set 1: morphology ---

std::size_t cell_area(const CellMask& mask);
// sqrt(lambda_max / lambda_min) of the foreground coordinate covariance.
double aspect_ratio(const CellMask& mask);

// --- Set 2: GLCM alignment ---

struct GlcmOptions {
  std::size_t levels = 8;
  std::size_t max_distance = 30;
};

// levels x levels, symmetric, sums to 1.
struct Glcm {
  std::size_t levels = 0;
  std::vector<double> p;
  double at(std::size_t i, std::size_t j) const { return p[i * levels + j]; }
};

// Intensities inside the mask are binned into `levels` equal-width bins over
// the masked range; ordered pairs (p, p + (dx,dy)) with both ends in the mask
// are counted, the matrix is symmetrised and normalised.
Glcm glcm(const GrayImage& image, const CellMask& mask, std::size_t levels, int dx, int dy);

// Haralick correlation of a normalised co-occurrence matrix.
double glcm_correlation(const Glcm& m);

inline constexpr std::array<double, 4> kGlcmDirectionsDeg{0.0, 45.0, 90.0, 135.0};

struct CorrelationProfile {
  std::vector<std::size_t> distances;                 // surviving distances, ascending
  std::array<std::vector<double>, 4> per_direction;   // indexed like distances
  std::vector<double> mean_curve;
  std::size_t max_distance = 0;
};

// Displacement used for distance d along direction theta (degrees).
std::pair<int, int> glcm_displacement(std::size_t distance, double theta_deg);

CorrelationProfile correlation_profile(const GrayImage& image, const CellMask& mask,
                                       const GlcmOptions& options = {});

struct AlignmentMetrics {
  double max_cv = 0;
  double peak_height = 0;
  double peak_distance_px = 0;
};

AlignmentMetrics alignment_metrics(const CorrelationProfile& profile);

// --- Set 3: class-area fractions ---

std::array<double, kClassCount> class_fractions(const ClassMap& classmap, const CellMask& mask);

// --- Assembly and scaling ---

struct CellMeasurements {
  const GrayImage* image = nullptr;
  const CellMask* mask = nullptr;
  const ClassMap* classmap = nullptr;  // required for P2
};

FeatureVector extract_features(const CellMeasurements& cell, Protocol protocol,
                               const GlcmOptions& options = {});

// First feature_count(protocol) entries of an 11-value tabular row.
FeatureVector select_protocol(std::span<const double> all_values, Protocol protocol);

inline constexpr double kScalerStdFloor = 1e-8;

struct ScalerParams {
  Protocol protocol = Protocol::kP2;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> lo;  // per-column range seen during fit; empty disables clamping
  std::vector<double> hi;
  std::string fitted_on = "train";
};

ScalerParams fit_scaler(std::span<const FeatureVector> train, std::string fitted_on = "train");
// Clamps each raw value to the fitted range, then standardises. Heavy-tailed
// columns (max_cv near a zero-mean distance) would otherwise reach the model
// far outside anything seen in training.
FeatureVector apply_scaler(const FeatureVector& v, const ScalerParams& params);
FeatureVector invert_scaler(const FeatureVector& v, const ScalerParams& params);

}  // namespace sarc
