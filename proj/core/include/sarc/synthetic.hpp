#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sarc/config.hpp"
#include "sarc/data.hpp"
#include "sarc/image.hpp"

namespace sarc {

struct SyntheticCohort {
  int day = 18;
  std::array<std::size_t, 5> counts{120, 120, 120, 120, 120};  // levels 1..5
};

// Procedural single-cell images whose organization level is known.
//   1: sparse disorganized puncta       2: dense puncta
//   3: fibers with a few puncta          4: striped patches, random orientation per patch
//   5: stripes aligned across the cell
struct SyntheticSpec {
  std::vector<SyntheticCohort> cohorts{SyntheticCohort{}};
  std::size_t image_size = 96;
  std::array<double, 2> major_axis{28, 42};  // ellipse semi-axis ranges, px
  std::array<double, 2> minor_axis{16, 26};
  double stripe_period = 10;       // px
  double stripe_period_jitter = 0;  // period drawn from period * (1 +- jitter)
  double line_width_fraction = 0.07;  // z-disc line Gaussian sigma / period
  double band_weight = 0.12;          // share of the sinusoidal band under the lines
  double orientation_step_deg = 0;  // > 0 snaps cell orientation to multiples
  double sparse_puncta_density = 0.004;  // dots per cell pixel, level 1
  double dense_puncta_density = 0.015;   // level 2; level 3 uses a fraction
  double puncta_radius = 1.8;
  std::size_t patch_size = 16;
  double noise_sigma = 0.03;
  double disagreement_probability = 0;
  // Per-patch probability that the class map mislabels a patch's foreground
  // with one random class, imitating an imperfect per-pixel classifier.
  double classmap_error = 0;
  // Per-cell probability that the whole class-map foreground collapses to one
  // random class (a failed classification).
  double classmap_failure = 0;
  std::uint64_t seed = 7;

  std::size_t total_count() const;
  void validate() const;

  // Keys: image_size, major_axis, minor_axis, stripe_period, stripe_period_jitter,
  // line_width_fraction, band_weight, orientation_step_deg, sparse_puncta_density, dense_puncta_density,
  // puncta_radius, patch_size, noise_sigma, disagreement_probability, classmap_error, classmap_failure, seed,
  // plus either counts/day or cohorts = N with cohortK.counts / cohortK.day.
  static SyntheticSpec from_config(const KeyValueConfig& kv);
  void write_to(KeyValueConfig& kv) const;
};

struct SyntheticCell {
  GrayImage image;
  CellMask mask;
  ClassMap classmap;
  int level = 0;
  double period = 0;
  double orientation_deg = 0;  // stripe normal direction for level 5
};

// Renders one cell; fully determined by (spec, level, cell_seed).
SyntheticCell render_cell(const SyntheticSpec& spec, int level, std::uint64_t cell_seed);

// Writes images/, masks/, classmaps/ and manifest.csv under `out_dir` and
// returns the records in manifest order.
std::vector<CellRecord> generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace sarc
