#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sarc/data.hpp"
#include "sarc/model.hpp"

namespace sarc {

// Eval-mode scores for `records`, batched; scaled_features[i] pairs with records[i].
std::vector<double> predict_scores(SarcNetParams& params, std::span<const CellRecord> records,
                                   std::span<const FeatureVector> scaled_features,
                                   const InputPipeline& pipeline, std::size_t batch_size = 40,
                                   InputCache* cache = nullptr);

struct Metrics {
  std::optional<double> spearman;  // empty when predictions or targets are constant
  double mae = 0;
  double mse = 0;
  std::optional<double> r2;  // empty when targets are constant
};

Metrics compute_metrics(std::span<const double> pred, std::span<const double> target);

inline constexpr std::size_t kHistogramBins = 10;  // width 0.5 over [0.5, 5.5]

// Counts of predictions clamped to [1,5], bin k covering [0.5 + 0.5k, 1 + 0.5k).
std::array<std::size_t, kHistogramBins> score_histogram(std::span<const double> predictions);

struct EvalRow {
  std::string cell_id;
  int day = 0;
  double ground_truth = 0;
  double prediction = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  Metrics metrics;
  std::map<int, std::array<std::size_t, kHistogramBins>> histograms;  // per day
  std::map<int, double> mean_prediction;                              // per day
  std::string model_label = "sarcnet";
  std::string provenance;  // e.g. "epoch 17"

  // Recomputes metrics from rows and compares; throws NumericError on drift.
  void check_consistency() const;
};

EvalReport make_report(std::span<const CellRecord> records, std::span<const double> predictions,
                       std::string model_label = "sarcnet", std::string provenance = {});

// Per-cell CSV: cell_id,day,ground_truth,prediction
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report_csv(const std::filesystem::path& path);

// Structured key = value summary (metrics, per-day counts, means, histograms).
std::string report_summary(const EvalReport& report);

// One histogram PNG per day named hist_day<D>.png; returns the written paths.
std::vector<std::filesystem::path> write_day_histograms(const EvalReport& report,
                                                        const std::filesystem::path& dir);

std::string format_metric(const std::optional<double>& v);

}  // namespace sarc
