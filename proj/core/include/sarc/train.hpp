#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sarc/baseline.hpp"
#include "sarc/config.hpp"
#include "sarc/data.hpp"
#include "sarc/evaluate.hpp"
#include "sarc/model.hpp"

namespace sarc {

struct TrainConfig {
  double lr = 0.0005;
  std::size_t batch_size = 40;
  std::size_t epochs = 100;
  SarcNetConfig model;  // protocol and init seed live here
  std::uint64_t shuffle_seed = 1;
  ResizeMode resize = ResizeMode::kStretch;
  std::size_t channel = 0;
  GlcmOptions glcm;
  bool augment = false;  // random flips/transposes of training images

  void validate() const;
  InputPipeline pipeline() const { return {model.input_size, resize, channel}; }

  // Keys: lr, batch_size, epochs, shuffle_seed, resize (stretch|pad), channel,
  // glcm_levels, glcm_max_distance, augment, plus the model keys.
  static TrainConfig from_config(const KeyValueConfig& kv, TrainConfig base);
  void write_to(KeyValueConfig& kv) const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  Metrics val;
};

struct TrainResult {
  SarcNetParams best;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_spearman;
  std::vector<EpochLog> log;
  ScalerParams scaler;
  LinearBaseline baseline;
};

// Called after each epoch; `improved` is true when this epoch became the best.
using EpochCallback = std::function<void(const EpochLog&, bool improved, const SarcNetParams& current)>;

// Measures features (cached in the records), fits the scaler and the linear
// baseline on `train_set`, then runs minibatch MSE/Adam. The returned model is
// the epoch with the strictly highest validation Spearman; ties keep the
// earlier epoch. A non-finite loss throws NumericError naming epoch and batch.
// With lr = 0 batches run in eval mode, so the model (including batch-norm
// running statistics) is unchanged and every epoch logs the same metrics.
TrainResult train(std::span<CellRecord> train_set, std::span<CellRecord> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Unscaled features for every record, computed in parallel and cached.
std::vector<FeatureVector> assemble_all(std::span<CellRecord> records, Protocol protocol,
                                        const GlcmOptions& options);
std::vector<FeatureVector> scale_all(std::span<const FeatureVector> raw, const ScalerParams& scaler);

// epoch,train_loss,val_spearman,val_mae,val_mse,val_r2 ("null" for degenerate metrics).
std::string training_log_csv(std::span<const EpochLog> log);

}  // namespace sarc
