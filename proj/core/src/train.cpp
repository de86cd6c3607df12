#include "sarc/train.hpp"

#include <cmath>
#include <exception>
#include <sstream>

#include "sarc/adam.hpp"
#include "sarc/error.hpp"
#include "sarc/parallel.hpp"

namespace sarc {

void TrainConfig::validate() const {
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (glcm.levels < 2) throw ConfigError("glcm_levels must be >= 2");
  if (glcm.max_distance < 4) throw ConfigError("glcm_max_distance must be >= 4");
  model.validate();
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, TrainConfig base) {
  TrainConfig c = base;
  auto count = [&](const std::string& key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.lr = kv.get_double("lr", base.lr);
  c.batch_size = count("batch_size", base.batch_size);
  c.epochs = count("epochs", base.epochs);
  c.shuffle_seed = kv.get_u64("shuffle_seed", base.shuffle_seed);
  const std::string resize = kv.get_string("resize", base.resize == ResizeMode::kStretch ? "stretch" : "pad");
  if (resize == "stretch") {
    c.resize = ResizeMode::kStretch;
  } else if (resize == "pad") {
    c.resize = ResizeMode::kPadToSquare;
  } else {
    throw ConfigError("resize must be 'stretch' or 'pad', got '" + resize + "'");
  }
  c.channel = count("channel", base.channel);
  c.glcm.levels = count("glcm_levels", base.glcm.levels);
  c.glcm.max_distance = count("glcm_max_distance", base.glcm.max_distance);
  c.augment = kv.get_bool("augment", base.augment);
  c.model = SarcNetConfig::from_config(kv, base.model);
  c.validate();
  return c;
}

void TrainConfig::write_to(KeyValueConfig& kv) const {
  kv.set("lr", format_double(lr));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("shuffle_seed", std::to_string(shuffle_seed));
  kv.set("resize", resize == ResizeMode::kStretch ? "stretch" : "pad");
  kv.set("channel", std::to_string(channel));
  kv.set("glcm_levels", std::to_string(glcm.levels));
  kv.set("glcm_max_distance", std::to_string(glcm.max_distance));
  kv.set("augment", augment ? "true" : "false");
  model.write_to(kv);
}

std::vector<FeatureVector> assemble_all(std::span<CellRecord> records, Protocol protocol,
                                        const GlcmOptions& options) {
  std::vector<std::exception_ptr> errors(records.size());
  parallel_for(std::size_t{0}, records.size(), [&](std::size_t i) {
    try {
      assemble_features(records[i], protocol, options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(*r.features);
  return out;
}

std::vector<FeatureVector> scale_all(std::span<const FeatureVector> raw, const ScalerParams& scaler) {
  std::vector<FeatureVector> out;
  out.reserve(raw.size());
  for (const auto& v : raw) out.push_back(apply_scaler(v, scaler));
  return out;
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::ostringstream s;
  s << "epoch,train_loss,val_spearman,val_mae,val_mse,val_r2\n";
  for (const auto& e : log) {
    s << e.epoch << ',' << format_double(e.train_loss) << ',' << format_metric(e.val.spearman) << ','
      << format_double(e.val.mae) << ',' << format_double(e.val.mse) << ',' << format_metric(e.val.r2) << '\n';
  }
  return s.str();
}

TrainResult train(std::span<CellRecord> train_set, std::span<CellRecord> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw DegenerateInputError("train: empty training split");
  if (val_set.empty()) throw DegenerateInputError("train: empty validation split");
  const Protocol protocol = cfg.model.protocol;

  const auto train_raw = assemble_all(train_set, protocol, cfg.glcm);
  const auto val_raw = assemble_all(val_set, protocol, cfg.glcm);
  TrainResult result;
  result.scaler = fit_scaler(train_raw, "train");
  const auto train_x = scale_all(train_raw, result.scaler);
  const auto val_x = scale_all(val_raw, result.scaler);

  std::vector<double> train_y, val_y;
  for (const auto& r : train_set) train_y.push_back(r.ground_truth);
  for (const auto& r : val_set) val_y.push_back(r.ground_truth);
  result.baseline = fit_linear_baseline(train_x, train_y);

  SarcNetParams params = init_params<float>(cfg.model);
  auto named = params.parameters();
  AdamOptions opts;
  opts.lr = cfg.lr;
  AdamState<float> adam(opts);

  const InputPipeline pipeline = cfg.pipeline();
  InputCache train_cache, val_cache;

  // lr = 0 is a frozen dry run: eval-mode forwards leave batch-norm statistics untouched too.
  const Mode mode = cfg.lr == 0 ? Mode::kEval : Mode::kTrain;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    BatchStream stream(train_set, train_x, pipeline, cfg.batch_size, cfg.shuffle_seed, epoch, &train_cache,
                       cfg.augment);
    double loss_sum = 0;
    std::size_t seen = 0, batch_no = 0;
    while (auto batch = stream.next()) {
      ++batch_no;
      params.zero_grad();
      const Tensor pred = sarcnet_forward(batch->images, batch->features, params, mode);
      const Tensor loss = mse_loss(pred, batch->targets);
      const double l = loss.item();
      if (!std::isfinite(l)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      loss.backward();
      adam_step<float>(named, adam);
      loss_sum += l * static_cast<double>(batch->indices.size());
      seen += batch->indices.size();
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    const auto val_pred = predict_scores(params, val_set, val_x, pipeline, cfg.batch_size, &val_cache);
    entry.val = compute_metrics(val_pred, val_y);
    result.log.push_back(entry);

    const bool improved =
        entry.val.spearman && (!result.best_val_spearman || *entry.val.spearman > *result.best_val_spearman);
    // Epoch 1 is the fallback when no epoch yields a defined Spearman.
    if (improved || (epoch == 1 && !result.best_val_spearman)) {
      result.best = params.cast<float>();
      result.best_epoch = epoch;
      result.best_val_spearman = entry.val.spearman;
    }
    if (on_epoch) on_epoch(entry, improved, params);
  }
  return result;
}

}  // namespace sarc
