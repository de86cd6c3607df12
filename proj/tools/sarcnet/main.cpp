// sarcnet: command-line front end for the sarc core library.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "sarc/baseline.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/data.hpp"
#include "sarc/error.hpp"
#include "sarc/evaluate.hpp"
#include "sarc/explain.hpp"
#include "sarc/image_io.hpp"
#include "sarc/parallel.hpp"
#include "sarc/synthetic.hpp"
#include "sarc/train.hpp"

namespace fs = std::filesystem;
using namespace sarc;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4, kOther = 1 };

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool reproducible = false;
  std::string out;
  std::string protocol;
  bool force = false;
};

std::string now_text() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::localtime(&t));
  return buf;
}

void log_line(const std::string& msg) { std::clog << "[" << now_text() << "] " << msg << '\n'; }

KeyValueConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) return {};
  return KeyValueConfig::load(g.config);
}

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw ConfigError("--out <dir> is required");
  return g.out;
}

void prepare_out_dir(const fs::path& dir, bool must_be_new, bool force) {
  std::error_code ec;
  if (must_be_new && fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw IoError("output directory " + dir.string() + " already exists and is not empty (use --force)");
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw IoError("cannot write " + path.string());
  }
}

std::optional<Protocol> requested_protocol(const GlobalOptions& g) {
  if (g.protocol.empty()) return std::nullopt;
  return parse_protocol(g.protocol);
}

void check_protocol(const GlobalOptions& g, Protocol checkpoint_protocol) {
  const auto req = requested_protocol(g);
  if (req && *req != checkpoint_protocol) {
    throw ProtocolMismatchError("requested protocol " + std::string(protocol_name(*req)) +
                                " but the checkpoint was trained with " +
                                std::string(protocol_name(checkpoint_protocol)));
  }
}

std::string run_info(const GlobalOptions& g, const std::string& command) {
  std::ostringstream s;
  s << "command = " << command << '\n';
  s << "reproducible = " << (g.reproducible ? "true" : "false") << '\n';
  s << "threads = " << num_threads() << '\n';
  s << "timestamp = " << now_text() << '\n';
  return s.str();
}

// --- generate ---

int cmd_generate(const GlobalOptions& g, const std::string& spec_path) {
  const fs::path out = require_out(g);
  KeyValueConfig kv = spec_path.empty() ? load_config(g) : KeyValueConfig::load(spec_path);
  SyntheticSpec spec = SyntheticSpec::from_config(kv);
  kv.reject_unused();
  if (g.seed) spec.seed = *g.seed;
  prepare_out_dir(out, true, g.force);
  const auto records = generate_synthetic(spec, out);
  log_line("generated " + std::to_string(records.size()) + " cells in " + out.string());
  return kOk;
}

// --- extract ---

int cmd_extract(const GlobalOptions& g, const std::string& manifest) {
  const fs::path out = require_out(g);
  KeyValueConfig kv = load_config(g);
  TrainConfig cfg = TrainConfig::from_config(kv, TrainConfig{});
  if (auto p = requested_protocol(g)) cfg.model.protocol = *p;
  auto load = load_manifest(manifest);
  const auto raw = assemble_all(load.records, cfg.model.protocol, cfg.glcm);
  prepare_out_dir(out, false, true);
  std::ostringstream s;
  s << "cell_id";
  const std::size_t f = feature_count(cfg.model.protocol);
  for (std::size_t j = 0; j < f; ++j) s << ',' << feature_names()[j];
  s << '\n';
  for (std::size_t i = 0; i < raw.size(); ++i) {
    s << load.records[i].cell_id;
    for (double v : raw[i].values) s << ',' << format_double(v);
    s << '\n';
  }
  write_text(out / "features.csv", s.str());
  log_line("wrote features for " + std::to_string(raw.size()) + " cells to " + (out / "features.csv").string());
  return kOk;
}

// --- train ---

struct SplitSettings {
  std::uint64_t seed = 0;
  bool stratify = false;
};

TrainConfig train_config_from(const KeyValueConfig& kv, const GlobalOptions& g, SplitSettings& split) {
  TrainConfig base;
  const std::string preset = kv.get_string("model_preset", "full");
  if (preset == "scaled") {
    base.model = SarcNetConfig::scaled();
  } else if (preset != "full") {
    throw ConfigError("model_preset must be 'full' or 'scaled', got '" + preset + "'");
  }
  KeyValueConfig effective = kv;
  if (g.seed) effective.set("seed", std::to_string(*g.seed));
  if (!g.protocol.empty()) effective.set("protocol", g.protocol);
  TrainConfig cfg = TrainConfig::from_config(effective, base);
  if (!effective.contains("shuffle_seed")) cfg.shuffle_seed = cfg.model.seed;
  split.seed = effective.get_u64("split_seed", cfg.model.seed);
  split.stratify = effective.get_bool("split_stratify", false);
  effective.reject_unused();
  return cfg;
}

int cmd_train(const GlobalOptions& g, const std::string& manifest) {
  const fs::path out = require_out(g);
  SplitSettings split;
  const TrainConfig cfg = train_config_from(load_config(g), g, split);
  auto load = load_manifest(manifest);
  const SplitAssignment assignment = split_records(load.records, {split.seed, split.stratify});
  auto train_set = select(load.records, assignment.indices(SplitLabel::kTrain));
  auto val_set = select(load.records, assignment.indices(SplitLabel::kVal));
  prepare_out_dir(out, false, true);
  log_line("training on " + std::to_string(train_set.size()) + " cells, validating on " +
           std::to_string(val_set.size()) + " (test held out: " +
           std::to_string(assignment.indices(SplitLabel::kTest).size()) + ")");

  const auto started = std::chrono::steady_clock::now();
  TrainResult result = train(train_set, val_set, cfg, [&](const EpochLog& e, bool improved, const SarcNetParams&) {
    std::ostringstream s;
    s << "epoch " << e.epoch << "/" << cfg.epochs << " loss " << format_double(e.train_loss) << " val_spearman "
      << format_metric(e.val.spearman) << " val_mae " << format_double(e.val.mae) << (improved ? " *" : "");
    log_line(s.str());
  });

  Checkpoint ckpt{result.best, {}};
  cfg.write_to(ckpt.metadata);
  write_scaler(ckpt.metadata, result.scaler);
  result.baseline.write_to(ckpt.metadata);
  ckpt.metadata.set("split.seed", std::to_string(split.seed));
  ckpt.metadata.set("split.stratify", split.stratify ? "true" : "false");
  ckpt.metadata.set("split.record_count", std::to_string(load.records.size()));
  ckpt.metadata.set("best_epoch", std::to_string(result.best_epoch));
  ckpt.metadata.set("best_val_spearman", format_metric(result.best_val_spearman));
  save_checkpoint(ckpt, out / "model.ckpt");
  write_text(out / "training_log.csv", training_log_csv(result.log));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ostringstream info;
  info << run_info(g, "train");
  info << "best_epoch = " << result.best_epoch << '\n';
  info << "best_val_spearman = " << format_metric(result.best_val_spearman) << '\n';
  info << "timestamp_wall_seconds = " << secs << '\n';
  write_text(out / "run_info.txt", info.str());
  log_line("best epoch " + std::to_string(result.best_epoch) + " (val spearman " +
           format_metric(result.best_val_spearman) + "), checkpoint " + (out / "model.ckpt").string());
  return kOk;
}

// --- shared by evaluate / explain ---

struct LoadedModel {
  Checkpoint ckpt;
  TrainConfig cfg;
  ScalerParams scaler;
};

LoadedModel load_model(const GlobalOptions& g, const std::string& path) {
  LoadedModel m{load_checkpoint(path), {}, {}};
  TrainConfig base;
  base.model = m.ckpt.params.config;
  m.cfg = TrainConfig::from_config(m.ckpt.metadata, base);
  m.scaler = read_scaler(m.ckpt.metadata);
  if (m.scaler.protocol != m.cfg.model.protocol) {
    throw ProtocolMismatchError("checkpoint scaler protocol differs from its model protocol");
  }
  check_protocol(g, m.cfg.model.protocol);
  return m;
}

std::vector<CellRecord> subset_records(const LoadedModel& m, std::vector<CellRecord> all, const std::string& subset) {
  if (subset == "all") return all;
  const SplitLabel label = parse_split(subset);
  const auto expected = m.ckpt.metadata.get_u64("split.record_count", 0);
  if (expected != 0 && expected != all.size()) {
    throw ConfigError("manifest has " + std::to_string(all.size()) + " records but the checkpoint was trained on a " +
                      std::to_string(expected) + "-record manifest; use --subset all for a different dataset");
  }
  const SplitAssignment a =
      split_records(all, {m.ckpt.metadata.get_u64("split.seed", 0), m.ckpt.metadata.get_bool("split.stratify", false)});
  return select(all, a.indices(label));
}

// --- evaluate ---

int cmd_evaluate(const GlobalOptions& g, const std::string& manifest, const std::string& checkpoint,
                 const std::string& subset) {
  const fs::path out = require_out(g);
  LoadedModel m = load_model(g, checkpoint);
  auto records = subset_records(m, load_manifest(manifest).records, subset);
  const auto raw = assemble_all(records, m.cfg.model.protocol, m.cfg.glcm);
  const auto scaled = scale_all(raw, m.scaler);
  const auto pred = predict_scores(m.ckpt.params, records, scaled, m.cfg.pipeline(), m.cfg.batch_size);
  const std::string provenance = "epoch " + m.ckpt.metadata.get_string("best_epoch", "?");
  const EvalReport report = make_report(records, pred, "sarcnet", provenance);
  prepare_out_dir(out, false, true);

  std::string summary = report_summary(report);
  summary += "subset = " + subset + '\n';
  try {
    const LinearBaseline baseline = LinearBaseline::read_from(m.ckpt.metadata);
    const auto base_pred = baseline.predict(scaled);
    const EvalReport base_report = make_report(records, base_pred, "linear-baseline", provenance);
    write_report_csv(base_report, out / "baseline_predictions.csv");
    summary += "baseline.spearman = " + format_metric(base_report.metrics.spearman) + '\n';
    summary += "baseline.mae = " + format_double(base_report.metrics.mae) + '\n';
    summary += "baseline.mse = " + format_double(base_report.metrics.mse) + '\n';
    summary += "baseline.r2 = " + format_metric(base_report.metrics.r2) + '\n';
  } catch (const ConfigError& e) {
    log_line(std::string("no baseline in checkpoint: ") + e.what());
  }
  write_report_csv(report, out / "predictions.csv");
  write_text(out / "summary.txt", summary);
  write_day_histograms(report, out);
  std::cout << summary;
  return kOk;
}

// --- score ---

int cmd_score(const GlobalOptions& g, const std::string& image_path, const std::string& mask_path,
              const std::string& classmap_path, const std::string& checkpoint) {
  LoadedModel m = load_model(g, checkpoint);
  CellRecord rec;
  rec.cell_id = fs::path(image_path).stem().string();
  rec.image_path = image_path;
  rec.mask_path = mask_path;
  if (!classmap_path.empty()) rec.classmap_path = classmap_path;
  if (m.cfg.model.protocol == Protocol::kP2 && classmap_path.empty()) {
    throw ConfigError("protocol p2 checkpoint needs --classmap");
  }
  const FeatureVector raw = assemble_features(rec, m.cfg.model.protocol, m.cfg.glcm);
  const std::vector<FeatureVector> scaled{apply_scaler(raw, m.scaler)};
  const std::vector<CellRecord> one{rec};
  const double s = predict_scores(m.ckpt.params, one, scaled, m.cfg.pipeline(), 1)[0];
  std::printf("score = %.4f (display %.2f)\n", s, std::clamp(s, 1.0, 5.0));
  return kOk;
}

// --- explain ---

int cmd_explain(const GlobalOptions& g, const std::string& manifest, const std::string& checkpoint,
                const std::vector<std::string>& cells, const std::string& subset, std::size_t limit,
                std::size_t stage) {
  const fs::path out = require_out(g);
  LoadedModel m = load_model(g, checkpoint);
  auto all = load_manifest(manifest).records;
  std::vector<CellRecord> chosen;
  if (!cells.empty()) {
    for (const auto& id : cells) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const CellRecord& r) { return r.cell_id == id; });
      if (it == all.end()) throw ConfigError("cell '" + id + "' is not in the manifest");
      chosen.push_back(*it);
    }
  } else {
    chosen = subset_records(m, std::move(all), subset);
    if (chosen.size() > limit) chosen.resize(limit);
  }
  prepare_out_dir(out, false, true);
  const auto raw = assemble_all(chosen, m.cfg.model.protocol, m.cfg.glcm);
  const auto scaled = scale_all(raw, m.scaler);
  const InputPipeline pipeline = m.cfg.pipeline();
  std::ostringstream table;
  table << "cell_id,ground_truth,in_mask_mean,out_mask_mean\n";
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& r = chosen[i];
    const Tensor input = load_model_input(r, pipeline);
    const std::size_t s = pipeline.input_size;
    Tensor image(Shape{1, 3, s, s}, std::vector<float>(input.values().begin(), input.values().end()));
    Tensor feats(Shape{1, scaled[i].values.size()},
                 std::vector<float>(scaled[i].values.begin(), scaled[i].values.end()));
    const Heatmap h = gradcam(m.ckpt.params, image, feats, stage);
    const GrayImage original = load_image(r.image_path, pipeline.channel);
    const CellMask mask = load_mask(r.mask_path);
    const Heatmap full = resize_heatmap(h, original.height(), original.width());
    write_overlay(original, full, out / (r.cell_id + "_gradcam.png"));
    write_heatmap_raw(full, out / (r.cell_id + ".hmap"));
    double in_sum = 0, out_sum = 0;
    std::size_t in_n = 0, out_n = 0;
    for (std::size_t y = 0; y < mask.height(); ++y) {
      for (std::size_t x = 0; x < mask.width(); ++x) {
        (mask.contains(y, x) ? in_sum : out_sum) += full.at(y, x);
        ++(mask.contains(y, x) ? in_n : out_n);
      }
    }
    table << r.cell_id << ',' << format_double(r.ground_truth) << ',' << format_double(in_n ? in_sum / in_n : 0)
          << ',' << format_double(out_n ? out_sum / out_n : 0) << '\n';
  }
  write_text(out / "gradcam_summary.csv", table.str());
  log_line("wrote " + std::to_string(chosen.size()) + " Grad-CAM overlays to " + out.string());
  return kOk;
}

// --- report ---

int cmd_report(const GlobalOptions& g, const std::string& eval_csv) {
  const fs::path out = require_out(g);
  const EvalReport report = read_report_csv(eval_csv);
  prepare_out_dir(out, false, true);
  write_day_histograms(report, out);
  const std::string summary = report_summary(report);
  write_text(out / "report_summary.txt", summary);
  std::cout << summary;
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const CheckpointError*>(&e)) return kIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e)) {
    return kUsage;
  }
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sarcomere organization scoring: synthesize, extract, train, evaluate, score, explain, report"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides config)");
  app.add_option("--config", g.config, "Key = value config file");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--reproducible", g.reproducible, "Single-threaded deterministic mode");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--protocol", g.protocol, "Feature protocol")->check(CLI::IsMember({"p1", "p2"}));
  app.add_flag("--force", g.force, "Allow writing into a non-empty output directory");

  std::string spec_path, manifest, checkpoint, image, mask, classmap, eval_csv, subset = "test";
  std::vector<std::string> cells;
  std::size_t limit = 20;
  std::size_t stage = 0;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset and manifest");
  gen->add_option("--spec", spec_path, "Synthetic spec file (defaults to --config)");

  auto* ext = app.add_subcommand("extract", "Compute feature vectors for a manifest");
  ext->add_option("--manifest", manifest)->required();

  auto* tr = app.add_subcommand("train", "Train the fusion network and the linear baseline");
  tr->add_option("--manifest", manifest)->required();

  auto* ev = app.add_subcommand("evaluate", "Score a split and write the evaluation report");
  ev->add_option("--manifest", manifest)->required();
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--subset", subset, "train|val|test|all")->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* sc = app.add_subcommand("score", "Score one cell");
  sc->add_option("--image", image)->required();
  sc->add_option("--mask", mask)->required();
  sc->add_option("--classmap", classmap);
  sc->add_option("--checkpoint", checkpoint)->required();

  auto* ex = app.add_subcommand("explain", "Grad-CAM overlays for selected cells");
  ex->add_option("--manifest", manifest)->required();
  ex->add_option("--checkpoint", checkpoint)->required();
  ex->add_option("--cells", cells, "Cell ids (comma separated)")->delimiter(',');
  ex->add_option("--subset", subset, "Split used when --cells is absent")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  ex->add_option("--limit", limit, "Maximum cells when --cells is absent");
  ex->add_option("--stage", stage, "Residual stage to explain (1-4; 0 = deepest stage with at least a 7x7 map)");

  auto* rp = app.add_subcommand("report", "Per-day histograms and summary from a predictions CSV");
  rp->add_option("--eval-csv", eval_csv)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (g.reproducible) {
      if (g.threads != 1) log_line("--reproducible forces a single worker thread");
      set_num_threads(1);
    } else {
      set_num_threads(g.threads);
      if (g.threads > 1) {
        log_line("running with " + std::to_string(g.threads) + " threads; use --reproducible for bit-identical output");
      }
    }
    if (*gen) return cmd_generate(g, spec_path);
    if (*ext) return cmd_extract(g, manifest);
    if (*tr) return cmd_train(g, manifest);
    if (*ev) return cmd_evaluate(g, manifest, checkpoint, subset);
    if (*sc) return cmd_score(g, image, mask, classmap, checkpoint);
    if (*ex) return cmd_explain(g, manifest, checkpoint, cells, subset, limit, stage);
    if (*rp) return cmd_report(g, eval_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kUsage;
}
