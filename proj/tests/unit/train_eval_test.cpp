#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "sarc/error.hpp"
#include "sarc/checkpoint.hpp"
#include "sarc/evaluate.hpp"
#include "sarc/synthetic.hpp"
#include "sarc/train.hpp"
#include "test_util.hpp"

namespace sarc {
namespace {

namespace fs = std::filesystem;

// 40 small cells shared by the training tests; generated once.
class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticSpec spec;
    spec.image_size = 48;
    spec.major_axis = {16, 21};
    spec.minor_axis = {10, 14};
    spec.stripe_period = 6;
    spec.cohorts = {SyntheticCohort{18, {8, 8, 8, 8, 8}}};
    auto recs = generate_synthetic(spec, test::scratch_dir("train_fixture"));
    const SplitAssignment split = split_records(recs, {3, false});
    const auto tr = split.indices(SplitLabel::kTrain), va = split.indices(SplitLabel::kVal);
    train_ = new std::vector<CellRecord>(select(recs, tr));
    val_ = new std::vector<CellRecord>(select(recs, va));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete val_;
  }
  static TrainConfig config(std::size_t epochs, double lr) {
    TrainConfig c;
    c.model = SarcNetConfig::scaled();
    c.epochs = epochs;
    c.lr = lr;
    c.batch_size = 8;
    c.glcm.max_distance = 12;
    return c;
  }
  static std::vector<CellRecord>* train_;
  static std::vector<CellRecord>* val_;
};
std::vector<CellRecord>* TrainFixture::train_ = nullptr;
std::vector<CellRecord>* TrainFixture::val_ = nullptr;

TEST_F(TrainFixture, ZeroLearningRateFreezesModel) {
  const TrainConfig cfg = config(3, 0.0);
  const SarcNetParams init = init_params<float>(cfg.model);
  std::vector<std::uint32_t> before;
  init.for_each_tensor([&](const std::string&, const Tensor& t, TensorRole) {
    for (float v : t.values()) before.push_back(std::bit_cast<std::uint32_t>(v));
  });
  std::vector<std::uint32_t> after;
  const TrainResult r = train(*train_, *val_, cfg, [&](const EpochLog&, bool, const SarcNetParams& p) {
    after.clear();
    p.for_each_tensor([&](const std::string&, const Tensor& t, TensorRole) {
      for (float v : t.values()) after.push_back(std::bit_cast<std::uint32_t>(v));
    });
    EXPECT_EQ(after, before);
  });
  ASSERT_EQ(r.log.size(), 3u);
  for (const auto& e : r.log) {
    EXPECT_EQ(e.val.mae, r.log[0].val.mae);
    EXPECT_EQ(e.val.mse, r.log[0].val.mse);
    EXPECT_EQ(e.val.spearman, r.log[0].val.spearman);
    // Batches are reshuffled each epoch, so the loss sum differs only by rounding.
    EXPECT_NEAR(e.train_loss, r.log[0].train_loss, 1e-6 * r.log[0].train_loss);
  }
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST_F(TrainFixture, LogLengthAndArgmaxSelection) {
  const TrainConfig cfg = config(4, 0.002);
  std::vector<std::vector<double>> snapshots;
  const TrainResult r = train(*train_, *val_, cfg);
  ASSERT_EQ(r.log.size(), 4u);
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    EXPECT_EQ(r.log[i].epoch, i + 1);
    if (r.log[i].val.spearman && (!r.log[argmax].val.spearman || *r.log[i].val.spearman > *r.log[argmax].val.spearman))
      argmax = i;
  }
  EXPECT_EQ(r.best_epoch, argmax + 1);
  EXPECT_EQ(r.best_val_spearman, r.log[argmax].val.spearman);

  // The returned model reproduces its logged validation metrics.
  std::vector<CellRecord> val = *val_;
  const auto x = scale_all(assemble_all(val, cfg.model.protocol, cfg.glcm), r.scaler);
  SarcNetParams best = r.best;
  const auto pred = predict_scores(best, val, x, cfg.pipeline(), 8);
  std::vector<double> y;
  for (const auto& c : val) y.push_back(c.ground_truth);
  const Metrics m = compute_metrics(pred, y);
  EXPECT_EQ(m.mae, r.log[argmax].val.mae);
  EXPECT_EQ(m.spearman, r.log[argmax].val.spearman);

  const std::string csv = training_log_csv(r.log);
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_spearman,val_mae,val_mse,val_r2\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(TrainFixture, SameSeedIsBitwiseReproducible) {
  const TrainConfig cfg = config(2, 0.001);
  std::vector<CellRecord> t1 = *train_, v1 = *val_, t2 = *train_, v2 = *val_;
  const TrainResult a = train(t1, v1, cfg), b = train(t2, v2, cfg);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
  Checkpoint ca{a.best, {}}, cb{b.best, {}};
  EXPECT_EQ(serialize_checkpoint(ca), serialize_checkpoint(cb));
}

TEST_F(TrainFixture, NonFiniteLossAbortsWithContext) {
  const TrainConfig cfg = config(3, 0.001);
  try {
    train(*train_, *val_, cfg, [](const EpochLog& e, bool, const SarcNetParams& p) {
      if (e.epoch == 1) {
        SarcNetParams alias = p;  // shares storage with the live model
        alias.head[3].bias.at(0) = NAN;
      }
    });
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(TrainConfig, KeysAndValidation) {
  const KeyValueConfig kv = KeyValueConfig::parse(
      "lr = 0.001\nbatch_size = 16\nepochs = 7\naugment = true\nresize = pad\ninput_size = 64\n"
      "stage_widths = 8,16,32,64\nprotocol = p1\n");
  const TrainConfig c = TrainConfig::from_config(kv, TrainConfig{});
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_TRUE(c.augment);
  EXPECT_EQ(c.resize, ResizeMode::kPadToSquare);
  EXPECT_EQ(c.model.protocol, Protocol::kP1);
  EXPECT_NO_THROW(kv.reject_unused());
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("lr = -1\n"), TrainConfig{}), ConfigError);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("epochs = 0\n"), TrainConfig{}), ConfigError);
  const KeyValueConfig typo = KeyValueConfig::parse("lr = 0.1\nlearning_rate = 3\n");
  TrainConfig::from_config(typo, TrainConfig{});
  EXPECT_THROW(typo.reject_unused(), ConfigError);
}

std::vector<CellRecord> cohort_records() {
  std::vector<CellRecord> r;
  for (int i = 0; i < 8; ++i) {
    CellRecord c;
    c.cell_id = "c" + std::to_string(i);
    c.day = i < 4 ? 18 : 32;
    c.ground_truth = 1 + (i % 5);
    r.push_back(c);
  }
  return r;
}

TEST(Report, ConstantPredictionsGiveNullSpearman) {
  const auto recs = cohort_records();
  const std::vector<double> pred(recs.size(), 2.5);
  const EvalReport r = make_report(recs, pred);
  EXPECT_FALSE(r.metrics.spearman.has_value());
  EXPECT_TRUE(r.metrics.r2.has_value());
  EXPECT_NE(report_summary(r).find("spearman = null"), std::string::npos);
}

TEST(Report, SelfConsistentAndPerDay) {
  const auto recs = cohort_records();
  const std::vector<double> pred{0.2, 1.4, 2.6, 3.1, 3.9, 4.4, 5.0, 7.5};
  const EvalReport r = make_report(recs, pred, "sarcnet", "epoch 3");
  EXPECT_NO_THROW(r.check_consistency());
  EXPECT_DOUBLE_EQ(r.mean_prediction.at(18), (0.2 + 1.4 + 2.6 + 3.1) / 4);
  // Bins of width 0.5 from 0.5; predictions are clamped to [1,5] first.
  const auto& h18 = r.histograms.at(18);
  EXPECT_EQ(h18[1], 2u);  // 0.2 (clamped to 1.0) and 1.4
  EXPECT_EQ(h18[4], 1u);  // 2.6
  EXPECT_EQ(h18[5], 1u);  // 3.1
  EXPECT_EQ(r.histograms.at(32)[9], 2u);  // 5.0 and 7.5 -> 5.0
  const std::string s = report_summary(r);
  EXPECT_NE(s.find("higher_mean_day = 32"), std::string::npos) << s;
  EXPECT_NE(s.find("provenance = epoch 3"), std::string::npos);

  EvalReport tampered = r;
  tampered.metrics.mae += 1e-9;
  EXPECT_THROW(tampered.check_consistency(), NumericError);
}

TEST(Report, CsvRoundTripAndHistogramFiles) {
  const auto dir = test::scratch_dir("report");
  const auto recs = cohort_records();
  const std::vector<double> pred{1.1, 1.9, 2.2, 3.3, 3.9, 4.1, 4.8, 4.9};
  const EvalReport r = make_report(recs, pred);
  write_report_csv(r, dir / "eval.csv");
  const EvalReport back = read_report_csv(dir / "eval.csv");
  EXPECT_EQ(back.metrics.spearman, r.metrics.spearman);
  EXPECT_EQ(back.metrics.mse, r.metrics.mse);
  const auto files = write_day_histograms(back, dir / "hist");
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "hist_day18.png");
  EXPECT_TRUE(fs::exists(files[1]));
}

TEST(Report, ShiftedCohortHasHigherMean) {
  std::vector<CellRecord> recs;
  std::vector<double> pred;
  for (int i = 0; i < 20; ++i) {
    CellRecord c;
    c.cell_id = "x" + std::to_string(i);
    c.day = i < 10 ? 18 : 32;
    c.ground_truth = i < 10 ? 1 + i % 3 : 3 + i % 3;
    recs.push_back(c);
    pred.push_back(c.ground_truth + 0.1 * ((i * 7) % 5 - 2));
  }
  const EvalReport r = make_report(recs, pred);
  EXPECT_GT(r.mean_prediction.at(32), r.mean_prediction.at(18));
}

}  // namespace
}  // namespace sarc
