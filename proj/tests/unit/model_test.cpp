#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "sarc/checkpoint.hpp"
#include "sarc/error.hpp"
#include "sarc/model.hpp"
#include "test_util.hpp"

namespace sarc {
namespace {

using test::random_tensor;

SarcNetConfig scaled(std::uint64_t seed = 1) {
  SarcNetConfig c = SarcNetConfig::scaled();
  c.seed = seed;
  return c;
}

// Eval-mode batchnorm with non-trivial running statistics.
void perturb_running_stats(SarcNetParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.5F, 1.5F);
  p.for_each_tensor([&](const std::string& name, Tensor& t, TensorRole role) {
    if (role != TensorRole::kBuffer) return;
    for (auto& v : t.values()) v = name.find("running_var") != std::string::npos ? u(rng) : u(rng) - 1.0F;
  });
}

bool bitwise_equal(const SarcNetParams& a, const SarcNetParams& b) {
  std::vector<std::pair<std::string, Tensor>> ta, tb;
  a.for_each_tensor([&](const std::string& n, const Tensor& t, TensorRole) { ta.emplace_back(n, t); });
  b.for_each_tensor([&](const std::string& n, const Tensor& t, TensorRole) { tb.emplace_back(n, t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].first != tb[i].first || ta[i].second.shape() != tb[i].second.shape()) return false;
    for (std::size_t k = 0; k < ta[i].second.numel(); ++k) {
      if (std::bit_cast<std::uint32_t>(ta[i].second.at(k)) != std::bit_cast<std::uint32_t>(tb[i].second.at(k)))
        return false;
    }
  }
  return true;
}

TEST(Config, ScaledPresetAndValidation) {
  const SarcNetConfig c = SarcNetConfig::scaled();
  EXPECT_EQ(c.input_size, 64u);
  EXPECT_EQ(c.stage_widths, (std::array<std::size_t, 4>{8, 16, 32, 64}));
  EXPECT_EQ(c.embed_dim, 32u);
  EXPECT_EQ(c.feature_dim(), 11u);
  SarcNetConfig bad = c;
  bad.head_widths[3] = 2;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.stage_widths[1] = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, KeyValueRoundTrip) {
  SarcNetConfig c = scaled(99);
  c.protocol = Protocol::kP1;
  c.head_widths = {40, 20, 8, 1};
  KeyValueConfig kv;
  c.write_to(kv);
  EXPECT_EQ(SarcNetConfig::from_config(KeyValueConfig::parse(kv.to_text())), c);
}

TEST(Backbone, ShapeContract) {
  SarcNetParams p = init_params<float>(scaled());
  std::mt19937_64 rng(1);
  const Tensor emb = backbone_forward(random_tensor({2, 3, 64, 64}, rng), p, Mode::kTrain);
  EXPECT_EQ(emb.shape(), (Shape{2, 32}));
  EXPECT_THROW(backbone_forward(random_tensor({2, 3, 32, 32}, rng), p, Mode::kEval), DimensionError);
}

TEST(Backbone, IdenticalImagesGiveIdenticalEmbeddings) {
  SarcNetParams p = init_params<float>(scaled());
  perturb_running_stats(p, 2);
  std::mt19937_64 rng(2);
  const Tensor one = random_tensor({1, 3, 64, 64}, rng);
  Tensor two({2, 3, 64, 64});
  for (std::size_t i = 0; i < one.numel(); ++i) two.at(i) = two.at(one.numel() + i) = one.at(i);
  const Tensor e = backbone_forward(two, p, Mode::kEval);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(e.at(j), e.at(32 + j), 1e-6);
}

// He et al. count 17 main-path convolutions plus the final fully connected
// layer as the 18 weighted layers; the 3 projection shortcuts are not counted.
TEST(Backbone, Resnet18LayerCounts) {
  const SarcNetParams p = init_params<float>(scaled());
  const LayerCounts c = count_layers(p);
  EXPECT_EQ(c.main_path_convolutions, 17u);
  EXPECT_EQ(c.projection_convolutions, 3u);
  EXPECT_EQ(c.main_path_convolutions + 1, 18u);
  EXPECT_EQ(c.pooling_layers, 1u);
  EXPECT_EQ(c.backbone_linear, 3u);
  EXPECT_EQ(c.feature_linear, 3u);
  EXPECT_EQ(c.head_linear, 4u);
  EXPECT_FALSE(p.backbone.stages[0][0].projection.has_value());
  for (std::size_t s = 1; s < 4; ++s) {
    ASSERT_TRUE(p.backbone.stages[s][0].projection.has_value());
    EXPECT_EQ(p.backbone.stages[s][0].projection->stride, 2u);
    EXPECT_FALSE(p.backbone.stages[s][1].projection.has_value());
  }
  EXPECT_EQ(p.backbone.stem.weight.shape(), (Shape{8, 3, 7, 7}));
  EXPECT_EQ(p.backbone.neck[0].weight.shape(), (Shape{32, 64}));
  EXPECT_EQ(p.backbone.neck[1].weight.shape(), (Shape{64, 32}));
  EXPECT_EQ(p.backbone.neck[2].weight.shape(), (Shape{32, 64}));
}

TEST(FeatureBranch, ZeroInputZeroBiasGivesZero) {
  SarcNetParams p = init_params<float>(scaled());
  const Tensor e = feature_branch_forward(Tensor({3, 11}), p);
  EXPECT_EQ(e.shape(), (Shape{3, 32}));
  for (float v : e.values()) EXPECT_EQ(v, 0.0F);
  EXPECT_EQ(p.feature_branch[0].weight.shape(), (Shape{64, 11}));
  EXPECT_EQ(p.feature_branch[2].weight.extent(0), p.config.embed_dim);
  EXPECT_THROW(feature_branch_forward(Tensor({3, 5}), p), DimensionError);
}

TEST(FusionHead, ShapeOrderAndBias) {
  SarcNetParams p = init_params<float>(scaled());
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({2, 32}, rng), b = random_tensor({2, 32}, rng);
  const Tensor ab = fuse_and_head(a, b, p), ba = fuse_and_head(b, a, p);
  EXPECT_EQ(ab.shape(), (Shape{2, 1}));
  EXPECT_NE(ab.at(0), ba.at(0));

  std::vector<std::size_t> widths;
  for (const auto& l : p.head) widths.push_back(l.weight.extent(0));
  EXPECT_EQ(widths, (std::vector<std::size_t>{32, 16, 8, 1}));

  for (auto& l : p.head) {
    for (auto& v : l.weight.values()) v = 0;
  }
  p.head[3].bias.at(0) = 2.75F;
  const Tensor z = fuse_and_head(Tensor({2, 32}), Tensor({2, 32}), p);
  EXPECT_EQ(z.at(0), 2.75F);
  EXPECT_EQ(z.at(1), 2.75F);
  EXPECT_THROW(fuse_and_head(Tensor({2, 16}), Tensor({2, 32}), p), DimensionError);
}

TEST(SarcNet, FiniteScoresAndBitwiseRepeatableEval) {
  SarcNetParams p = init_params<float>(scaled());
  perturb_running_stats(p, 4);
  std::mt19937_64 rng(4);
  const Tensor img = random_tensor({4, 3, 64, 64}, rng), f = random_tensor({4, 11}, rng);
  const Tensor a = sarcnet_forward(img, f, p, Mode::kEval), b = sarcnet_forward(img, f, p, Mode::kEval);
  EXPECT_EQ(a.shape(), (Shape{4, 1}));
  EXPECT_TRUE(a.all_finite());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(a.at(i)), std::bit_cast<std::uint32_t>(b.at(i)));
  EXPECT_THROW(sarcnet_forward(img, random_tensor({3, 11}, rng), p, Mode::kEval), DimensionError);
}

TEST(SarcNet, EvalIsBatchComposable) {
  SarcNetParams p = init_params<float>(scaled(5));
  perturb_running_stats(p, 5);
  std::mt19937_64 rng(5);
  const Tensor img = random_tensor({5, 3, 64, 64}, rng), f = random_tensor({5, 11}, rng);
  const Tensor batch = sarcnet_forward(img, f, p, Mode::kEval);
  const std::size_t per_img = 3 * 64 * 64;
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor one({1, 3, 64, 64}), fo({1, 11});
    for (std::size_t k = 0; k < per_img; ++k) one.at(k) = img.at(i * per_img + k);
    for (std::size_t k = 0; k < 11; ++k) fo.at(k) = f.at(i * 11 + k);
    EXPECT_NEAR(sarcnet_forward(one, fo, p, Mode::kEval).item(), batch.at(i), 1e-5);
  }
}

TEST(Init, SeededKaimingUniform) {
  const SarcNetParams a = init_params<float>(scaled(7)), b = init_params<float>(scaled(7)),
                      c = init_params<float>(scaled(8));
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_FALSE(bitwise_equal(a, c));
  a.for_each_tensor([](const std::string& name, const Tensor& t, TensorRole role) {
    if (role == TensorRole::kBuffer) return;
    if (t.rank() >= 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.numel() / t.extent(0)));
      for (float v : t.values()) EXPECT_LE(std::abs(v), bound) << name;
    } else if (name.find("gamma") != std::string::npos) {
      for (float v : t.values()) EXPECT_EQ(v, 1.0F) << name;
    } else {
      for (float v : t.values()) EXPECT_EQ(v, 0.0F) << name;
    }
  });
}

TEST(Init, ParameterCountMatchesFormula) {
  for (SarcNetConfig c : {scaled(), SarcNetConfig{}}) {
    for (Protocol pr : {Protocol::kP1, Protocol::kP2}) {
      c.protocol = pr;
      const SarcNetParams p = init_params<float>(c);
      EXPECT_EQ(p.parameter_count(), expected_parameter_count(c));
      std::size_t n = 0;
      for (const auto& np : const_cast<SarcNetParams&>(p).parameters()) n += np.tensor.numel();
      EXPECT_EQ(n, p.parameter_count());
    }
  }
  // Standard ResNet-18 trunk (11,176,512 without its 1000-way classifier) plus our heads.
  SarcNetConfig full;
  const std::size_t trunk = 11176512;
  const std::size_t neck = 512 * 256 + 256 + 256 * 64 + 64 + 64 * 32 + 32;
  const std::size_t branch = 11 * 64 + 64 + 64 * 64 + 64 + 64 * 32 + 32;
  const std::size_t head = 64 * 32 + 32 + 32 * 16 + 16 + 16 * 8 + 8 + 8 + 1;
  EXPECT_EQ(expected_parameter_count(full), trunk + neck + branch + head);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = test::scratch_dir("ckpt");
  Checkpoint ck{init_params<float>(scaled(11)), {}};
  perturb_running_stats(ck.params, 11);
  ck.metadata.set("note", "hello");
  save_checkpoint(ck, dir / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.params.config, ck.params.config);
  EXPECT_TRUE(bitwise_equal(back.params, ck.params));
  EXPECT_EQ(back.metadata.get_string("note", ""), "hello");
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ck));
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const std::string bytes = serialize_checkpoint({init_params<float>(scaled()), {}});
  EXPECT_EQ(bytes.substr(0, 4), "SARC");
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, cut)), CheckpointError) << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(deserialize_checkpoint(bad), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  EXPECT_THROW(load_checkpoint(test::scratch_dir("ckpt_missing") / "none.ckpt"), IoError);
}

TEST(Checkpoint, ScalerMetadataRoundTrip) {
  ScalerParams s{Protocol::kP1, {1, 2, 3, 4, 5}, {0.5, 1, 1, 2, 3}, {0, 0, 0, 0, 1}, {9, 9, 9, 9, 30}, "train"};
  KeyValueConfig kv;
  write_scaler(kv, s);
  const ScalerParams back = read_scaler(KeyValueConfig::parse(kv.to_text()));
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.std, s.std);
  EXPECT_EQ(back.lo, s.lo);
  EXPECT_EQ(back.hi, s.hi);
  EXPECT_EQ(back.protocol, Protocol::kP1);
}

}  // namespace
}  // namespace sarc
