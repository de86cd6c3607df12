#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sarc/error.hpp"
#include "sarc/explain.hpp"
#include "sarc/image_io.hpp"
#include "test_util.hpp"

namespace sarc {
namespace {

using test::random_tensor;

TEST(GradCam, PropertiesOnFiftyRandomInputs) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    SarcNetConfig cfg = SarcNetConfig::scaled();
    cfg.seed = static_cast<std::uint64_t>(i / 10);
    SarcNetParams p = init_params<float>(cfg);
    const Tensor img = random_tensor({1, 3, 64, 64}, rng, -2, 2), f = random_tensor({1, 11}, rng, -2, 2);
    const std::size_t stage = i % 5;  // 0 = default, then each stage explicitly
    const Heatmap h = gradcam(p, img, f, stage);
    ASSERT_EQ(h.height, 64u);
    ASSERT_EQ(h.width, 64u);
    ASSERT_EQ(h.values.size(), 64u * 64u);
    float hi = 0;
    for (float v : h.values) {
      ASSERT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0F);
      EXPECT_LE(v, 1.0F);
      hi = std::max(hi, v);
    }
    EXPECT_TRUE(hi == 1.0F || hi == 0.0F);
    for (const auto& np : p.parameters()) {
      for (float g : np.tensor.grad()) ASSERT_EQ(g, 0.0F) << np.name;
    }
  }
}

TEST(GradCam, ZeroRawMapStaysZero) {
  SarcNetParams p = init_params<float>(SarcNetConfig::scaled());
  for (auto& l : p.head) {
    for (auto& v : l.weight.values()) v = 0;
  }
  std::mt19937_64 rng(2);
  const Heatmap h = gradcam(p, random_tensor({1, 3, 64, 64}, rng), random_tensor({1, 11}, rng));
  for (float v : h.values) EXPECT_EQ(v, 0.0F);
}

TEST(GradCam, DefaultStageIsDeepestWithSevenPixelMap) {
  EXPECT_EQ(default_gradcam_stage(SarcNetConfig{}), 4u);
  EXPECT_EQ(default_gradcam_stage(SarcNetConfig::scaled()), 2u);
  // Cross-check against the real activation sizes, using narrow widths at both resolutions.
  for (std::size_t size : {224u, 64u, 96u}) {
    SarcNetConfig cfg = SarcNetConfig::scaled();
    cfg.input_size = size;
    SarcNetParams p = init_params<float>(cfg);
    const Tensor x({1, 3, size, size});
    std::size_t deepest = 1;
    for (std::size_t s = 1; s <= 4; ++s) {
      if (backbone_stages(x, p, Mode::kEval, 0, s).extent(2) >= 7) deepest = s;
    }
    EXPECT_EQ(default_gradcam_stage(cfg), deepest) << size;
  }
}

TEST(GradCam, BadInputs) {
  SarcNetParams p = init_params<float>(SarcNetConfig::scaled());
  EXPECT_THROW(gradcam(p, Tensor({2, 3, 64, 64}), Tensor({2, 11})), DimensionError);
  EXPECT_THROW(gradcam(p, Tensor({1, 3, 64, 64}), Tensor({1, 11}), 5), ConfigError);
}

TEST(HeatmapNormalize, ScaleInvariantAndGuards) {
  std::vector<float> a{0.0F, 0.5F, 2.0F, 1.0F}, b{0.0F, 1.5F, 6.0F, 3.0F};
  normalize_heatmap(a);
  normalize_heatmap(b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_FLOAT_EQ(a[i], b[i]);
  EXPECT_EQ(a[2], 1.0F);
  std::vector<float> z(5, 0.0F), c(5, 0.3F);
  normalize_heatmap(z);
  normalize_heatmap(c);
  for (float v : z) EXPECT_EQ(v, 0.0F);
  for (float v : c) EXPECT_EQ(v, 1.0F);
}

TEST(HeatmapUpsample, ConstantAndShape) {
  const auto u = upsample_bilinear(std::vector<float>(4, 0.25F), 2, 2, 9, 7);
  ASSERT_EQ(u.size(), 63u);
  for (float v : u) EXPECT_FLOAT_EQ(v, 0.25F);
}

TEST(Overlay, ColormapEndpoints) {
  GrayImage img(8, 8, 0.4F);
  Heatmap zero{8, 8, std::vector<float>(64, 0.0F)}, one{8, 8, std::vector<float>(64, 1.0F)};
  const auto blue = overlay_rgb(img, zero), red = overlay_rgb(img, one);
  EXPECT_EQ(blue[0], 51);   // 0.5 * 0.4
  EXPECT_EQ(blue[1], 51);
  EXPECT_EQ(blue[2], 179);  // 0.5 * 0.4 + 0.5
  EXPECT_EQ(red[0], 179);
  EXPECT_EQ(red[1], 51);
  EXPECT_EQ(red[2], 51);
  Heatmap small{4, 4, std::vector<float>(16, 0.0F)};
  EXPECT_THROW(overlay_rgb(img, small), DimensionError);
}

TEST(Overlay, WrittenPngMatchesInputSize) {
  const auto dir = test::scratch_dir("overlay");
  GrayImage img(12, 20, 0.5F);
  Heatmap h{12, 20, std::vector<float>(240, 0.7F)};
  write_overlay(img, h, dir / "o.png");
  const Raster r = read_raster(dir / "o.png");
  EXPECT_EQ(r.height, 12u);
  EXPECT_EQ(r.width, 20u);
  EXPECT_EQ(r.channels, 3u);
  EXPECT_THROW(write_overlay(img, h, dir / "missing_dir" / "o.png"), IoError);
}

TEST(HeatmapRaw, RoundTripWithHeader) {
  const auto dir = test::scratch_dir("hmap");
  Heatmap h{3, 5, {}};
  for (int i = 0; i < 15; ++i) h.values.push_back(static_cast<float>(i) / 14.0F);
  write_heatmap_raw(h, dir / "h.bin");
  EXPECT_EQ(std::filesystem::file_size(dir / "h.bin"), 16u + 4u * 15u);
  const Heatmap back = read_heatmap_raw(dir / "h.bin");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.values, h.values);
}

}  // namespace
}  // namespace sarc
