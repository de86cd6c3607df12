#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sarc/image.hpp"
#include "sarc/model.hpp"

namespace sarc {

struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;  // row-major, each in [0,1]

  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// Grad-CAM of the raw regression score with respect to the final residual
// stage: channel weights are spatial means of the gradient, the map is
// ReLU(sum_k w_k A_k), bilinearly upsampled to the input size and min-max
// normalised. An all-zero raw map stays zero. image [1,3,S,S], features [1,F].
// Leaves the parameter gradients zeroed.
// `stage` (1-based) picks the residual stage whose output is explained; 0
// picks default_gradcam_stage().
Heatmap gradcam(SarcNetParams& params, const Tensor& image, const Tensor& features, std::size_t stage = 0);

// Deepest residual stage whose output is at least 7x7: the last stage for a
// 224 input, stage 2 for 64.
std::size_t default_gradcam_stage(const SarcNetConfig& config);

// Bilinear (half-pixel centres) upsampling of a row-major map.
std::vector<float> upsample_bilinear(const std::vector<float>& src, std::size_t sh, std::size_t sw,
                                     std::size_t dh, std::size_t dw);

// Min-max to [0,1]; all-zero stays zero, a constant positive map becomes ones.
void normalize_heatmap(std::vector<float>& values);

Heatmap resize_heatmap(const Heatmap& h, std::size_t height, std::size_t width);

// 50% grayscale + 50% colour, colour(v) = (v, 0, 1 - v): blue at 0, red at 1.
std::vector<std::uint8_t> overlay_rgb(const GrayImage& image, const Heatmap& heatmap);
void write_overlay(const GrayImage& image, const Heatmap& heatmap, const std::filesystem::path& path);

// "HMAP", u32 height, u32 width, u32 reserved (0), then f32 values; little-endian.
void write_heatmap_raw(const Heatmap& heatmap, const std::filesystem::path& path);
Heatmap read_heatmap_raw(const std::filesystem::path& path);

}  // namespace sarc
