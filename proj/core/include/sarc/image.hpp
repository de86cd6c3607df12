#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sarc/tensor.hpp"

namespace sarc {

inline constexpr std::size_t kMinImageSide = 8;
inline constexpr std::size_t kMinMaskPixels = 16;

// Single-channel fluorescence image, intensities in [0,1], row-major.
class GrayImage {
 public:
  GrayImage(std::size_t height, std::size_t width, std::vector<float> pixels);
  GrayImage(std::size_t height, std::size_t width, float fill = 0.0F);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  float at(std::size_t y, std::size_t x) const { return pixels_[y * width_ + x]; }
  float& at(std::size_t y, std::size_t x) { return pixels_[y * width_ + x]; }
  const std::vector<float>& pixels() const { return pixels_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<float> pixels_;
};

// Binary single-cell membership. Construction rejects masks with fewer than
// 16 foreground pixels.
class CellMask {
 public:
  CellMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> membership);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool contains(std::size_t y, std::size_t x) const { return membership_[y * width_ + x] != 0; }
  const std::vector<std::uint8_t>& membership() const { return membership_; }
  std::size_t foreground_count() const { return count_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint8_t> membership_;
  std::size_t count_ = 0;
};

// Per-pixel organisation labels; values are validated by their consumers.
struct ClassMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;
};

// Throws DimensionError when the mask does not match the image.
void require_same_size(const GrayImage& image, const CellMask& mask);

// Bilinear resampling with half-pixel centres (align_corners = false).
GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h, std::size_t out_w);

// Zero-pads the shorter side so the image becomes square, centred.
GrayImage pad_to_square(const GrayImage& image);

inline constexpr double kInputStdFloor = 1e-6;

// Per-image z-score, replicated into 3 identical channels: [3,H,W].
Tensor to_model_input(const GrayImage& image);

enum class ResizeMode { kStretch, kPadToSquare };

// Resize (optionally after square padding) then normalise.
Tensor prepare_model_input(const GrayImage& image, std::size_t input_size,
                           ResizeMode mode = ResizeMode::kStretch);

}  // namespace sarc
