#include "sarc/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sarc/error.hpp"

namespace sarc {

namespace {
void check_side(std::size_t height, std::size_t width) {
  if (height < kMinImageSide || width < kMinImageSide) {
    throw DimensionError("image must be at least 8x8, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
}
}  // namespace

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  check_side(height, width);
  if (pixels_.size() != height * width) {
    throw DimensionError("image pixel count " + std::to_string(pixels_.size()) +
                         " does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  for (float& v : pixels_) {
    if (!std::isfinite(v)) throw NumericError("image contains a non-finite intensity");
    v = std::clamp(v, 0.0F, 1.0F);
  }
}

GrayImage::GrayImage(std::size_t height, std::size_t width, float fill)
    : GrayImage(height, width, std::vector<float>(height * width, fill)) {}

CellMask::CellMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> membership)
    : height_(height), width_(width), membership_(std::move(membership)) {
  if (membership_.size() != height * width) {
    throw DimensionError("mask pixel count does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  for (auto& m : membership_) {
    m = m ? 1 : 0;
    count_ += m;
  }
  if (count_ < kMinMaskPixels) {
    throw DegenerateInputError("cell mask has " + std::to_string(count_) +
                               " foreground pixels; at least 16 are required");
  }
}

void require_same_size(const GrayImage& image, const CellMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw DimensionError("mask " + std::to_string(mask.height()) + "x" +
                         std::to_string(mask.width()) + " does not match image " +
                         std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h, std::size_t out_w) {
  check_side(out_h, out_w);
  const std::size_t in_h = image.height(), in_w = image.width();
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t out, std::size_t in, double scale) {
    std::vector<Tap> t(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(out_h, in_h, sy);
  const auto tx = taps(out_w, in_w, sx);

  std::vector<float> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& a = ty[y];
      const auto& b = tx[x];
      const double top = image.at(a.lo, b.lo) * (1.0 - b.frac) + image.at(a.lo, b.hi) * b.frac;
      const double bot = image.at(a.hi, b.lo) * (1.0 - b.frac) + image.at(a.hi, b.hi) * b.frac;
      out[y * out_w + x] = static_cast<float>(top * (1.0 - a.frac) + bot * a.frac);
    }
  }
  return GrayImage(out_h, out_w, std::move(out));
}

GrayImage pad_to_square(const GrayImage& image) {
  const std::size_t side = std::max(image.height(), image.width());
  GrayImage out(side, side, 0.0F);
  const std::size_t oy = (side - image.height()) / 2;
  const std::size_t ox = (side - image.width()) / 2;
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) out.at(y + oy, x + ox) = image.at(y, x);
  }
  return out;
}

Tensor to_model_input(const GrayImage& image) {
  const auto& px = image.pixels();
  const double n = static_cast<double>(px.size());
  double mean = 0;
  for (float v : px) mean += v;
  mean /= n;
  double var = 0;
  for (float v : px) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / n), kInputStdFloor);

  const std::size_t plane = px.size();
  std::vector<float> out(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const auto z = static_cast<float>((px[i] - mean) / sd);
    out[i] = z;
    out[plane + i] = z;
    out[2 * plane + i] = z;
  }
  return Tensor(Shape{3, image.height(), image.width()}, std::move(out));
}

Tensor prepare_model_input(const GrayImage& image, std::size_t input_size, ResizeMode mode) {
  const GrayImage& base = image;
  if (mode == ResizeMode::kPadToSquare) {
    return to_model_input(resize_bilinear(pad_to_square(base), input_size, input_size));
  }
  return to_model_input(resize_bilinear(base, input_size, input_size));
}

}  // namespace sarc
