#include "sarc/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sarc/error.hpp"
#include "sarc/image_io.hpp"

namespace sarc {
namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::vector<float> upsample_bilinear(const std::vector<float>& src, std::size_t sh, std::size_t sw,
                                     std::size_t dh, std::size_t dw) {
  if (src.size() != sh * sw || sh == 0 || sw == 0 || dh == 0 || dw == 0) {
    throw DimensionError("upsample_bilinear: bad sizes");
  }
  std::vector<float> out(dh * dw);
  const double sy = static_cast<double>(sh) / static_cast<double>(dh);
  const double sx = static_cast<double>(sw) / static_cast<double>(dw);
  for (std::size_t y = 0; y < dh; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dw; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1 - wx) * src[y0 * sw + x0] + wx * src[y0 * sw + x1];
      const double bottom = (1 - wx) * src[y1 * sw + x0] + wx * src[y1 * sw + x1];
      out[y * dw + x] = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

void normalize_heatmap(std::vector<float>& values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const float lo = *lo_it, hi = *hi_it;
  if (hi <= 0.0F) {
    std::fill(values.begin(), values.end(), 0.0F);
  } else if (hi == lo) {
    std::fill(values.begin(), values.end(), 1.0F);
  } else {
    for (auto& v : values) v = std::clamp((v - lo) / (hi - lo), 0.0F, 1.0F);
  }
}

std::size_t default_gradcam_stage(const SarcNetConfig& config) {
  // Stem conv and max pool halve twice; stages 2-4 halve once each (ceil).
  std::size_t side = config.input_size;
  side = (side + 1) / 2;
  side = (side + 1) / 2;
  std::size_t best = 1;
  for (std::size_t stage = 2; stage <= 4; ++stage) {
    side = (side + 1) / 2;
    if (side >= 7) best = stage;
  }
  return best;
}

Heatmap gradcam(SarcNetParams& params, const Tensor& image, const Tensor& features, std::size_t stage) {
  if (image.rank() != 4 || image.extent(0) != 1) {
    throw DimensionError("gradcam expects one image [1,3,S,S], got " + shape_str(image.shape()));
  }
  const std::size_t stages = params.backbone.stages.size();
  if (stage == 0) stage = default_gradcam_stage(params.config);
  if (stage > stages) {
    throw ConfigError("gradcam stage must be in 1.." + std::to_string(stages) + ", got " + std::to_string(stage));
  }
  const Tensor target = backbone_stages(image, params, Mode::kEval, 0, stage);
  Tensor activations = target.detach();
  activations.set_requires_grad(true);
  const Tensor trunk = backbone_stages(activations, params, Mode::kEval, stage, stages);
  const Tensor score = fuse_and_head(backbone_neck(trunk, params), feature_branch_forward(features, params), params);
  score.backward();

  const std::size_t channels = activations.extent(1), h = activations.extent(2), w = activations.extent(3);
  const std::size_t plane = h * w;
  const auto a = activations.values();
  const auto g = activations.grad();
  std::vector<double> raw(plane, 0.0);
  for (std::size_t k = 0; k < channels; ++k) {
    double weight = 0;
    for (std::size_t i = 0; i < plane; ++i) weight += g[k * plane + i];
    weight /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) raw[i] += weight * a[k * plane + i];
  }
  params.zero_grad();

  std::vector<float> relu_map(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    if (!std::isfinite(raw[i])) throw NumericError("gradcam: non-finite activation map");
    relu_map[i] = static_cast<float>(std::max(0.0, raw[i]));
  }
  Heatmap out{image.extent(2), image.extent(3), {}};
  out.values = upsample_bilinear(relu_map, h, w, out.height, out.width);
  normalize_heatmap(out.values);
  return out;
}

Heatmap resize_heatmap(const Heatmap& h, std::size_t height, std::size_t width) {
  Heatmap out{height, width, upsample_bilinear(h.values, h.height, h.width, height, width)};
  for (auto& v : out.values) v = std::clamp(v, 0.0F, 1.0F);
  return out;
}

std::vector<std::uint8_t> overlay_rgb(const GrayImage& image, const Heatmap& heatmap) {
  if (image.height() != heatmap.height || image.width() != heatmap.width) {
    throw DimensionError("overlay: image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " vs heatmap " + std::to_string(heatmap.height) + "x" + std::to_string(heatmap.width));
  }
  std::vector<std::uint8_t> rgb(image.size() * 3);
  auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double gray = image.pixels()[i];
    const double v = std::clamp(static_cast<double>(heatmap.values[i]), 0.0, 1.0);
    rgb[3 * i + 0] = to8(0.5 * gray + 0.5 * v);
    rgb[3 * i + 1] = to8(0.5 * gray);
    rgb[3 * i + 2] = to8(0.5 * gray + 0.5 * (1 - v));
  }
  return rgb;
}

void write_overlay(const GrayImage& image, const Heatmap& heatmap, const fs::path& path) {
  write_png_rgb8(path, image.height(), image.width(), overlay_rgb(image, heatmap));
}

void write_heatmap_raw(const Heatmap& heatmap, const fs::path& path) {
  std::string bytes = "HMAP";
  put_u32(bytes, static_cast<std::uint32_t>(heatmap.height));
  put_u32(bytes, static_cast<std::uint32_t>(heatmap.width));
  put_u32(bytes, 0);
  for (float v : heatmap.values) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("cannot write heatmap " + path.string());
  }
}

Heatmap read_heatmap_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open heatmap " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 4, "HMAP") != 0) throw ParseError(path.string() + ": not a HMAP file");
  Heatmap h{get_u32(bytes, 4), get_u32(bytes, 8), {}};
  if (bytes.size() != 16 + 4 * h.height * h.width) throw ParseError(path.string() + ": truncated HMAP data");
  h.values.resize(h.height * h.width);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  return h;
}

}  // namespace sarc
