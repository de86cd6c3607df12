#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sarc/image.hpp"

namespace sarc {

// Undecoded samples of a PNG or TIFF raster, interleaved by channel.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;

  std::uint16_t sample(std::size_t y, std::size_t x, std::size_t c) const {
    return samples[(y * width + x) * channels + c];
  }
};

// Reads PNG or TIFF, chosen by file signature. Throws IoError naming the path.
Raster read_raster(const std::filesystem::path& path);

// 8/16-bit grayscale mapped linearly to [0,1]; multi-channel files
// contribute only `channel`.
GrayImage load_image(const std::filesystem::path& path, std::size_t channel = 0);
// Nonzero samples are foreground.
CellMask load_mask(const std::filesystem::path& path);
// Raw integer labels of channel 0.
ClassMap load_classmap(const std::filesystem::path& path);

// Quantises [0,1] intensities to 8 bits.
void write_png_gray8(const std::filesystem::path& path, const GrayImage& image);
void write_png_labels(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint8_t>& labels);
// Interleaved RGB, 3 bytes per pixel.
void write_png_rgb8(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& rgb);
void write_png_gray16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint16_t>& samples);

}  // namespace sarc
