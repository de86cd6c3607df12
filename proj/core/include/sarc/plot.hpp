#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sarc {

struct RgbCanvas {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved

  RgbCanvas(std::size_t h, std::size_t w, std::uint8_t fill = 255);
  void fill_rect(long y0, long x0, long y1, long x1, std::array<std::uint8_t, 3> color);
  // 3x5 pixel font; digits, '.', '-', ':', space and upper-case letters.
  void text(long y, long x, const std::string& s, std::array<std::uint8_t, 3> color, int scale = 1);
  void save(const std::filesystem::path& path) const;
};

// Bar chart of bin counts with a labelled score axis from 0.5 to 5.5.
RgbCanvas render_histogram(std::span<const std::size_t> counts, const std::string& title);

}  // namespace sarc
