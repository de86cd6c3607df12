#include "sarc/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "sarc/error.hpp"
#include "sarc/image_io.hpp"

namespace sarc {

namespace {

// Rows top to bottom, 3 bits each (left = 4).
const std::map<char, std::array<std::uint8_t, 5>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 5>> g{
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
      {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
      {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}},
      {':', {0, 2, 0, 2, 0}}, {'=', {0, 7, 0, 7, 0}}, {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}},
      {'C', {7, 4, 4, 4, 7}}, {'D', {6, 5, 5, 5, 6}}, {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}},
      {'G', {7, 4, 5, 5, 7}}, {'H', {5, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}}, {'J', {1, 1, 1, 5, 7}},
      {'K', {5, 5, 6, 5, 5}}, {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'N', {6, 5, 5, 5, 5}},
      {'O', {7, 5, 5, 5, 7}}, {'P', {7, 5, 7, 4, 4}}, {'Q', {7, 5, 5, 7, 1}}, {'R', {7, 5, 6, 5, 5}},
      {'S', {7, 4, 7, 1, 7}}, {'T', {7, 2, 2, 2, 2}}, {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}},
      {'W', {5, 5, 7, 7, 5}}, {'X', {5, 5, 2, 5, 5}}, {'Y', {5, 5, 2, 2, 2}}, {'Z', {7, 1, 2, 4, 7}},
  };
  return g;
}

}  // namespace

RgbCanvas::RgbCanvas(std::size_t h, std::size_t w, std::uint8_t fill) : height(h), width(w), rgb(h * w * 3, fill) {}

void RgbCanvas::fill_rect(long y0, long x0, long y1, long x1, std::array<std::uint8_t, 3> color) {
  y0 = std::max(0L, y0);
  x0 = std::max(0L, x0);
  y1 = std::min(static_cast<long>(height), y1);
  x1 = std::min(static_cast<long>(width), x1);
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3;
      std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
}

void RgbCanvas::text(long y, long x, const std::string& s, std::array<std::uint8_t, 3> color, int scale) {
  for (char ch : s) {
    const char up = (ch >= 'a' && ch <= 'z') ? static_cast<char>(ch - 'a' + 'A') : ch;
    const auto it = glyphs().find(up);
    if (it != glyphs().end()) {
      for (long r = 0; r < 5; ++r) {
        for (long c = 0; c < 3; ++c) {
          if (it->second[static_cast<std::size_t>(r)] & (4 >> c)) {
            fill_rect(y + r * scale, x + c * scale, y + (r + 1) * scale, x + (c + 1) * scale, color);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

void RgbCanvas::save(const std::filesystem::path& path) const { write_png_rgb8(path, height, width, rgb); }

RgbCanvas render_histogram(std::span<const std::size_t> counts, const std::string& title) {
  if (counts.empty()) throw DegenerateInputError("histogram: no bins");
  constexpr long kBar = 32, kLeft = 40, kTop = 30, kPlotH = 160;
  const long width = kLeft + kBar * static_cast<long>(counts.size()) + 20;
  RgbCanvas canvas(static_cast<std::size_t>(kTop + kPlotH + 40), static_cast<std::size_t>(width));
  const std::array<std::uint8_t, 3> ink{20, 20, 20}, bar{70, 110, 180};
  canvas.text(8, 8, title, ink, 2);

  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  const long base = kTop + kPlotH;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const long h = static_cast<long>(static_cast<double>(counts[k]) / static_cast<double>(peak) * (kPlotH - 12));
    const long x0 = kLeft + kBar * static_cast<long>(k);
    canvas.fill_rect(base - h, x0 + 2, base, x0 + kBar - 2, bar);
    canvas.text(base - h - 8, x0 + 4, std::to_string(counts[k]), ink);
  }
  canvas.fill_rect(base, kLeft, base + 1, kLeft + kBar * static_cast<long>(counts.size()), ink);
  canvas.fill_rect(kTop, kLeft - 1, base + 1, kLeft, ink);
  canvas.text(kTop, 4, std::to_string(peak), ink);
  for (std::size_t k = 0; k <= counts.size(); ++k) {
    char label[16];
    std::snprintf(label, sizeof label, "%.1f", 0.5 + 0.5 * static_cast<double>(k));
    const long x = kLeft + kBar * static_cast<long>(k);
    canvas.fill_rect(base, x, base + 4, x + 1, ink);
    if (k % 2 == 0) canvas.text(base + 8, x - 5, label, ink);
  }
  canvas.text(base + 24, kLeft + 60, "PREDICTED SCORE", ink);
  return canvas;
}

}  // namespace sarc
