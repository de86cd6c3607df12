#include "sarc/image_io.hpp"

#include <cmath>
#include <png.h>
#include <tiffio.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "sarc/error.hpp"

namespace sarc {
namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw IoError(what + ": " + path.string());
}

Raster read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) io_fail(path, "cannot open image");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) io_fail(path, "libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    io_fail(path, "libpng initialisation failed");
  }
  Raster r;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "corrupt PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_swap(png);  // host order on little-endian hosts
  png_read_update_info(png, info);

  r.height = png_get_image_height(png, info);
  r.width = png_get_image_width(png, info);
  r.channels = png_get_channels(png, info);
  r.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * r.height);
  rows.resize(r.height);
  for (std::size_t y = 0; y < r.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = r.height * r.width * r.channels;
  r.samples.resize(n);
  if (r.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      r.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) r.samples[i] = buffer[i];
  }
  return r;
}

Raster read_tiff(const fs::path& path) {
  TIFFSetWarningHandler(nullptr);
  std::unique_ptr<TIFF, void (*)(TIFF*)> tif(TIFFOpen(path.c_str(), "r"), TIFFClose);
  if (!tif) io_fail(path, "cannot open TIFF");
  std::uint32_t w = 0, h = 0;
  std::uint16_t spp = 1, bps = 8, planar = PLANARCONFIG_CONTIG, format = SAMPLEFORMAT_UINT;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  if ((bps != 8 && bps != 16) || format != SAMPLEFORMAT_UINT) {
    io_fail(path, "unsupported TIFF sample layout (need 8/16-bit unsigned)");
  }
  Raster r;
  r.height = h;
  r.width = w;
  r.channels = spp;
  r.bit_depth = bps;
  r.samples.resize(std::size_t{w} * h * spp);
  const tmsize_t scan = TIFFScanlineSize(tif.get());
  std::vector<std::uint8_t> line(static_cast<std::size_t>(scan));
  const std::size_t bytes = bps / 8;
  auto decode = [&](std::size_t i) -> std::uint16_t {
    if (bytes == 1) return line[i];
    std::uint16_t v;
    std::memcpy(&v, line.data() + 2 * i, 2);
    return v;
  };
  if (planar == PLANARCONFIG_CONTIG) {
    for (std::uint32_t y = 0; y < h; ++y) {
      if (TIFFReadScanline(tif.get(), line.data(), y, 0) < 0) io_fail(path, "corrupt TIFF");
      for (std::size_t i = 0; i < std::size_t{w} * spp; ++i) {
        r.samples[y * std::size_t{w} * spp + i] = decode(i);
      }
    }
  } else {
    for (std::uint16_t c = 0; c < spp; ++c) {
      for (std::uint32_t y = 0; y < h; ++y) {
        if (TIFFReadScanline(tif.get(), line.data(), y, c) < 0) io_fail(path, "corrupt TIFF");
        for (std::uint32_t x = 0; x < w; ++x) r.samples[(y * std::size_t{w} + x) * spp + c] = decode(x);
      }
    }
  }
  return r;
}

void write_png(const fs::path& path, std::size_t height, std::size_t width, int color_type,
               int depth, std::size_t bytes_per_pixel, const std::uint8_t* data) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) io_fail(path, "cannot write PNG");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "failed writing PNG");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  const std::size_t stride = width * bytes_per_pixel;
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Raster read_raster(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open image");
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  if (in.gcount() < 4) io_fail(path, "file too short to be an image");
  in.close();
  if (in.gcount() == 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return read_png(path);
  const bool tiff_le = sig[0] == 'I' && sig[1] == 'I' && sig[2] == 42 && sig[3] == 0;
  const bool tiff_be = sig[0] == 'M' && sig[1] == 'M' && sig[2] == 0 && sig[3] == 42;
  if (tiff_le || tiff_be) return read_tiff(path);
  io_fail(path, "unsupported image format (expected PNG or TIFF)");
}

GrayImage load_image(const fs::path& path, std::size_t channel) {
  const Raster r = read_raster(path);
  if (channel >= r.channels) {
    io_fail(path, "requested channel " + std::to_string(channel) + " but image has " +
                      std::to_string(r.channels));
  }
  const float scale = r.bit_depth == 16 ? 1.0F / 65535.0F : 1.0F / 255.0F;
  std::vector<float> px(r.height * r.width);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      px[y * r.width + x] = static_cast<float>(r.sample(y, x, channel)) * scale;
    }
  }
  return GrayImage(r.height, r.width, std::move(px));
}

CellMask load_mask(const fs::path& path) {
  const Raster r = read_raster(path);
  std::vector<std::uint8_t> m(r.height * r.width);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = r.samples[i * r.channels] != 0;
  return CellMask(r.height, r.width, std::move(m));
}

ClassMap load_classmap(const fs::path& path) {
  const Raster r = read_raster(path);
  ClassMap cm{r.height, r.width, std::vector<std::uint8_t>(r.height * r.width)};
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    const auto v = r.samples[i * r.channels];
    cm.labels[i] = v > 255 ? 255 : static_cast<std::uint8_t>(v);
  }
  return cm;
}

void write_png_gray8(const fs::path& path, const GrayImage& image) {
  std::vector<std::uint8_t> data(image.size());
  const auto& px = image.pixels();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<std::uint8_t>(std::lround(px[i] * 255.0F));
  }
  write_png(path, image.height(), image.width(), PNG_COLOR_TYPE_GRAY, 8, 1, data.data());
}

void write_png_labels(const fs::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint8_t>& labels) {
  if (labels.size() != height * width) throw DimensionError("label buffer size mismatch");
  write_png(path, height, width, PNG_COLOR_TYPE_GRAY, 8, 1, labels.data());
}

void write_png_rgb8(const fs::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != 3 * height * width) throw DimensionError("RGB buffer size mismatch");
  write_png(path, height, width, PNG_COLOR_TYPE_RGB, 8, 3, rgb.data());
}

void write_png_gray16(const fs::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint16_t>& samples) {
  if (samples.size() != height * width) throw DimensionError("sample buffer size mismatch");
  write_png(path, height, width, PNG_COLOR_TYPE_GRAY, 16, 2,
            reinterpret_cast<const std::uint8_t*>(samples.data()));
}

}  // namespace sarc
