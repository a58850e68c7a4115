#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace onebev {

/// Interleaved 8-bit raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int row, int col, int ch = 0) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  std::uint8_t at(int row, int col, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  bool operator==(const Image&) const = default;
};

/// Reads a PNG as 8-bit RGB; grayscale and alpha inputs are converted.
Image read_png_rgb(const std::filesystem::path& path);

/// Reads a single-channel 8-bit PNG without any color conversion. Color PNGs
/// are rejected.
Image read_png_gray(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace onebev
