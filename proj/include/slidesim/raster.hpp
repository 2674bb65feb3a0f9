#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace slidesim {

/// Interleaved 8-bit RGB image, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

struct RasterSize {
  int width = 0;
  int height = 0;
};

/// Decodes any PNG to 8-bit RGB (alpha dropped, gray expanded, 16-bit stripped).
Raster read_png(const std::filesystem::path& path);
/// Reads only the header.
RasterSize read_png_size(const std::filesystem::path& path);
/// Writes 8-bit RGB with fixed encoder settings, so output bytes depend only on pixels.
void write_png(const std::filesystem::path& path, const Raster& image);

}  // namespace slidesim
