#include "slidesim/raster.hpp"

#include <png.h>
#include <zlib.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "slidesim/error.hpp"

namespace slidesim {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("raster", "cannot open '" + path.string() + "'");
  return f;
}

void check_signature(std::FILE* f, const std::filesystem::path& path) {
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error("raster", "not a PNG file: '" + path.string() + "'");
  }
}

// libpng reports errors through longjmp; these wrappers keep the
// png structs owned by RAII objects on the C++ side.
class PngReader {
 public:
  PngReader() {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw Error("raster", "libpng initialisation failed");
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class PngWriter {
 public:
  PngWriter() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw Error("raster", "libpng initialisation failed");
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

RasterSize read_png_size(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  check_signature(f.get(), path);
  PngReader r;
  if (setjmp(png_jmpbuf(r.png_))) {
    throw Error("raster", "corrupt PNG header: '" + path.string() + "'");
  }
  png_init_io(r.png_, f.get());
  png_set_sig_bytes(r.png_, 8);
  png_read_info(r.png_, r.info_);
  return {static_cast<int>(png_get_image_width(r.png_, r.info_)),
          static_cast<int>(png_get_image_height(r.png_, r.info_))};
}

Raster read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  check_signature(f.get(), path);
  PngReader r;
  Raster image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png_))) {
    throw Error("raster", "PNG decode failed: '" + path.string() + "'");
  }
  png_init_io(r.png_, f.get());
  png_set_sig_bytes(r.png_, 8);
  png_read_info(r.png_, r.info_);

  const png_byte color = png_get_color_type(r.png_, r.info_);
  const png_byte depth = png_get_bit_depth(r.png_, r.info_);
  if (depth == 16) png_set_strip_16(r.png_);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png_);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png_);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(r.png_);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png_);
  if (png_get_valid(r.png_, r.info_, PNG_INFO_tRNS)) png_set_strip_alpha(r.png_);
  png_read_update_info(r.png_, r.info_);

  image.width = static_cast<int>(png_get_image_width(r.png_, r.info_));
  image.height = static_cast<int>(png_get_image_height(r.png_, r.info_));
  if (png_get_rowbytes(r.png_, r.info_) != static_cast<std::size_t>(image.width) * 3) {
    throw Error("raster", "unsupported PNG layout: '" + path.string() + "'");
  }
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * 3);
  rows.resize(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = image.at(0, y);
  png_read_image(r.png_, rows.data());
  png_read_end(r.png_, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw Error("raster", "invalid raster for '" + path.string() + "'");
  }
  FilePtr f = open_file(path, "wb");
  PngWriter w;
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(w.png_))) {
    throw Error("raster", "PNG encode failed: '" + path.string() + "'");
  }
  png_init_io(w.png_, f.get());
  png_set_compression_level(w.png_, 1);
  png_set_compression_strategy(w.png_, Z_HUFFMAN_ONLY);
  png_set_filter(w.png_, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
  png_set_IHDR(w.png_, w.info_, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png_, w.info_);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.at(0, y));
  }
  png_write_image(w.png_, rows.data());
  png_write_end(w.png_, nullptr);
  if (std::fflush(f.get()) != 0) {
    throw Error("raster", "write failed: '" + path.string() + "'");
  }
}

}  // namespace slidesim
