#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slidesim/magnification.hpp"
#include "slidesim/raster.hpp"

namespace slidesim {

inline constexpr int kDefaultPatchSize = 224;

struct LevelInfo {
  Magnification magnification;
  int width = 0;
  int height = 0;
  std::filesystem::path image_path;  // absolute or relative to the working directory
};

/// One whole-slide image: identity, diagnosis label and its pyramid levels.
struct SlideRecord {
  std::string slide_id;
  std::string label;
  std::filesystem::path pyramid_dir;
  std::vector<LevelInfo> levels;

  /// nullptr when the slide has no level at `mag`.
  const LevelInfo* level(Magnification mag) const;
};

struct PixelOrigin {
  int x = 0;
  int y = 0;
  bool operator==(const PixelOrigin&) const = default;
};

/// Position of one non-overlapping patch in a level's patch grid.
struct PatchRef {
  std::string slide_id;
  Magnification magnification;
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  int patch_size = kDefaultPatchSize;

  PixelOrigin pixel_origin() const {
    return {static_cast<int>(col) * patch_size, static_cast<int>(row) * patch_size};
  }
  bool operator==(const PatchRef&) const = default;
};

/// A patch_size x patch_size RGB block copied out of a level image.
struct PatchPixels {
  PatchRef ref;
  Raster data;
};

/// Reads the slide manifest (CSV `slide_id,label,pyramid_dir`). Pyramid
/// directories are resolved relative to the manifest's directory and their
/// `levels.json` is loaded and checked against the level images on disk.
std::vector<SlideRecord> load_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<SlideRecord>& slides);

/// Parses `levels.json` inside `pyramid_dir`.
std::vector<LevelInfo> load_levels(const std::filesystem::path& pyramid_dir);
void write_levels(const std::filesystem::path& pyramid_dir, const std::vector<LevelInfo>& levels);

/// Number of full patches in a height x width level: floor(h/s) * floor(w/s).
constexpr std::int64_t patch_count(std::int64_t height, std::int64_t width, std::int64_t patch_size) {
  return (height / patch_size) * (width / patch_size);
}

/// Row-major grid of full patches at `mag`; partial edge patches are dropped.
std::vector<PatchRef> enumerate_patches(const SlideRecord& slide, Magnification mag,
                                        int patch_size = kDefaultPatchSize);

/// Decodes the level image for `mag` (validated against the recorded size).
Raster load_level(const SlideRecord& slide, Magnification mag);

/// Copies the block for `ref` out of an already-decoded level.
PatchPixels read_patch(const Raster& level, const PatchRef& ref);
/// Convenience overload that decodes the level first.
PatchPixels read_patch(const SlideRecord& slide, const PatchRef& ref);

}  // namespace slidesim
