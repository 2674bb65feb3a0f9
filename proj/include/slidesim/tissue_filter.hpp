#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slidesim/slide_io.hpp"

namespace slidesim {

inline constexpr int kChannelMin = 0;
inline constexpr int kChannelMax = 255;

enum class FilterMode {
  /// Background iff bright / total > bright_fraction_threshold.
  kBrightFraction,
  /// Background iff bright / max(dark, 1) < literal_ratio_constant
  /// (third-to-first bin ratio rule, taken literally).
  kLiteralRatio,
};

FilterMode parse_filter_mode(const std::string& name);
std::string to_string(FilterMode mode);

struct FilterConfig {
  int a = 85;
  int b = 170;
  double bright_fraction_threshold = 0.8;
  FilterMode mode = FilterMode::kBrightFraction;
  double literal_ratio_constant = 1.0;

  /// Throws unless c_min < a < b < c_max, threshold in [0,1], constant > 0.
  void validate() const;
};

/// Pixel counts in [c_min, a], (a, b] and (b, c_max].
struct HistogramTriple {
  std::int64_t dark = 0;
  std::int64_t mid = 0;
  std::int64_t bright = 0;

  std::int64_t total() const { return dark + mid + bright; }
  bool operator==(const HistogramTriple&) const = default;
};

/// round(0.299 R + 0.587 G + 0.114 B) per pixel, row-major.
std::vector<std::uint8_t> luminance(const Raster& image);
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

HistogramTriple histogram3(const Raster& image, const FilterConfig& cfg);
inline HistogramTriple histogram3(const PatchPixels& patch, const FilterConfig& cfg) {
  return histogram3(patch.data, cfg);
}

bool is_background(const HistogramTriple& hist, const FilterConfig& cfg);
inline bool is_background(const PatchPixels& patch, const FilterConfig& cfg) {
  return is_background(histogram3(patch, cfg), cfg);
}

struct FilterResult {
  std::vector<PatchRef> kept;
  std::int64_t dropped_count = 0;
};

/// Keeps the tissue patches of the enumeration, preserving its order.
FilterResult filter_patches(const Raster& level, const std::vector<PatchRef>& patches,
                            const FilterConfig& cfg);
FilterResult filter_patches(const SlideRecord& slide, Magnification mag, const FilterConfig& cfg,
                            int patch_size = kDefaultPatchSize);

}  // namespace slidesim
