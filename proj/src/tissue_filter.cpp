#include "slidesim/tissue_filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "slidesim/error.hpp"

namespace slidesim {

FilterMode parse_filter_mode(const std::string& name) {
  if (name == "bright-fraction") return FilterMode::kBrightFraction;
  if (name == "paper-literal-ratio" || name == "literal-ratio") return FilterMode::kLiteralRatio;
  throw Error("filter", "unknown filter mode '" + name + "'");
}

std::string to_string(FilterMode mode) {
  return mode == FilterMode::kBrightFraction ? "bright-fraction" : "paper-literal-ratio";
}

void FilterConfig::validate() const {
  if (!(kChannelMin < a && a < b && b < kChannelMax)) {
    throw Error("filter", "bin edges must satisfy 0 < a < b < 255 (got a=" + std::to_string(a) +
                              ", b=" + std::to_string(b) + ")");
  }
  if (!(bright_fraction_threshold >= 0.0 && bright_fraction_threshold <= 1.0)) {
    throw Error("filter", "bright fraction threshold must lie in [0, 1]");
  }
  if (!(literal_ratio_constant > 0.0) || !std::isfinite(literal_ratio_constant)) {
    throw Error("filter", "literal ratio constant must be positive");
  }
}

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // Integer form of round(0.299 R + 0.587 G + 0.114 B); weights sum to 1000,
  // so the result never exceeds 255. Ties round half up.
  const int y = 299 * r + 587 * g + 114 * b;
  return static_cast<std::uint8_t>((y + 500) / 1000);
}

std::vector<std::uint8_t> luminance(const Raster& image) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.width) * image.height);
  const std::uint8_t* p = image.pixels.data();
  for (auto& v : out) {
    v = luminance(p[0], p[1], p[2]);
    p += 3;
  }
  return out;
}

HistogramTriple histogram3(const Raster& image, const FilterConfig& cfg) {
  std::array<std::int64_t, 256> counts{};
  const std::uint8_t* p = image.pixels.data();
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < n; ++i, p += 3) ++counts[luminance(p[0], p[1], p[2])];

  HistogramTriple h;
  for (int v = 0; v < 256; ++v) {
    if (v <= cfg.a) {
      h.dark += counts[v];
    } else if (v <= cfg.b) {
      h.mid += counts[v];
    } else {
      h.bright += counts[v];
    }
  }
  return h;
}

bool is_background(const HistogramTriple& hist, const FilterConfig& cfg) {
  if (cfg.mode == FilterMode::kBrightFraction) {
    const std::int64_t total = hist.total();
    if (total == 0) return true;
    return static_cast<double>(hist.bright) / static_cast<double>(total) >
           cfg.bright_fraction_threshold;
  }
  const double dark = static_cast<double>(std::max<std::int64_t>(hist.dark, 1));
  return static_cast<double>(hist.bright) / dark < cfg.literal_ratio_constant;
}

FilterResult filter_patches(const Raster& level, const std::vector<PatchRef>& patches,
                            const FilterConfig& cfg) {
  cfg.validate();
  FilterResult result;
  for (const auto& ref : patches) {
    if (is_background(read_patch(level, ref), cfg)) {
      ++result.dropped_count;
    } else {
      result.kept.push_back(ref);
    }
  }
  return result;
}

FilterResult filter_patches(const SlideRecord& slide, Magnification mag, const FilterConfig& cfg,
                            int patch_size) {
  auto patches = enumerate_patches(slide, mag, patch_size);
  if (patches.empty()) return {};
  return filter_patches(load_level(slide, mag), patches, cfg);
}

}  // namespace slidesim
