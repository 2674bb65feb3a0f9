#include "slidesim/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>

#include "slidesim/error.hpp"
#include "slidesim/random.hpp"
#include "slidesim/slide_io.hpp"

namespace slidesim {
namespace fs = std::filesystem;
namespace {

struct Rgb {
  int r, g, b;
};

// Stain-like base colours, all with luminance well inside the tissue bins.
constexpr std::array<Rgb, 8> kPalette{{
    {190, 90, 150},
    {90, 70, 160},
    {200, 140, 100},
    {110, 150, 120},
    {150, 60, 70},
    {80, 120, 170},
    {170, 160, 80},
    {120, 100, 120},
}};

struct ClassStyle {
  Rgb base;
  int period;  // texture period in pixels
  int dx, dy;  // texture direction
  int amplitude;
};

ClassStyle class_style(int c) {
  ClassStyle s;
  if (c < static_cast<int>(kPalette.size())) {
    s.base = kPalette[c];
  } else {
    SplitMix64 g(0xC01005ULL + static_cast<std::uint64_t>(c));
    s.base = {60 + static_cast<int>(g.below(140)), 60 + static_cast<int>(g.below(100)),
              60 + static_cast<int>(g.below(120))};
  }
  static constexpr std::array<std::array<int, 2>, 4> kDirs{{{1, 0}, {0, 1}, {1, 1}, {1, -1}}};
  s.dx = kDirs[c % 4][0];
  s.dy = kDirs[c % 4][1];
  s.period = 10 + 7 * ((c / 4) % 4) + 3 * (c % 3);
  s.amplitude = 30;
  return s;
}

// Triangle wave in [-256, 256] with the given integer period; integer-only
// so the rendered bytes do not depend on the math library.
int triangle(int phase, int period) {
  int p = phase % period;
  if (p < 0) p += period;
  return 256 - (1024 * std::abs(2 * p - period)) / (2 * period);
}

struct Ellipse {
  double cx, cy, rx, ry;
};

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

void CorpusSpec::validate() const {
  if (classes.empty()) throw Error("synth", "corpus spec needs at least one class");
  if (classes.size() < 2) throw Error("synth", "corpus spec needs at least 2 classes");
  if (slides_per_class < 2) throw Error("synth", "corpus spec needs at least 2 slides per class");
  if (levels.empty()) throw Error("synth", "corpus spec needs at least one level");
  std::set<std::string> names(classes.begin(), classes.end());
  if (names.size() != classes.size()) throw Error("synth", "class names must be unique");
  std::set<Magnification> mags;
  for (const auto& l : levels) {
    if (l.width <= 0 || l.height <= 0) throw Error("synth", "level sizes must be positive");
    if (!mags.insert(l.magnification).second) throw Error("synth", "duplicate level magnification");
  }
  if (noise < 0 || noise > 64) throw Error("synth", "noise must lie in [0, 64]");
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& doc) {
  CorpusSpec spec;
  try {
    if (doc.contains("classes")) {
      spec.classes = doc.at("classes").get<std::vector<std::string>>();
    } else {
      const int n = doc.at("num_classes").get<int>();
      for (int c = 0; c < n; ++c) spec.classes.push_back("class" + std::to_string(c));
    }
    spec.slides_per_class = doc.at("slides_per_class").get<int>();
    for (const auto& l : doc.at("levels")) {
      spec.levels.push_back({Magnification::parse(l.at("magnification").get<std::string>()),
                             l.at("width").get<int>(), l.at("height").get<int>()});
    }
    spec.noise = doc.value("noise", spec.noise);
  } catch (const nlohmann::json::exception& e) {
    throw Error("synth", std::string("malformed corpus spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

CorpusSpec load_corpus_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("synth", "cannot open corpus spec '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("synth", "malformed corpus spec '" + path.string() + "': " + e.what());
  }
  return corpus_spec_from_json(doc);
}

Raster render_synthetic_level(int class_index, std::uint64_t slide_seed, int width, int height,
                              int noise) {
  const ClassStyle style = class_style(class_index);
  SplitMix64 layout(slide_seed);

  // Two or three tissue blobs around the centre.
  std::vector<Ellipse> blobs;
  const int n_blobs = 2 + static_cast<int>(layout.below(2));
  for (int i = 0; i < n_blobs; ++i) {
    blobs.push_back({0.3 + 0.4 * layout.uniform(), 0.3 + 0.4 * layout.uniform(),
                     0.18 + 0.17 * layout.uniform(), 0.18 + 0.17 * layout.uniform()});
  }
  const int jitter_r = static_cast<int>(layout.below(17)) - 8;
  const int jitter_g = static_cast<int>(layout.below(17)) - 8;
  const int jitter_b = static_cast<int>(layout.below(17)) - 8;
  const int phase_offset = static_cast<int>(layout.below(static_cast<std::uint64_t>(style.period)));

  Raster image(width, height);
  SplitMix64 pixel_noise(mix_seed(slide_seed, static_cast<std::uint64_t>(width) * 131 + height));
  for (int y = 0; y < height; ++y) {
    const double v = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      bool tissue = false;
      for (const auto& e : blobs) {
        const double du = (u - e.cx) / e.rx;
        const double dv = (v - e.cy) / e.ry;
        if (du * du + dv * dv <= 1.0) {
          tissue = true;
          break;
        }
      }
      std::uint8_t* p = image.at(x, y);
      const std::uint64_t bits = pixel_noise.next();
      const int n0 = noise ? static_cast<int>(bits % (2 * noise + 1)) - noise : 0;
      if (!tissue) {
        // Near-white glass with faint noise.
        const int w = 248 + n0 / 4;
        p[0] = clamp8(w);
        p[1] = clamp8(w);
        p[2] = clamp8(w);
        continue;
      }
      const int t = triangle(x * style.dx + y * style.dy + phase_offset, style.period);
      const int shade = style.amplitude * t / 256;
      const int n1 = noise ? static_cast<int>((bits >> 20) % (2 * noise + 1)) - noise : 0;
      const int n2 = noise ? static_cast<int>((bits >> 40) % (2 * noise + 1)) - noise : 0;
      p[0] = clamp8(style.base.r + jitter_r + shade + n0);
      p[1] = clamp8(style.base.g + jitter_g + shade + n1);
      p[2] = clamp8(style.base.b + jitter_b + shade + n2);
    }
  }
  return image;
}

fs::path generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                   const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "slides", ec);
  if (ec) throw Error("synth", "cannot create '" + out_dir.string() + "': " + ec.message());

  std::vector<SlideRecord> slides;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (int s = 0; s < spec.slides_per_class; ++s) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "-%03d", s);
      SlideRecord slide;
      slide.slide_id = spec.classes[c] + suffix;
      slide.label = spec.classes[c];
      slide.pyramid_dir = out_dir / "slides" / slide.slide_id;
      fs::create_directories(slide.pyramid_dir, ec);
      if (ec) throw Error("synth", "cannot create '" + slide.pyramid_dir.string() + "'");

      const std::uint64_t slide_seed = mix_seed(seed, c * 1000003ULL + static_cast<std::uint64_t>(s));
      for (const auto& level : spec.levels) {
        LevelInfo info{level.magnification, level.width, level.height,
                       slide.pyramid_dir / (level.magnification.label() + ".png")};
        write_png(info.image_path, render_synthetic_level(static_cast<int>(c), slide_seed,
                                                          level.width, level.height, spec.noise));
        slide.levels.push_back(std::move(info));
      }
      write_levels(slide.pyramid_dir, slide.levels);
      slides.push_back(std::move(slide));
    }
  }
  const fs::path manifest = out_dir / "manifest.csv";
  write_manifest(manifest, slides);
  return manifest;
}

}  // namespace slidesim
