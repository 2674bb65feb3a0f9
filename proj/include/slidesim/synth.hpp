#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidesim/magnification.hpp"
#include "slidesim/raster.hpp"

namespace slidesim {

struct SynthLevel {
  Magnification magnification;
  int width = 0;
  int height = 0;
};

/// Description of a synthetic corpus: every class gets its own stain colour
/// and texture, drawn as tissue blobs on a white background.
struct CorpusSpec {
  std::vector<std::string> classes;
  int slides_per_class = 0;
  std::vector<SynthLevel> levels;
  /// Noise amplitude (0-255 scale) added per pixel.
  int noise = 12;

  void validate() const;
};

/// Accepts `classes` (names) or `num_classes`, `slides_per_class`, `levels`
/// (`[{magnification, width, height}]`) and optional `noise`.
CorpusSpec corpus_spec_from_json(const nlohmann::json& doc);
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

/// Renders one level of one slide. Geometry is defined in normalised slide
/// coordinates, so all levels of a slide show the same tissue layout.
Raster render_synthetic_level(int class_index, std::uint64_t slide_seed, int width, int height,
                              int noise);

/// Writes `<out_dir>/slides/<id>/{levels.json,<mag>.png}` and
/// `<out_dir>/manifest.csv`; returns the manifest path. Seeded and reproducible.
std::filesystem::path generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                                const std::filesystem::path& out_dir);

}  // namespace slidesim
