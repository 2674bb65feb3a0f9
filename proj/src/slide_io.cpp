#include "slidesim/slide_io.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slidesim/error.hpp"

namespace slidesim {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestHeader = "slide_id,label,pyramid_dir";

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error("manifest", "unterminated quote in row: " + line);
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const LevelInfo* SlideRecord::level(Magnification mag) const {
  for (const auto& l : levels) {
    if (l.magnification == mag) return &l;
  }
  return nullptr;
}

std::vector<LevelInfo> load_levels(const fs::path& pyramid_dir) {
  const fs::path meta = pyramid_dir / "levels.json";
  std::ifstream in(meta);
  if (!in) throw Error("manifest", "missing level metadata '" + meta.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("manifest", "malformed '" + meta.string() + "': " + e.what());
  }

  std::vector<LevelInfo> levels;
  std::set<Magnification> seen;
  try {
    for (const auto& entry : doc.at("levels")) {
      LevelInfo level;
      level.magnification = Magnification::parse(entry.at("magnification").get<std::string>());
      level.width = entry.at("width").get<int>();
      level.height = entry.at("height").get<int>();
      level.image_path = pyramid_dir / entry.at("file").get<std::string>();
      if (level.width <= 0 || level.height <= 0) {
        throw Error("manifest", "non-positive level size in '" + meta.string() + "'");
      }
      if (!seen.insert(level.magnification).second) {
        throw Error("manifest", "duplicate magnification " + level.magnification.label() +
                                    " in '" + meta.string() + "'");
      }
      levels.push_back(std::move(level));
    }
  } catch (const json::exception& e) {
    throw Error("manifest", "malformed '" + meta.string() + "': " + e.what());
  }
  return levels;
}

void write_levels(const fs::path& pyramid_dir, const std::vector<LevelInfo>& levels) {
  json doc;
  doc["levels"] = json::array();
  for (const auto& l : levels) {
    doc["levels"].push_back({{"magnification", l.magnification.label()},
                             {"width", l.width},
                             {"height", l.height},
                             {"file", l.image_path.filename().string()}});
  }
  std::ofstream out(pyramid_dir / "levels.json");
  out << doc.dump(2) << '\n';
  if (!out) throw Error("manifest", "cannot write levels.json in '" + pyramid_dir.string() + "'");
}

std::vector<SlideRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest", "cannot open manifest '" + path.string() + "'");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::vector<SlideRecord> slides;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw Error("manifest", "expected header '" + std::string(kManifestHeader) + "' in '" +
                                    path.string() + "'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_csv_row(line);
    if (fields.size() != 3 || fields[0].empty() || fields[2].empty()) {
      throw Error("manifest", "malformed row " + std::to_string(line_no) + " in '" +
                                  path.string() + "'");
    }
    if (!ids.insert(fields[0]).second) {
      throw Error("manifest", "duplicate slide_id '" + fields[0] + "'");
    }
    SlideRecord slide;
    slide.slide_id = fields[0];
    slide.label = fields[1];
    slide.pyramid_dir = base / fields[2];
    slide.levels = load_levels(slide.pyramid_dir);
    for (const auto& level : slide.levels) {
      if (!fs::exists(level.image_path)) {
        throw Error("manifest", "level image missing on disk: '" + level.image_path.string() + "'");
      }
    }
    slides.push_back(std::move(slide));
  }
  return slides;
}

void write_manifest(const fs::path& path, const std::vector<SlideRecord>& slides) {
  std::ofstream out(path);
  if (!out) throw Error("manifest", "cannot write manifest '" + path.string() + "'");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  out << kManifestHeader << '\n';
  for (const auto& s : slides) {
    out << csv_field(s.slide_id) << ',' << csv_field(s.label) << ','
        << csv_field(fs::relative(s.pyramid_dir, base).generic_string()) << '\n';
  }
  if (!out) throw Error("manifest", "write failed for '" + path.string() + "'");
}

std::vector<PatchRef> enumerate_patches(const SlideRecord& slide, Magnification mag,
                                        int patch_size) {
  if (patch_size <= 0) throw Error("tile", "patch size must be positive");
  const LevelInfo* level = slide.level(mag);
  if (!level) {
    throw Error("tile", "slide '" + slide.slide_id + "' has no " + mag.label() + " level");
  }
  const int rows = level->height / patch_size;
  const int cols = level->width / patch_size;
  std::vector<PatchRef> refs;
  refs.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      refs.push_back({slide.slide_id, mag, static_cast<std::uint32_t>(r),
                      static_cast<std::uint32_t>(c), patch_size});
    }
  }
  return refs;
}

Raster load_level(const SlideRecord& slide, Magnification mag) {
  const LevelInfo* level = slide.level(mag);
  if (!level) {
    throw Error("tile", "slide '" + slide.slide_id + "' has no " + mag.label() + " level");
  }
  Raster image = read_png(level->image_path);
  if (image.width != level->width || image.height != level->height) {
    throw Error("tile", "level image '" + level->image_path.string() +
                            "' does not match its recorded size");
  }
  return image;
}

PatchPixels read_patch(const Raster& level, const PatchRef& ref) {
  const PixelOrigin o = ref.pixel_origin();
  const int s = ref.patch_size;
  if (s <= 0 || o.x + s > level.width || o.y + s > level.height) {
    throw Error("tile", "patch (" + std::to_string(ref.row) + "," + std::to_string(ref.col) +
                            ") of '" + ref.slide_id + "' is out of bounds");
  }
  PatchPixels patch{ref, Raster(s, s)};
  for (int y = 0; y < s; ++y) {
    std::memcpy(patch.data.at(0, y), level.at(o.x, o.y + y), static_cast<std::size_t>(s) * 3);
  }
  return patch;
}

PatchPixels read_patch(const SlideRecord& slide, const PatchRef& ref) {
  return read_patch(load_level(slide, ref.magnification), ref);
}

}  // namespace slidesim
