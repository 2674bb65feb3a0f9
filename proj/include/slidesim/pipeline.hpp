#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidesim/backend.hpp"
#include "slidesim/log.hpp"
#include "slidesim/search.hpp"
#include "slidesim/slide_io.hpp"
#include "slidesim/tissue_filter.hpp"

namespace slidesim {

/// Settings shared by every subcommand. Defaults: 224 px patches, 2048-d
/// features reduced to 128, magnifications 1x/2.5x/5x/10x, top-3 and top-5.
struct PipelineConfig {
  int patch_size = kDefaultPatchSize;
  std::vector<Magnification> magnifications = default_magnifications();
  FilterConfig filter;
  BackendOptions backend;
  int n_f = kReducedFeatureDim;
  std::vector<int> top_k{3, 5};
  int workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Reads a partial config; missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& config);

struct SlideFilterResult {
  std::string slide_id;
  std::int64_t total = 0;
  std::vector<PatchRef> kept;
  std::int64_t dropped = 0;
};

/// Tiles and filters every slide at one magnification.
std::vector<SlideFilterResult> filter_corpus(const std::vector<SlideRecord>& slides,
                                             Magnification mag, const FilterConfig& cfg,
                                             int patch_size, int workers,
                                             Logger& logger = Logger::null());

/// Per-slide kept/dropped counts plus the kept grid positions.
nlohmann::json filter_report_to_json(Magnification mag, int patch_size, const FilterConfig& cfg,
                                     const std::vector<SlideFilterResult>& results);
/// Kept patches per slide, read back from a filter report.
std::map<std::string, std::vector<PatchRef>> kept_from_filter_report(const nlohmann::json& doc);

/// Embeds the kept patches of each slide (one backend instance per worker).
/// Slides are visited in manifest order and patches in grid order.
EmbeddingStore embed_corpus(const std::vector<SlideRecord>& slides, Magnification mag,
                            const std::map<std::string, std::vector<PatchRef>>& kept,
                            const BackendFactory& factory, int workers,
                            Logger& logger = Logger::null());

struct StageTiming {
  std::string stage;
  std::string magnification;
  double seconds = 0.0;
};

struct PipelineResult {
  SearchReport report;
  std::vector<StageTiming> timings;
  std::map<Magnification, std::filesystem::path> stores;
  std::filesystem::path report_path;
  std::filesystem::path timings_path;

  /// Sum of one stage's timings over magnifications.
  double stage_seconds(const std::string& stage) const;
};

/// tile -> filter -> embed -> reduce (when n_f < feature dim) -> evaluate.
/// Stage artefacts (stores, stats, report, timings) are written to `out_dir`.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& manifest,
                            const std::filesystem::path& out_dir, Logger& logger = Logger::null());

}  // namespace slidesim
