#include "slidesim/pipeline.hpp"

#include <fstream>

#include "slidesim/error.hpp"
#include "slidesim/parallel.hpp"
#include "slidesim/reduction.hpp"

namespace slidesim {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Runs `fn`, re-labelling any library error with the pipeline stage so the
// caller always sees which step failed.
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.stage() == stage) throw;
    throw Error(stage, e.what());
  } catch (const std::exception& e) {
    throw Error(stage, e.what());
  }
}

std::string store_name(Magnification mag, int dim) {
  return "store_" + mag.label() + "_d" + std::to_string(dim) + ".slem";
}

}  // namespace

void PipelineConfig::validate() const {
  if (patch_size <= 0) throw Error("config", "patch_size must be positive");
  if (magnifications.empty()) throw Error("config", "no magnifications configured");
  if (n_f <= 0) throw Error("config", "n_f must be positive");
  if (top_k.empty()) throw Error("config", "top_k must not be empty");
  for (int k : top_k) {
    if (k < 1) throw Error("config", "top_k values must be >= 1");
  }
  if (workers < 1) throw Error("config", "workers must be >= 1");
  filter.validate();
}

PipelineConfig config_from_json(const json& doc, PipelineConfig c) {
  try {
    c.patch_size = doc.value("patch_size", c.patch_size);
    if (doc.contains("magnifications")) {
      c.magnifications.clear();
      for (const auto& m : doc.at("magnifications")) {
        c.magnifications.push_back(Magnification::parse(m.get<std::string>()));
      }
    }
    if (doc.contains("filter")) {
      const auto& f = doc.at("filter");
      c.filter.a = f.value("a", c.filter.a);
      c.filter.b = f.value("b", c.filter.b);
      c.filter.bright_fraction_threshold = f.value("threshold", c.filter.bright_fraction_threshold);
      if (f.contains("mode")) c.filter.mode = parse_filter_mode(f.at("mode").get<std::string>());
      c.filter.literal_ratio_constant = f.value("literal_ratio_constant", c.filter.literal_ratio_constant);
    }
    if (doc.contains("backend")) {
      const auto& b = doc.at("backend");
      if (b.contains("kind")) c.backend.kind = parse_backend_kind(b.at("kind").get<std::string>());
      c.backend.stub_dim = b.value("stub_dim", c.backend.stub_dim);
      if (b.contains("model")) c.backend.model = b.at("model").get<std::string>();
      if (b.contains("preprocess")) c.backend.preprocess = b.at("preprocess").get<std::string>();
      if (b.contains("precomputed")) c.backend.precomputed = b.at("precomputed").get<std::string>();
    }
    c.n_f = doc.value("n_f", c.n_f);
    if (doc.contains("top_k")) c.top_k = doc.at("top_k").get<std::vector<int>>();
    c.workers = doc.value("workers", c.workers);
    c.seed = doc.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error("config", std::string("malformed config: ") + e.what());
  }
  c.backend.seed = c.seed;
  return c;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("config", "cannot open config '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("config", "malformed config '" + path.string() + "': " + e.what());
  }
  return config_from_json(doc, std::move(base));
}

json config_to_json(const PipelineConfig& c) {
  json mags = json::array();
  for (auto m : c.magnifications) mags.push_back(m.label());
  return {{"patch_size", c.patch_size},
          {"magnifications", mags},
          {"filter",
           {{"a", c.filter.a},
            {"b", c.filter.b},
            {"threshold", c.filter.bright_fraction_threshold},
            {"mode", to_string(c.filter.mode)},
            {"literal_ratio_constant", c.filter.literal_ratio_constant}}},
          {"backend",
           {{"kind", to_string(c.backend.kind)},
            {"stub_dim", c.backend.stub_dim},
            {"model", c.backend.model.string()},
            {"preprocess", c.backend.preprocess.string()},
            {"precomputed", c.backend.precomputed.string()}}},
          {"n_f", c.n_f},
          {"top_k", c.top_k},
          {"workers", c.workers},
          {"seed", c.seed}};
}

std::vector<SlideFilterResult> filter_corpus(const std::vector<SlideRecord>& slides,
                                             Magnification mag, const FilterConfig& cfg,
                                             int patch_size, int workers, Logger& logger) {
  cfg.validate();
  std::vector<SlideFilterResult> results(slides.size());
  parallel_for(slides.size(), workers, [&](std::size_t i) {
    Stopwatch watch;
    const auto& slide = slides[i];
    auto patches = enumerate_patches(slide, mag, patch_size);
    FilterResult fr;
    if (!patches.empty()) fr = filter_patches(load_level(slide, mag), patches, cfg);
    results[i] = {slide.slide_id, static_cast<std::int64_t>(patches.size()), std::move(fr.kept),
                  fr.dropped_count};
    logger.log("filter", "filtered " + mag.label(), slide.slide_id, watch.millis(),
               {{"kept", results[i].kept.size()}, {"dropped", results[i].dropped}});
  });
  return results;
}

json filter_report_to_json(Magnification mag, int patch_size, const FilterConfig& cfg,
                           const std::vector<SlideFilterResult>& results) {
  json slides = json::array();
  std::int64_t kept_total = 0;
  std::int64_t dropped_total = 0;
  for (const auto& r : results) {
    json kept = json::array();
    for (const auto& ref : r.kept) kept.push_back({ref.row, ref.col});
    slides.push_back({{"slide_id", r.slide_id},
                      {"patches", r.total},
                      {"kept", r.kept.size()},
                      {"dropped", r.dropped},
                      {"kept_patches", kept}});
    kept_total += static_cast<std::int64_t>(r.kept.size());
    dropped_total += r.dropped;
  }
  return {{"magnification", mag.label()},
          {"patch_size", patch_size},
          {"filter",
           {{"a", cfg.a},
            {"b", cfg.b},
            {"threshold", cfg.bright_fraction_threshold},
            {"mode", to_string(cfg.mode)},
            {"literal_ratio_constant", cfg.literal_ratio_constant}}},
          {"totals", {{"tissue", kept_total}, {"background", dropped_total}}},
          {"slides", slides}};
}

std::map<std::string, std::vector<PatchRef>> kept_from_filter_report(const json& doc) {
  std::map<std::string, std::vector<PatchRef>> kept;
  try {
    const auto mag = Magnification::parse(doc.at("magnification").get<std::string>());
    const int patch_size = doc.at("patch_size").get<int>();
    for (const auto& s : doc.at("slides")) {
      auto& refs = kept[s.at("slide_id").get<std::string>()];
      for (const auto& rc : s.at("kept_patches")) {
        refs.push_back({s.at("slide_id").get<std::string>(), mag, rc.at(0).get<std::uint32_t>(),
                        rc.at(1).get<std::uint32_t>(), patch_size});
      }
    }
  } catch (const json::exception& e) {
    throw Error("embed", std::string("malformed filter report: ") + e.what());
  }
  return kept;
}

EmbeddingStore embed_corpus(const std::vector<SlideRecord>& slides, Magnification mag,
                            const std::map<std::string, std::vector<PatchRef>>& kept,
                            const BackendFactory& factory, int workers, Logger& logger) {
  // Backends are created lazily, one per worker thread.
  std::mutex pool_mutex;
  std::vector<std::unique_ptr<InferenceBackend>> pool;
  auto acquire = [&] {
    std::lock_guard lock(pool_mutex);
    if (pool.empty()) return factory();
    auto b = std::move(pool.back());
    pool.pop_back();
    return b;
  };
  auto release = [&](std::unique_ptr<InferenceBackend> b) {
    std::lock_guard lock(pool_mutex);
    pool.push_back(std::move(b));
  };

  std::vector<std::vector<PatchEmbedding>> per_slide(slides.size());
  int dim = 0;
  std::mutex dim_mutex;
  parallel_for(slides.size(), workers, [&](std::size_t i) {
    const auto& slide = slides[i];
    auto it = kept.find(slide.slide_id);
    if (it == kept.end() || it->second.empty()) return;
    Stopwatch watch;
    auto backend = acquire();
    {
      std::lock_guard lock(dim_mutex);
      dim = backend->output_dim();
    }
    const Raster level = load_level(slide, mag);
    for (const auto& ref : it->second) {
      per_slide[i].push_back(embed_patch(*backend, read_patch(level, ref)));
    }
    release(std::move(backend));
    logger.log("embed", "embedded " + std::to_string(per_slide[i].size()) + " patches at " + mag.label(),
               slide.slide_id, watch.millis());
  });

  if (dim == 0) dim = factory()->output_dim();
  EmbeddingStore store(dim, mag);
  for (auto& list : per_slide) {
    for (auto& e : list) store.add(std::move(e));
  }
  return store;
}

double PipelineResult::stage_seconds(const std::string& stage) const {
  double total = 0.0;
  for (const auto& t : timings) {
    if (t.stage == stage) total += t.seconds;
  }
  return total;
}

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& manifest_path,
                            const fs::path& out_dir, Logger& logger) {
  in_stage("config", [&] {
    config.validate();
    return 0;
  });
  const auto slides = in_stage("manifest", [&] { return load_manifest(manifest_path); });
  if (slides.empty()) throw Error("manifest", "manifest lists no slides");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("output", "cannot create '" + out_dir.string() + "': " + ec.message());

  BackendOptions backend = config.backend;
  backend.seed = config.seed;
  const BackendFactory factory = in_stage("embed", [&] { return make_backend_factory(backend); });

  PipelineResult result;
  std::map<Magnification, EmbeddingStore> stores;
  auto timed = [&](const std::string& stage, Magnification mag, auto&& fn) {
    Stopwatch watch;
    auto value = in_stage(stage, fn);
    result.timings.push_back({stage, mag.label(), watch.seconds()});
    logger.log(stage, "stage complete at " + mag.label(), std::nullopt, watch.millis());
    return value;
  };

  for (const Magnification mag : config.magnifications) {
    timed("tile", mag, [&] {
      std::size_t total = 0;
      for (const auto& s : slides) total += enumerate_patches(s, mag, config.patch_size).size();
      return total;
    });
    const auto filtered = timed("filter", mag, [&] {
      return filter_corpus(slides, mag, config.filter, config.patch_size, config.workers, logger);
    });
    std::map<std::string, std::vector<PatchRef>> kept;
    for (const auto& f : filtered) kept[f.slide_id] = f.kept;

    EmbeddingStore store = timed("embed", mag, [&] {
      return embed_corpus(slides, mag, kept, factory, config.workers, logger);
    });
    fs::path store_path = out_dir / store_name(mag, store.dim());
    in_stage("embed", [&] {
      write_store(store, store_path);
      return 0;
    });

    if (config.n_f > store.dim()) {
      throw Error("reduce", "n_f=" + std::to_string(config.n_f) + " exceeds feature dimension " +
                                std::to_string(store.dim()));
    }
    if (config.n_f < store.dim()) {
      store = timed("reduce", mag, [&] {
        const ReductionStats stats = compute_stats(store, config.n_f);
        write_stats(stats, out_dir / ("stats_" + mag.label() + ".json"));
        return reduce(store, stats);
      });
      store_path = out_dir / store_name(mag, store.dim());
      in_stage("reduce", [&] {
        write_store(store, store_path);
        return 0;
      });
    }
    result.stores[mag] = store_path;
    stores.emplace(mag, std::move(store));
  }

  // Similarity and ranking, timed per magnification.
  std::vector<SearchReport> parts;
  for (const auto& [mag, store] : stores) {
    std::map<Magnification, EmbeddingStore> one;
    one.emplace(mag, store);
    parts.push_back(timed("similarity", mag, [&] {
      return evaluate(slides, one, config.top_k, config.workers);
    }));
  }
  for (auto& p : parts) {
    if (result.report.ks.empty()) result.report.ks = p.ks;
    for (auto& s : p.summaries) result.report.summaries.push_back(std::move(s));
    for (auto& q : p.per_query) result.report.per_query.push_back(std::move(q));
  }

  result.report_path = out_dir / "report.json";
  result.timings_path = out_dir / "timings.json";
  in_stage("evaluate", [&] {
    write_report(result.report, result.report_path);
    json t = json::array();
    for (const auto& s : result.timings) {
      t.push_back({{"stage", s.stage}, {"magnification", s.magnification}, {"seconds", s.seconds}});
    }
    std::ofstream out(result.timings_path);
    out << json{{"timings", t}, {"config", config_to_json(config)}}.dump(2) << '\n';
    if (!out) throw Error("evaluate", "cannot write timings");
    return 0;
  });
  return result;
}

}  // namespace slidesim
