// slidesim: whole-slide image similarity toolchain.
//
//   synth     generate a synthetic pyramid corpus
//   tile      list the non-overlapping patch grid
//   filter    drop background patches, report kept/dropped counts
//   embed     embed tissue patches into a .slem store
//   reduce    coefficient-of-variation feature selection
//   compare   slide-to-slide similarity
//   evaluate  leave-one-out top-k search accuracy
//   run       all of the above in one go

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slidesim/slidesim.hpp"

namespace fs = std::filesystem;
using namespace slidesim;
using nlohmann::json;

namespace {

constexpr int kStageErrorExit = 2;

// Flags that may override values from --config; only applied when given.
struct FilterFlags {
  int a = 0, b = 0;
  double threshold = 0.0, literal = 0.0;
  std::string mode;
  CLI::Option *a_opt = nullptr, *b_opt = nullptr, *threshold_opt = nullptr, *literal_opt = nullptr,
              *mode_opt = nullptr;

  void add(CLI::App* app) {
    a_opt = app->add_option("--a", a, "upper edge of the dark bin (default 85)");
    b_opt = app->add_option("--b", b, "upper edge of the mid bin (default 170)");
    threshold_opt = app->add_option("--threshold", threshold, "bright-fraction threshold (default 0.8)");
    mode_opt = app->add_option("--mode", mode, "bright-fraction | paper-literal-ratio");
    literal_opt = app->add_option("--literal-ratio", literal, "constant for paper-literal-ratio mode");
  }
  void apply(FilterConfig& cfg) const {
    if (a_opt->count()) cfg.a = a;
    if (b_opt->count()) cfg.b = b;
    if (threshold_opt->count()) cfg.bright_fraction_threshold = threshold;
    if (mode_opt->count()) cfg.mode = parse_filter_mode(mode);
    if (literal_opt->count()) cfg.literal_ratio_constant = literal;
  }
};

struct BackendFlags {
  std::string kind, model, preprocess, precomputed;
  int stub_dim = 0;
  CLI::Option *kind_opt = nullptr, *model_opt = nullptr, *pre_opt = nullptr, *precomp_opt = nullptr,
              *dim_opt = nullptr;

  void add(CLI::App* app) {
    kind_opt = app->add_option("--backend", kind, "onnx | stub | precomputed")
                   ->check(CLI::IsMember({"onnx", "stub", "precomputed"}));
    model_opt = app->add_option("--model", model, "ONNX model graph");
    pre_opt = app->add_option("--preprocess", preprocess, "preprocess.json (default: next to model)");
    precomp_opt = app->add_option("--precomputed", precomputed, "store with precomputed embeddings");
    dim_opt = app->add_option("--stub-dim", stub_dim, "stub backend output dimension (default 2048)");
  }
  void apply(BackendOptions& b) const {
    if (kind_opt->count()) b.kind = parse_backend_kind(kind);
    if (model_opt->count()) b.model = model;
    if (pre_opt->count()) b.preprocess = preprocess;
    if (precomp_opt->count()) b.precomputed = precomputed;
    if (dim_opt->count()) b.stub_dim = stub_dim;
  }
};

std::vector<SlideRecord> manifest_or_fail(const std::string& path) { return load_manifest(path); }

void write_json(const fs::path& path, const json& doc, const std::string& stage) {
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(stage, "cannot write '" + path.string() + "'");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error("config", "not an integer: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slidesim: content-based similarity of whole-slide images"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  int workers = 0;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "pipeline configuration (JSON)");
  app.add_flag("--quiet", quiet, "suppress JSON log lines");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", [] {
    return "slidesim " + std::string("0.1.0") + "\nstore format (SLEM) version " +
           std::to_string(kStoreVersion) + "\nreport format version " + std::to_string(kReportVersion);
  });

  PipelineConfig config;
  auto load_base = [&] {
    if (!config_path.empty()) config = load_config(config_path, config);
    if (workers_opt->count()) config.workers = workers;
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string spec_path, synth_out;
  synth->add_option("--spec", spec_path, "corpus spec JSON")->required();
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // tile
  auto* tile = app.add_subcommand("tile", "enumerate patch grids");
  std::string manifest, mag_label = "5x", out_path;
  int patch_size = 0;
  bool write_patches = false;
  tile->add_option("--manifest", manifest)->required();
  tile->add_option("--mag", mag_label);
  auto* tile_ps = tile->add_option("--patch-size", patch_size);
  tile->add_option("--out", out_path, "output directory")->required();
  tile->add_flag("--write-patches", write_patches, "also write each patch as PNG");

  // filter
  auto* filter = app.add_subcommand("filter", "remove background patches");
  FilterFlags filter_flags;
  std::string report_path;
  filter->add_option("--manifest", manifest)->required();
  filter->add_option("--mag", mag_label);
  auto* filter_ps = filter->add_option("--patch-size", patch_size);
  filter_flags.add(filter);
  filter->add_option("--report", report_path, "per-slide kept/dropped JSON")->required();

  // embed
  auto* embed = app.add_subcommand("embed", "embed tissue patches");
  FilterFlags embed_filter_flags;
  BackendFlags backend_flags;
  std::string patches_path;
  auto* embed_seed = embed->add_option("--seed", seed, "stub backend seed");
  embed->add_option("--manifest", manifest)->required();
  embed->add_option("--mag", mag_label);
  auto* embed_ps = embed->add_option("--patch-size", patch_size);
  embed_filter_flags.add(embed);
  backend_flags.add(embed);
  embed->add_option("--patches", patches_path, "filter report to take kept patches from");
  embed->add_option("--out", out_path, "output store (.slem)")->required();

  // reduce
  auto* reduce_cmd = app.add_subcommand("reduce", "select the most variable features");
  std::string store_path, stats_out, stats_in;
  int k = 0;
  reduce_cmd->add_option("--store", store_path)->required();
  auto* reduce_k = reduce_cmd->add_option("--k", k, "number of features to keep (default 128)");
  reduce_cmd->add_option("--stats-out", stats_out, "write statistics JSON");
  reduce_cmd->add_option("--stats-in", stats_in, "apply an existing selection instead of computing one");
  reduce_cmd->add_option("--out", out_path)->required();

  // compare
  auto* compare = app.add_subcommand("compare", "similarity of two slides");
  std::string query, reference, reference_store, dump_matrix;
  compare->add_option("--store", store_path)->required();
  compare->add_option("--query", query)->required();
  compare->add_option("--reference", reference)->required();
  compare->add_option("--reference-store", reference_store, "store holding the reference (default: --store)");
  compare->add_option("--dump-matrix", dump_matrix, "write the patch similarity matrix (f32)");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "leave-one-out search accuracy");
  std::string stores_arg, topk_arg;
  evaluate_cmd->add_option("--manifest", manifest)->required();
  evaluate_cmd->add_option("--stores", stores_arg, "mag=store.slem,...")->required();
  auto* eval_topk = evaluate_cmd->add_option("--top-k", topk_arg, "comma-separated k values (default 3,5)");
  evaluate_cmd->add_option("--out", out_path)->required();

  // run
  auto* run = app.add_subcommand("run", "full pipeline");
  FilterFlags run_filter_flags;
  BackendFlags run_backend_flags;
  std::string mags_arg;
  int n_f = 0;
  run->add_option("--manifest", manifest)->required();
  run->add_option("--out", out_path, "output directory")->required();
  auto* run_seed = run->add_option("--seed", seed);
  auto* run_ps = run->add_option("--patch-size", patch_size);
  auto* run_nf = run->add_option("--n-f", n_f, "reduced feature count; equal to the feature dim disables reduction");
  auto* run_mags = run->add_option("--mags", mags_arg, "comma-separated magnifications");
  auto* run_topk = run->add_option("--top-k", topk_arg);
  run_filter_flags.add(run);
  run_backend_flags.add(run);

  CLI11_PARSE(app, argc, argv);

  Logger logger(&std::cerr, !quiet);
  std::string stage = "config";
  try {
    load_base();

    if (*synth) {
      stage = "synth";
      Stopwatch watch;
      const auto spec = load_corpus_spec(spec_path);
      const auto path = generate_synthetic_corpus(spec, seed, synth_out);
      logger.log(stage, "wrote " + path.string(), std::nullopt, watch.millis());
      std::cout << path.string() << '\n';
    } else if (*tile) {
      stage = "manifest";
      const auto slides = manifest_or_fail(manifest);
      stage = "tile";
      if (tile_ps->count()) config.patch_size = patch_size;
      const auto mag = Magnification::parse(mag_label);
      fs::create_directories(out_path);
      std::ofstream csv(fs::path(out_path) / ("patches_" + mag.label() + ".csv"));
      csv << "slide_id,row,col,x,y\n";
      std::size_t total = 0;
      for (const auto& slide : slides) {
        const auto refs = enumerate_patches(slide, mag, config.patch_size);
        std::optional<Raster> level;
        if (write_patches && !refs.empty()) {
          level = load_level(slide, mag);
          fs::create_directories(fs::path(out_path) / slide.slide_id);
        }
        for (const auto& ref : refs) {
          const auto o = ref.pixel_origin();
          csv << slide.slide_id << ',' << ref.row << ',' << ref.col << ',' << o.x << ',' << o.y << '\n';
          if (level) {
            write_png(fs::path(out_path) / slide.slide_id /
                          (mag.label() + "_r" + std::to_string(ref.row) + "_c" + std::to_string(ref.col) + ".png"),
                      read_patch(*level, ref).data);
          }
        }
        total += refs.size();
        logger.log(stage, std::to_string(refs.size()) + " patches", slide.slide_id);
      }
      if (!csv) throw Error(stage, "cannot write patch list");
      std::cout << total << '\n';
    } else if (*filter) {
      stage = "manifest";
      const auto slides = manifest_or_fail(manifest);
      stage = "filter";
      if (filter_ps->count()) config.patch_size = patch_size;
      filter_flags.apply(config.filter);
      const auto mag = Magnification::parse(mag_label);
      const auto results = filter_corpus(slides, mag, config.filter, config.patch_size, config.workers, logger);
      write_json(report_path, filter_report_to_json(mag, config.patch_size, config.filter, results), stage);
    } else if (*embed) {
      stage = "manifest";
      const auto slides = manifest_or_fail(manifest);
      stage = "embed";
      if (embed_ps->count()) config.patch_size = patch_size;
      if (embed_seed->count()) config.seed = seed;
      embed_filter_flags.apply(config.filter);
      config.backend.seed = config.seed;
      backend_flags.apply(config.backend);
      const auto mag = Magnification::parse(mag_label);
      std::map<std::string, std::vector<PatchRef>> kept;
      if (!patches_path.empty()) {
        std::ifstream in(patches_path);
        if (!in) throw Error(stage, "cannot open '" + patches_path + "'");
        json doc;
        in >> doc;
        kept = kept_from_filter_report(doc);
      } else {
        stage = "filter";
        for (auto& r : filter_corpus(slides, mag, config.filter, config.patch_size, config.workers, logger)) {
          kept[r.slide_id] = std::move(r.kept);
        }
        stage = "embed";
      }
      Stopwatch watch;
      const auto store = embed_corpus(slides, mag, kept, make_backend_factory(config.backend),
                                      config.workers, logger);
      write_store(store, out_path);
      logger.log(stage, "wrote " + std::to_string(store.size()) + " embeddings", std::nullopt, watch.millis());
    } else if (*reduce_cmd) {
      stage = "reduce";
      if (reduce_k->count()) config.n_f = k;
      const auto store = ingest_embeddings(store_path);
      const auto stats = stats_in.empty() ? compute_stats(store, config.n_f) : read_stats(stats_in);
      if (!stats_out.empty()) write_stats(stats, stats_out);
      write_store(reduce(store, stats), out_path);
      logger.log(stage, "kept " + std::to_string(stats.n_f()) + " of " + std::to_string(stats.s_f()) + " features");
    } else if (*compare) {
      stage = "compare";
      const auto q_store = ingest_embeddings(store_path);
      const auto r_store = reference_store.empty() ? q_store : ingest_embeddings(reference_store);
      const auto matrix = similarity_matrix(q_store.embeddings_for(query), r_store.embeddings_for(reference));
      if (!dump_matrix.empty()) write_matrix(matrix, dump_matrix);
      std::printf("%.6f\n", slide_similarity(matrix).value);
    } else if (*evaluate_cmd) {
      stage = "manifest";
      const auto slides = manifest_or_fail(manifest);
      stage = "evaluate";
      if (eval_topk->count()) config.top_k = parse_int_list(topk_arg);
      std::map<Magnification, EmbeddingStore> stores;
      std::stringstream ss(stores_arg);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(stage, "expected mag=path, got '" + item + "'");
        const auto mag = Magnification::parse(item.substr(0, eq));
        stores.emplace(mag, ingest_embeddings(item.substr(eq + 1)));
      }
      Stopwatch watch;
      const auto report = evaluate(slides, stores, config.top_k, config.workers);
      write_report(report, out_path);
      for (const auto& s : report.summaries) {
        json acc;
        for (const auto& [kk, v] : s.accuracy) acc["top-" + std::to_string(kk)] = v;
        logger.log(stage, "accuracy at " + s.magnification.label(), std::nullopt, std::nullopt, {{"accuracy", acc}});
      }
      logger.log(stage, "done", std::nullopt, watch.millis());
    } else if (*run) {
      stage = "config";
      if (run_seed->count()) config.seed = seed;
      if (run_ps->count()) config.patch_size = patch_size;
      if (run_nf->count()) config.n_f = n_f;
      if (run_topk->count()) config.top_k = parse_int_list(topk_arg);
      if (run_mags->count()) {
        config.magnifications.clear();
        std::stringstream ss(mags_arg);
        std::string m;
        while (std::getline(ss, m, ',')) config.magnifications.push_back(Magnification::parse(m));
      }
      run_filter_flags.apply(config.filter);
      run_backend_flags.apply(config.backend);
      const auto result = run_pipeline(config, manifest, out_path, logger);
      for (const auto& t : result.timings) {
        logger.log("timing", t.stage, std::nullopt, t.seconds * 1e3, {{"magnification", t.magnification}});
      }
      std::cout << result.report_path.string() << '\n';
    }
  } catch (const Error& e) {
    logger.set_enabled(true);
    logger.log(e.stage(), e.what(), std::nullopt, std::nullopt, {{"level", "error"}});
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return kStageErrorExit;
  } catch (const std::exception& e) {
    logger.set_enabled(true);
    logger.log(stage, e.what(), std::nullopt, std::nullopt, {{"level", "error"}});
    std::cerr << "error [" << stage << "]: " << e.what() << '\n';
    return kStageErrorExit;
  }
  return 0;
}
