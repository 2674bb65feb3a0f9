#include "slidesim/backend.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "slidesim/error.hpp"
#include "slidesim/random.hpp"

#ifdef SLIDESIM_WITH_ONNXRUNTIME
#include <onnxruntime_cxx_api.h>
#endif

namespace slidesim {

PatchEmbedding embed_patch(InferenceBackend& backend, const PatchPixels& patch) {
  const int s = backend.input_size();
  if (patch.data.width != s || patch.data.height != s) {
    throw Error("embed", backend.name() + " backend expects " + std::to_string(s) + "x" +
                             std::to_string(s) + " patches, got " +
                             std::to_string(patch.data.width) + "x" +
                             std::to_string(patch.data.height));
  }
  PatchKey key{patch.ref.slide_id, patch.ref.row, patch.ref.col};
  Eigen::VectorXf v = backend.infer(patch);
  if (v.size() != backend.output_dim()) {
    throw Error("embed", backend.name() + " backend returned " + std::to_string(v.size()) +
                             " features, expected " + std::to_string(backend.output_dim()));
  }
  return make_embedding(std::move(key), std::move(v));
}

// ---------------------------------------------------------------------------
// Stub

StubBackend::StubBackend(std::uint64_t seed, int output_dim, int input_size)
    : input_size_(input_size) {
  if (output_dim <= 0 || input_size <= 0) {
    throw Error("embed", "stub backend needs positive output dim and input size");
  }
  SplitMix64 rng(seed ^ 0x5EEDBACCE17D00DULL);
  projection_.resize(output_dim, kDescriptorDim);
  const double scale = std::sqrt(3.0 / kDescriptorDim);
  for (Eigen::Index c = 0; c < projection_.cols(); ++c) {
    for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
      projection_(r, c) = scale * (2.0 * rng.uniform() - 1.0);
    }
  }
}

Eigen::VectorXd StubBackend::descriptor(const Raster& patch) {
  constexpr int kGrid = 8;
  constexpr int kBins = 16;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kDescriptorDim);
  const int w = patch.width;
  const int h = patch.height;
  const double n = static_cast<double>(w) * h;

  Eigen::Array3d sum = Eigen::Array3d::Zero();
  Eigen::Array3d sum_sq = Eigen::Array3d::Zero();
  Eigen::Array<double, kGrid * kGrid, 3> cells = decltype(cells)::Zero();
  Eigen::Array<double, kGrid * kGrid, 1> cell_n = decltype(cell_n)::Zero();
  Eigen::Array<double, kBins, 3> hist = decltype(hist)::Zero();

  for (int y = 0; y < h; ++y) {
    const int gy = y * kGrid / h;
    for (int x = 0; x < w; ++x) {
      const int cell = gy * kGrid + x * kGrid / w;
      const std::uint8_t* p = patch.at(x, y);
      cell_n(cell) += 1.0;
      for (int c = 0; c < 3; ++c) {
        const double v = p[c] / 255.0;
        cells(cell, c) += v;
        sum(c) += v;
        sum_sq(c) += v * v;
        hist(p[c] * kBins / 256, c) += 1.0;
      }
    }
  }

  Eigen::Index k = 0;
  for (int cell = 0; cell < kGrid * kGrid; ++cell) {
    for (int c = 0; c < 3; ++c) {
      d[k++] = (cell_n(cell) > 0 ? cells(cell, c) / cell_n(cell) : 0.0) - 0.5;
    }
  }
  for (int c = 0; c < 3; ++c) {
    for (int b = 0; b < kBins; ++b) d[k++] = hist(b, c) / n - 1.0 / kBins;
  }
  const Eigen::Array3d mean = sum / n;
  const Eigen::Array3d var = (sum_sq / n - mean.square()).max(0.0);
  for (int c = 0; c < 3; ++c) d[k++] = mean(c) - 0.5;
  for (int c = 0; c < 3; ++c) d[k++] = std::sqrt(var(c));
  return d;
}

Eigen::VectorXf StubBackend::infer(const PatchPixels& patch) {
  return (projection_ * descriptor(patch.data)).cast<float>();
}

// ---------------------------------------------------------------------------
// Precomputed

PrecomputedBackend::PrecomputedBackend(std::shared_ptr<const EmbeddingStore> store)
    : store_(std::move(store)) {
  if (!store_) throw Error("embed", "precomputed backend needs a store");
}

Eigen::VectorXf PrecomputedBackend::infer(const PatchPixels& patch) {
  const PatchKey key{patch.ref.slide_id, patch.ref.row, patch.ref.col};
  const PatchEmbedding* e = store_->find(key);
  if (!e) throw Error("embed", "no precomputed embedding for " + key.to_string());
  return e->vector;
}

// ---------------------------------------------------------------------------
// Preprocessing shared with the exported model

PreprocessSpec load_preprocess(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("embed", "cannot open preprocessing metadata '" + path.string() + "'");
  PreprocessSpec spec;
  try {
    nlohmann::json doc;
    in >> doc;
    spec.input_name = doc.value("input_name", spec.input_name);
    spec.output_name = doc.value("output_name", spec.output_name);
    spec.scale = doc.value("scale", spec.scale);
    spec.input_size = doc.value("input_size", spec.input_size);
    spec.output_dim = doc.value("output_dim", spec.output_dim);
    if (doc.contains("mean")) spec.mean = doc.at("mean").get<std::array<double, 3>>();
    if (doc.contains("std")) spec.std = doc.at("std").get<std::array<double, 3>>();
    if (doc.value("layout", std::string("NCHW")) != "NCHW") {
      throw Error("embed", "only NCHW input layout is supported");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("embed", "malformed preprocessing metadata '" + path.string() + "': " + e.what());
  }
  for (double s : spec.std) {
    if (!(s > 0.0)) throw Error("embed", "preprocessing std must be positive");
  }
  return spec;
}

Eigen::VectorXf preprocess_nchw(const Raster& patch, const PreprocessSpec& spec) {
  const Eigen::Index plane = static_cast<Eigen::Index>(patch.width) * patch.height;
  Eigen::VectorXf out(3 * plane);
  for (int c = 0; c < 3; ++c) {
    const double mean = spec.mean[c];
    const double inv_std = 1.0 / spec.std[c];
    for (Eigen::Index i = 0; i < plane; ++i) {
      const double v = patch.pixels[static_cast<std::size_t>(i) * 3 + c] * spec.scale;
      out[c * plane + i] = static_cast<float>((v - mean) * inv_std);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ONNX Runtime

#ifdef SLIDESIM_WITH_ONNXRUNTIME
namespace {

class OnnxBackend final : public InferenceBackend {
 public:
  OnnxBackend(const std::filesystem::path& model, PreprocessSpec spec)
      : spec_(std::move(spec)),
        env_(ORT_LOGGING_LEVEL_WARNING, "slidesim"),
        memory_(Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault)) {
    Ort::SessionOptions options;
    options.SetIntraOpNumThreads(1);
    options.SetGraphOptimizationLevel(GraphOptimizationLevel::ORT_ENABLE_ALL);
    try {
      session_ = std::make_unique<Ort::Session>(env_, model.c_str(), options);
    } catch (const Ort::Exception& e) {
      throw Error("embed", "cannot load model '" + model.string() + "': " + e.what());
    }
  }

  std::string name() const override { return "onnx"; }
  int output_dim() const override { return spec_.output_dim; }
  int input_size() const override { return spec_.input_size; }

  Eigen::VectorXf infer(const PatchPixels& patch) override {
    Eigen::VectorXf input = preprocess_nchw(patch.data, spec_);
    const std::array<std::int64_t, 4> shape{1, 3, spec_.input_size, spec_.input_size};
    Ort::Value tensor = Ort::Value::CreateTensor<float>(memory_, input.data(), input.size(),
                                                        shape.data(), shape.size());
    const char* in_names[] = {spec_.input_name.c_str()};
    const char* out_names[] = {spec_.output_name.c_str()};
    std::vector<Ort::Value> outputs;
    try {
      outputs = session_->Run(Ort::RunOptions{nullptr}, in_names, &tensor, 1, out_names, 1);
    } catch (const Ort::Exception& e) {
      throw Error("embed", std::string("inference failed: ") + e.what());
    }
    auto info = outputs.front().GetTensorTypeAndShapeInfo();
    const auto count = static_cast<Eigen::Index>(info.GetElementCount());
    if (count != spec_.output_dim) {
      throw Error("embed", "model produced " + std::to_string(count) + " outputs, expected " +
                               std::to_string(spec_.output_dim));
    }
    const float* data = outputs.front().GetTensorData<float>();
    return Eigen::Map<const Eigen::VectorXf>(data, count);
  }

 private:
  PreprocessSpec spec_;
  Ort::Env env_;
  Ort::MemoryInfo memory_;
  std::unique_ptr<Ort::Session> session_;
};

}  // namespace

bool onnx_backend_available() { return true; }

std::unique_ptr<InferenceBackend> make_onnx_backend(const std::filesystem::path& model,
                                                    std::filesystem::path preprocess) {
  if (preprocess.empty()) preprocess = model.parent_path() / "preprocess.json";
  return std::make_unique<OnnxBackend>(model, load_preprocess(preprocess));
}
#else
bool onnx_backend_available() { return false; }

std::unique_ptr<InferenceBackend> make_onnx_backend(const std::filesystem::path& model,
                                                    std::filesystem::path) {
  throw Error("embed", "cannot load '" + model.string() +
                           "': built without ONNX Runtime (configure with "
                           "-DSLIDESIM_WITH_ONNXRUNTIME=ON)");
}
#endif

// ---------------------------------------------------------------------------

BackendKind parse_backend_kind(const std::string& name) {
  if (name == "stub") return BackendKind::kStub;
  if (name == "onnx") return BackendKind::kOnnx;
  if (name == "precomputed") return BackendKind::kPrecomputed;
  throw Error("embed", "unknown backend '" + name + "'");
}

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kStub: return "stub";
    case BackendKind::kOnnx: return "onnx";
    case BackendKind::kPrecomputed: return "precomputed";
  }
  return "unknown";
}

BackendFactory make_backend_factory(const BackendOptions& options) {
  switch (options.kind) {
    case BackendKind::kStub:
      return [seed = options.seed, dim = options.stub_dim] {
        return std::make_unique<StubBackend>(seed, dim);
      };
    case BackendKind::kOnnx:
      if (options.model.empty()) throw Error("embed", "onnx backend requires --model");
      if (!onnx_backend_available()) {
        throw Error("embed", "onnx backend unavailable: built without ONNX Runtime");
      }
      return [model = options.model, pre = options.preprocess] {
        return make_onnx_backend(model, pre);
      };
    case BackendKind::kPrecomputed: {
      if (options.precomputed.empty()) {
        throw Error("embed", "precomputed backend requires --precomputed <store.slem>");
      }
      auto store = std::make_shared<const EmbeddingStore>(ingest_embeddings(options.precomputed));
      return [store] { return std::make_unique<PrecomputedBackend>(store); };
    }
  }
  throw Error("embed", "unknown backend");
}

}  // namespace slidesim
