#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "slidesim/embedding.hpp"
#include "slidesim/slide_io.hpp"

namespace slidesim {

/// Feature extractor F: a patch_size x patch_size x 3 patch to a fixed-length
/// vector. Implementations must be deterministic. Instances are not assumed
/// thread-safe; use one per worker.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;

  virtual std::string name() const = 0;
  virtual int output_dim() const = 0;
  virtual int input_size() const { return kDefaultPatchSize; }

  virtual Eigen::VectorXf infer(const PatchPixels& patch) = 0;
};

/// Runs the backend, checks the output shape and validates the vector.
PatchEmbedding embed_patch(InferenceBackend& backend, const PatchPixels& patch);

/// Model-free stand-in: a seeded random projection of a pooled colour/texture
/// descriptor (8x8 grid means, 16-bin channel histograms, channel mean/std).
/// Output is signed.
class StubBackend final : public InferenceBackend {
 public:
  static constexpr int kDescriptorDim = 8 * 8 * 3 + 16 * 3 + 6;

  explicit StubBackend(std::uint64_t seed, int output_dim = kFullFeatureDim,
                       int input_size = kDefaultPatchSize);

  std::string name() const override { return "stub"; }
  int output_dim() const override { return static_cast<int>(projection_.rows()); }
  int input_size() const override { return input_size_; }
  Eigen::VectorXf infer(const PatchPixels& patch) override;

  /// Centered descriptor fed to the projection.
  static Eigen::VectorXd descriptor(const Raster& patch);

 private:
  int input_size_;
  Eigen::MatrixXd projection_;
};

/// Serves vectors from an existing store, looked up by patch key.
class PrecomputedBackend final : public InferenceBackend {
 public:
  explicit PrecomputedBackend(std::shared_ptr<const EmbeddingStore> store);

  std::string name() const override { return "precomputed"; }
  int output_dim() const override { return store_->dim(); }
  Eigen::VectorXf infer(const PatchPixels& patch) override;

 private:
  std::shared_ptr<const EmbeddingStore> store_;
};

/// Input conventions shipped next to an exported model (`preprocess.json`).
struct PreprocessSpec {
  std::string input_name = "input";
  std::string output_name = "embedding";
  double scale = 1.0 / 255.0;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
  int input_size = kDefaultPatchSize;
  int output_dim = kFullFeatureDim;
};

PreprocessSpec load_preprocess(const std::filesystem::path& path);

/// (x * scale - mean[c]) / std[c], laid out NCHW for a batch of one.
Eigen::VectorXf preprocess_nchw(const Raster& patch, const PreprocessSpec& spec);

/// True when the library was built with ONNX Runtime.
bool onnx_backend_available();

/// Loads an ONNX graph. `preprocess` defaults to `preprocess.json` next to the model.
/// Throws when ONNX Runtime support was not compiled in.
std::unique_ptr<InferenceBackend> make_onnx_backend(const std::filesystem::path& model,
                                                    std::filesystem::path preprocess = {});

enum class BackendKind { kStub, kOnnx, kPrecomputed };

BackendKind parse_backend_kind(const std::string& name);
std::string to_string(BackendKind kind);

struct BackendOptions {
  BackendKind kind = BackendKind::kStub;
  std::uint64_t seed = 0;
  int stub_dim = kFullFeatureDim;
  std::filesystem::path model;
  std::filesystem::path preprocess;
  std::filesystem::path precomputed;
};

using BackendFactory = std::function<std::unique_ptr<InferenceBackend>()>;

/// Returns a factory producing independent backend instances (one per worker).
BackendFactory make_backend_factory(const BackendOptions& options);

}  // namespace slidesim
