#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slidesim/magnification.hpp"

namespace slidesim {

inline constexpr int kFullFeatureDim = 2048;
inline constexpr int kReducedFeatureDim = 128;
inline constexpr std::uint16_t kStoreVersion = 1;

/// Store key of one patch embedding.
struct PatchKey {
  std::string slide_id;
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  auto operator<=>(const PatchKey&) const = default;
  std::string to_string() const;
};

/// Feature vector of one tissue patch. Vectors are finite with a strictly
/// positive L2 norm; `make_embedding` enforces both.
struct PatchEmbedding {
  PatchKey key;
  Eigen::VectorXf vector;
};

/// Throws unless every component is finite and the norm is non-zero.
PatchEmbedding make_embedding(PatchKey key, Eigen::VectorXf vector);
void validate_vector(const PatchKey& key, const Eigen::Ref<const Eigen::VectorXf>& vector);

/// Per-magnification collection of patch embeddings sharing one dimension.
/// Records keep insertion order; slides are listed in order of first appearance.
class EmbeddingStore {
 public:
  EmbeddingStore(int dim, Magnification mag);

  int dim() const { return dim_; }
  Magnification magnification() const { return mag_; }
  std::uint16_t version() const { return kStoreVersion; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Validates the vector and rejects duplicate keys or dimension mismatch.
  void add(PatchEmbedding embedding);

  const std::vector<PatchEmbedding>& records() const { return records_; }
  const std::vector<std::string>& slide_ids() const { return slide_order_; }
  bool contains_slide(const std::string& slide_id) const;

  /// Indices into `records()` for one slide, in insertion order.
  const std::vector<std::size_t>& indices_for(const std::string& slide_id) const;
  std::vector<PatchEmbedding> embeddings_for(const std::string& slide_id) const;
  /// Row-per-patch matrix for one slide.
  Eigen::MatrixXf matrix_for(const std::string& slide_id) const;

  const PatchEmbedding* find(const PatchKey& key) const;

  /// Field-for-field, bit-exact equality (float payloads compared as bytes).
  bool bit_equal(const EmbeddingStore& other) const;

 private:
  int dim_;
  Magnification mag_;
  std::vector<PatchEmbedding> records_;
  std::map<PatchKey, std::size_t> by_key_;
  std::map<std::string, std::vector<std::size_t>> by_slide_;
  std::vector<std::string> slide_order_;
};

/// Serialises to the little-endian `SLEM` layout:
/// magic, u16 version, u32 dim, u8 magnification code, u64 count, then per
/// record u16 id length, id bytes, u32 row, u32 col, dim x f32.
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

/// Parses and validates a `SLEM` file; errors name the offending record key.
EmbeddingStore ingest_embeddings(const std::filesystem::path& path);

}  // namespace slidesim
