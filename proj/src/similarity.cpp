#include "slidesim/similarity.hpp"

#include <bit>
#include <fstream>

namespace slidesim {
namespace {

Eigen::MatrixXf stack(std::span<const PatchEmbedding> embeddings) {
  if (embeddings.empty()) return {};
  Eigen::MatrixXf m(static_cast<Eigen::Index>(embeddings.size()),
                    embeddings.front().vector.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].vector.size() != m.cols()) {
      throw Error("similarity", "non-uniform dimension at " + embeddings[i].key.to_string());
    }
    m.row(static_cast<Eigen::Index>(i)) = embeddings[i].vector.transpose();
  }
  return m;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("similarity", "truncated matrix file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

SimilarityMatrix similarity_matrix(std::span<const PatchEmbedding> q,
                                   std::span<const PatchEmbedding> r) {
  if (q.empty() || r.empty()) {
    throw Error("similarity", "empty patch set (fully background slide?)");
  }
  SimilarityMatrix m;
  m.query_id = q.front().key.slide_id;
  m.reference_id = r.front().key.slide_id;
  m.values = cosine_matrix(stack(q), stack(r));
  return m;
}

SlideSimilarity slide_similarity(const SimilarityMatrix& m) {
  return {m.query_id, m.reference_id, aggregate_similarity(m.values)};
}

SlideSimilarity compare_slides(std::span<const PatchEmbedding> q,
                               std::span<const PatchEmbedding> r) {
  return slide_similarity(similarity_matrix(q, r));
}

SlideSimilarity compare_slides(const EmbeddingStore& q_store, const std::string& query_id,
                               const EmbeddingStore& r_store, const std::string& reference_id) {
  if (q_store.dim() != r_store.dim()) {
    throw Error("similarity", "store dimensions differ: " + std::to_string(q_store.dim()) +
                                  " vs " + std::to_string(r_store.dim()));
  }
  for (const auto& [store, id] : {std::pair{&q_store, &query_id}, std::pair{&r_store, &reference_id}}) {
    if (!store->contains_slide(*id)) {
      throw Error("similarity", "slide '" + *id + "' has no tissue patches in the store");
    }
  }
  SlideSimilarity s;
  s.query_id = query_id;
  s.reference_id = reference_id;
  s.value = aggregate_similarity(
      cosine_matrix(q_store.matrix_for(query_id), r_store.matrix_for(reference_id)));
  return s;
}

void write_matrix(const SimilarityMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("similarity", "cannot open '" + path.string() + "'");
  put_u32(out, static_cast<std::uint32_t>(m.n_q()));
  put_u32(out, static_cast<std::uint32_t>(m.n_r()));
  for (Eigen::Index i = 0; i < m.n_q(); ++i) {
    for (Eigen::Index j = 0; j < m.n_r(); ++j) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.values(i, j))));
    }
  }
  if (!out) throw Error("similarity", "write failed for '" + path.string() + "'");
}

SimilarityMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("similarity", "cannot open '" + path.string() + "'");
  SimilarityMatrix m;
  const std::uint32_t n_q = get_u32(in);
  const std::uint32_t n_r = get_u32(in);
  m.values.resize(n_q, n_r);
  for (std::uint32_t i = 0; i < n_q; ++i) {
    for (std::uint32_t j = 0; j < n_r; ++j) {
      m.values(i, j) = std::bit_cast<float>(get_u32(in));
    }
  }
  return m;
}

}  // namespace slidesim
