#include "slidesim/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "slidesim/error.hpp"

namespace slidesim {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "f32 payloads assume IEEE-754 floats");

constexpr char kMagic[4] = {'S', 'L', 'E', 'M'};

template <typename T>
void put_le(std::string& buf, T value) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(u & 0xFF));
    if constexpr (sizeof(T) > 1) u >>= 8;
  }
}

void put_f32(std::string& buf, float f) { put_le(buf, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(p_[i])) << (8 * i);
    }
    p_ += sizeof(T);
    return static_cast<T>(u);
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>("vector payload")); }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(p_, n);
    p_ += n;
    return s;
  }

  bool at_end() const { return p_ == end_; }

 private:
  void need(std::size_t n, const char* what) {
    if (static_cast<std::size_t>(end_ - p_) < n) {
      throw Error("store", std::string("truncated file while reading ") + what);
    }
  }

  const char* p_;
  const char* end_;
};

}  // namespace

std::string PatchKey::to_string() const {
  return slide_id + "(" + std::to_string(row) + "," + std::to_string(col) + ")";
}

void validate_vector(const PatchKey& key, const Eigen::Ref<const Eigen::VectorXf>& vector) {
  if (vector.size() == 0) throw Error("embedding", "empty vector for " + key.to_string());
  for (Eigen::Index i = 0; i < vector.size(); ++i) {
    if (!std::isfinite(vector[i])) {
      throw Error("embedding", "non-finite component " + std::to_string(i) + " in " +
                                   key.to_string());
    }
  }
  // Accumulate in double so tiny-but-nonzero vectors are not rounded to zero norm.
  if (vector.cast<double>().squaredNorm() == 0.0) {
    throw Error("embedding", "zero-norm vector for " + key.to_string());
  }
}

PatchEmbedding make_embedding(PatchKey key, Eigen::VectorXf vector) {
  validate_vector(key, vector);
  return {std::move(key), std::move(vector)};
}

EmbeddingStore::EmbeddingStore(int dim, Magnification mag) : dim_(dim), mag_(mag) {
  if (dim <= 0) throw Error("store", "dimension must be positive");
}

void EmbeddingStore::add(PatchEmbedding embedding) {
  if (embedding.vector.size() != dim_) {
    throw Error("store", "dimension mismatch for " + embedding.key.to_string() + ": expected " +
                             std::to_string(dim_) + ", got " +
                             std::to_string(embedding.vector.size()));
  }
  validate_vector(embedding.key, embedding.vector);
  const std::size_t index = records_.size();
  if (!by_key_.emplace(embedding.key, index).second) {
    throw Error("store", "duplicate key " + embedding.key.to_string());
  }
  auto [it, inserted] = by_slide_.try_emplace(embedding.key.slide_id);
  if (inserted) slide_order_.push_back(embedding.key.slide_id);
  it->second.push_back(index);
  records_.push_back(std::move(embedding));
}

bool EmbeddingStore::contains_slide(const std::string& slide_id) const {
  return by_slide_.contains(slide_id);
}

const std::vector<std::size_t>& EmbeddingStore::indices_for(const std::string& slide_id) const {
  static const std::vector<std::size_t> kNone;
  auto it = by_slide_.find(slide_id);
  return it == by_slide_.end() ? kNone : it->second;
}

std::vector<PatchEmbedding> EmbeddingStore::embeddings_for(const std::string& slide_id) const {
  std::vector<PatchEmbedding> out;
  for (std::size_t i : indices_for(slide_id)) out.push_back(records_[i]);
  return out;
}

Eigen::MatrixXf EmbeddingStore::matrix_for(const std::string& slide_id) const {
  const auto& idx = indices_for(slide_id);
  Eigen::MatrixXf m(static_cast<Eigen::Index>(idx.size()), dim_);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    m.row(static_cast<Eigen::Index>(r)) = records_[idx[r]].vector.transpose();
  }
  return m;
}

const PatchEmbedding* EmbeddingStore::find(const PatchKey& key) const {
  auto it = by_key_.find(key);
  return it == by_key_.end() ? nullptr : &records_[it->second];
}

bool EmbeddingStore::bit_equal(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || mag_ != other.mag_ || records_.size() != other.records_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& a = records_[i];
    const auto& b = other.records_[i];
    if (a.key != b.key) return false;
    if (std::memcmp(a.vector.data(), b.vector.data(), sizeof(float) * dim_) != 0) return false;
  }
  return true;
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(23 + store.size() * (16 + 4 * static_cast<std::size_t>(store.dim())));
  buf.append(kMagic, 4);
  put_le<std::uint16_t>(buf, kStoreVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(store.dim()));
  put_le<std::uint8_t>(buf, store.magnification().code());
  put_le<std::uint64_t>(buf, store.size());
  for (const auto& rec : store.records()) {
    if (rec.key.slide_id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error("store", "slide_id too long: " + rec.key.slide_id.substr(0, 32) + "...");
    }
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(rec.key.slide_id.size()));
    buf.append(rec.key.slide_id);
    put_le<std::uint32_t>(buf, rec.key.row);
    put_le<std::uint32_t>(buf, rec.key.col);
    for (Eigen::Index j = 0; j < rec.vector.size(); ++j) put_f32(buf, rec.vector[j]);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("store", "cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("store", "write failed for '" + path.string() + "'");
}

EmbeddingStore ingest_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("store", "cannot open '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(data.data(), data.size());
  if (r.get_bytes(4, "magic") != std::string(kMagic, 4)) {
    throw Error("store", "bad magic in '" + path.string() + "'");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kStoreVersion) {
    throw Error("store", "unsupported store version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0 || dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw Error("store", "invalid dimension " + std::to_string(dim));
  }
  const auto mag = Magnification::from_code(r.get<std::uint8_t>("magnification"));
  const auto count = r.get<std::uint64_t>("count");

  EmbeddingStore store(static_cast<int>(dim), mag);
  for (std::uint64_t i = 0; i < count; ++i) {
    PatchKey key;
    const auto len = r.get<std::uint16_t>("slide_id length");
    key.slide_id = r.get_bytes(len, "slide_id");
    key.row = r.get<std::uint32_t>("row");
    key.col = r.get<std::uint32_t>("col");
    Eigen::VectorXf v(dim);
    for (std::uint32_t j = 0; j < dim; ++j) v[j] = r.get_f32();
    store.add({std::move(key), std::move(v)});
  }
  if (!r.at_end()) throw Error("store", "trailing bytes after " + std::to_string(count) + " records");
  return store;
}

}  // namespace slidesim
