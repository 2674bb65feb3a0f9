#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>

#include "slidesim/backend.hpp"
#include "slidesim/embedding.hpp"
#include "slidesim/error.hpp"
#include "slidesim/oracle.hpp"
#include "test_util.hpp"

using namespace slidesim;

namespace {

const Magnification k5x = Magnification::parse("5x");

EmbeddingStore random_store(std::mt19937_64& rng, int n, int dim) {
  EmbeddingStore store(dim, k5x);
  for (int i = 0; i < n; ++i) {
    store.add({{"slide-" + std::to_string(i % 7), static_cast<std::uint32_t>(i / 7),
                static_cast<std::uint32_t>(i % 3)},
               test::random_vector(rng, dim)});
  }
  return store;
}

// Hand-assembled SLEM bytes for malformed-input tests.
struct RawStore {
  std::string bytes;

  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void header(std::uint32_t dim, std::uint64_t count, std::uint16_t version = 1) {
    bytes = "SLEM";
    put<std::uint16_t>(version);
    put<std::uint32_t>(dim);
    put<std::uint8_t>(10);
    put<std::uint64_t>(count);
  }
  void record(const std::string& id, std::uint32_t row, std::uint32_t col, std::vector<float> v) {
    put<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    bytes += id;
    put(row);
    put(col);
    for (float f : v) put(std::bit_cast<std::uint32_t>(f));
  }
  void save(const std::filesystem::path& p) const {
    std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
};

}  // namespace

TEST_CASE("embedding invariants") {
  CHECK_NOTHROW(make_embedding({"S", 0, 0}, Eigen::VectorXf::Ones(4)));
  CHECK_THROWS_WITH_AS(make_embedding({"S", 1, 2}, Eigen::VectorXf::Zero(4)), doctest::Contains("zero-norm"), Error);
  Eigen::VectorXf v = Eigen::VectorXf::Ones(4);
  v[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(make_embedding({"S", 1, 2}, v), doctest::Contains("S(1,2)"), Error);
  v[2] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(make_embedding({"S", 1, 2}, v), Error);
  // Tiny but non-zero: squared norm underflows in f32, not in f64.
  CHECK_NOTHROW(make_embedding({"S", 0, 0}, Eigen::VectorXf::Constant(3, 1e-30f)));
}

TEST_CASE("EmbeddingStore bookkeeping") {
  EmbeddingStore store(3, k5x);
  store.add({{"B", 0, 0}, Eigen::Vector3f(1, 0, 0)});
  store.add({{"A", 0, 1}, Eigen::Vector3f(0, 1, 0)});
  store.add({{"B", 2, 1}, Eigen::Vector3f(0, 0, 1)});
  CHECK(store.size() == 3);
  CHECK(store.slide_ids() == std::vector<std::string>{"B", "A"});
  CHECK(store.embeddings_for("B").size() == 2);
  CHECK(store.matrix_for("B").rows() == 2);
  CHECK(store.matrix_for("B")(1, 2) == 1.0f);
  CHECK(store.find({"A", 0, 1}) != nullptr);
  CHECK(store.find({"A", 9, 9}) == nullptr);
  CHECK(store.embeddings_for("Z").empty());

  CHECK_THROWS_WITH_AS(store.add({{"B", 0, 0}, Eigen::Vector3f(1, 1, 1)}), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_WITH_AS(store.add({{"C", 0, 0}, Eigen::Vector2f(1, 1)}), doctest::Contains("dimension"), Error);
  CHECK_THROWS_AS(EmbeddingStore(0, k5x), Error);
}

TEST_CASE("store file round trip") {
  test::TempDir dir;
  std::mt19937_64 rng(99);

  SUBCASE("three records of dim 2048") {
    auto store = random_store(rng, 3, 2048);
    write_store(store, dir / "s.slem");
    auto back = ingest_embeddings(dir / "s.slem");
    CHECK(back.size() == 3);
    CHECK(back.dim() == 2048);
    CHECK(back.magnification() == k5x);
    CHECK(back.bit_equal(store));
  }

  SUBCASE("empty store keeps a valid header") {
    EmbeddingStore empty(128, Magnification::parse("2.5x"));
    write_store(empty, dir / "e.slem");
    CHECK(std::filesystem::file_size(dir / "e.slem") == 4 + 2 + 4 + 1 + 8);
    auto back = ingest_embeddings(dir / "e.slem");
    CHECK(back.empty());
    CHECK(back.dim() == 128);
    CHECK(back.magnification().label() == "2.5x");
  }

  SUBCASE("payload is little-endian f32") {
    EmbeddingStore s(4, k5x);
    s.add({{"S1", 3, 5}, Eigen::Vector4f(1, 0, 0, 0)});
    write_store(s, dir / "one.slem");
    const std::string bytes = test::read_file(dir / "one.slem");
    REQUIRE(bytes.size() == 19 + 2 + 2 + 4 + 4 + 16);
    CHECK(bytes.substr(0, 4) == "SLEM");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version
    CHECK(static_cast<unsigned char>(bytes[6]) == 4);  // dim
    CHECK(static_cast<unsigned char>(bytes[10]) == 10);  // 5x code
    CHECK(static_cast<unsigned char>(bytes[11]) == 1);  // count
    CHECK(bytes.substr(19, 2) == std::string("\x02\x00", 2));
    CHECK(bytes.substr(21, 2) == "S1");
    CHECK(static_cast<unsigned char>(bytes[23]) == 3);
    CHECK(static_cast<unsigned char>(bytes[27]) == 5);
    // 1.0f = 0x3F800000
    CHECK(bytes.substr(31, 4) == std::string("\x00\x00\x80\x3F", 4));
    CHECK(bytes.substr(35, 12) == std::string(12, '\0'));
  }

  SUBCASE("10,000 random records") {
    auto store = random_store(rng, 10000, 16);
    write_store(store, dir / "big.slem");
    CHECK(ingest_embeddings(dir / "big.slem").bit_equal(store));
  }

  SUBCASE("negative zero survives bit-exactly") {
    EmbeddingStore s(2, k5x);
    s.add({{"S", 0, 0}, Eigen::Vector2f(-0.0f, 1.0f)});
    write_store(s, dir / "z.slem");
    auto back = ingest_embeddings(dir / "z.slem");
    CHECK(std::signbit(back.records()[0].vector[0]));
  }
}

TEST_CASE("ingest rejects malformed files") {
  test::TempDir dir;
  RawStore raw;

  SUBCASE("NaN component names the key") {
    raw.header(2, 2);
    raw.record("good", 0, 0, {1.0f, 2.0f});
    raw.record("bad", 4, 7, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    raw.save(dir / "nan.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "nan.slem"), doctest::Contains("bad(4,7)"), Error);
  }
  SUBCASE("zero-norm vector") {
    raw.header(2, 1);
    raw.record("z", 0, 0, {0.0f, 0.0f});
    raw.save(dir / "zero.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "zero.slem"), doctest::Contains("zero-norm"), Error);
  }
  SUBCASE("duplicate key") {
    raw.header(1, 2);
    raw.record("d", 1, 1, {1.0f});
    raw.record("d", 1, 1, {2.0f});
    raw.save(dir / "dup.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "dup.slem"), doctest::Contains("duplicate"), Error);
  }
  SUBCASE("bad magic") {
    raw.header(1, 0);
    raw.bytes[0] = 'X';
    raw.save(dir / "magic.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "magic.slem"), doctest::Contains("magic"), Error);
  }
  SUBCASE("unknown version") {
    raw.header(1, 0, 7);
    raw.save(dir / "ver.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "ver.slem"), doctest::Contains("version"), Error);
  }
  SUBCASE("count larger than payload (dim mismatch)") {
    raw.header(3, 1);
    raw.record("short", 0, 0, {1.0f, 2.0f});
    raw.save(dir / "short.slem");
    CHECK_THROWS_WITH_AS(ingest_embeddings(dir / "short.slem"), doctest::Contains("truncated"), Error);
  }
  SUBCASE("trailing bytes") {
    raw.header(1, 1);
    raw.record("t", 0, 0, {1.0f});
    raw.bytes += "xx";
    raw.save(dir / "trail.slem");
    CHECK_THROWS_AS(ingest_embeddings(dir / "trail.slem"), Error);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(ingest_embeddings(dir / "nope.slem"), Error); }
}

TEST_CASE("stub backend") {
  StubBackend backend(7);
  CHECK(backend.output_dim() == kFullFeatureDim);
  CHECK(backend.input_size() == 224);

  std::mt19937 rng(4);
  PatchPixels patch{PatchRef{"S", k5x, 2, 3, 224}, Raster(224, 224)};
  for (auto& v : patch.data.pixels) v = static_cast<std::uint8_t>(rng());

  const auto a = embed_patch(backend, patch);
  const auto b = embed_patch(backend, patch);
  CHECK(a.vector.size() == 2048);
  CHECK(a.key == PatchKey{"S", 2, 3});
  CHECK(std::memcmp(a.vector.data(), b.vector.data(), 2048 * sizeof(float)) == 0);

  StubBackend same_seed(7);
  CHECK(embed_patch(same_seed, patch).vector == a.vector);
  StubBackend other_seed(8);
  CHECK(embed_patch(other_seed, patch).vector != a.vector);

  PatchPixels small{PatchRef{"S", k5x, 0, 0, 100}, Raster(100, 100)};
  CHECK_THROWS_WITH_AS(embed_patch(backend, small), doctest::Contains("expects 224x224"), Error);

  SUBCASE("similar patches embed closer than dissimilar ones") {
    const auto pink = test::uniform_raster(224, 224, 190, 90, 150);
    auto pink2 = pink;
    pink2.at(10, 10)[0] = 200;
    const auto blue = test::uniform_raster(224, 224, 80, 120, 170);
    auto cos = [](const Eigen::VectorXf& x, const Eigen::VectorXf& y) { return x.dot(y) / (x.norm() * y.norm()); };
    const auto e1 = backend.infer({PatchRef{}, pink});
    const auto e2 = backend.infer({PatchRef{}, pink2});
    const auto e3 = backend.infer({PatchRef{}, blue});
    CHECK(cos(e1, e2) > cos(e1, e3));
  }
}

TEST_CASE("precomputed backend") {
  auto store = std::make_shared<EmbeddingStore>(3, k5x);
  store->add({{"S", 0, 1}, Eigen::Vector3f(1, 2, 3)});
  PrecomputedBackend backend(store);
  PatchPixels patch{PatchRef{"S", k5x, 0, 1, 224}, Raster(224, 224)};
  CHECK(embed_patch(backend, patch).vector == Eigen::Vector3f(1, 2, 3));
  patch.ref.col = 5;
  CHECK_THROWS_WITH_AS(embed_patch(backend, patch), doctest::Contains("S(0,5)"), Error);
}

TEST_CASE("backend factory") {
  BackendOptions opts;
  opts.seed = 3;
  opts.stub_dim = 64;
  auto factory = make_backend_factory(opts);
  CHECK(factory()->output_dim() == 64);
  CHECK(parse_backend_kind("onnx") == BackendKind::kOnnx);
  CHECK_THROWS_AS(parse_backend_kind("torch"), Error);

  opts.kind = BackendKind::kPrecomputed;
  CHECK_THROWS_AS(make_backend_factory(opts), Error);

  opts.kind = BackendKind::kOnnx;
  CHECK_THROWS_AS(make_backend_factory(opts), Error);  // no --model
  if (!onnx_backend_available()) {
    opts.model = "model.onnx";
    CHECK_THROWS_WITH_AS(make_backend_factory(opts), doctest::Contains("ONNX Runtime"), Error);
  }
}

TEST_CASE("preprocessing metadata") {
  test::TempDir dir;
  std::ofstream(dir / "preprocess.json")
      << R"({"input_name":"x","output_name":"y","scale":0.00392156862745098,)"
      << R"("mean":[0.485,0.456,0.406],"std":[0.229,0.224,0.225],"layout":"NCHW","output_dim":2048})";
  const auto spec = load_preprocess(dir / "preprocess.json");
  CHECK(spec.input_name == "x");
  CHECK(spec.output_dim == 2048);

  Raster img = test::uniform_raster(2, 2, 255, 0, 128);
  const auto t = preprocess_nchw(img, spec);
  REQUIRE(t.size() == 12);
  CHECK(t[0] == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-6));
  CHECK(t[4] == doctest::Approx((0.0 - 0.456) / 0.224).epsilon(1e-6));
  CHECK(t[11] == doctest::Approx((128.0 / 255.0 - 0.406) / 0.225).epsilon(1e-6));

  std::ofstream(dir / "bad.json") << R"({"layout":"NHWC"})";
  CHECK_THROWS_AS(load_preprocess(dir / "bad.json"), Error);
}

TEST_CASE("oracle records and fixture integrity") {
  test::TempDir dir;
  Raster fixture = test::uniform_raster(224, 224, 12, 34, 56);
  const std::string checksum = fixture_checksum(fixture);
  CHECK(checksum.size() == 64);
  CHECK(sha256_hex(std::span<const std::uint8_t>()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

  {
    std::ofstream out(dir / "oracles.jsonl");
    out << R"({"fixture_name":"f0","input_checksum":")" << checksum << R"(","vector":[0.0,1.5,2.25]})" << '\n';
    out << R"({"fixture_name":"f1","input_checksum":"00","vector":[3.0]})" << '\n';
  }
  const auto oracles = load_oracles(dir / "oracles.jsonl");
  REQUIRE(oracles.size() == 2);
  CHECK(oracles[0].fixture_name == "f0");
  CHECK(oracles[0].vector == Eigen::Vector3f(0.0f, 1.5f, 2.25f));
  CHECK(oracles[0].input_checksum == checksum);

  SUBCASE("tampered fixture byte changes the checksum") {
    Raster tampered = fixture;
    tampered.pixels[1000] ^= 1;
    CHECK(fixture_checksum(tampered) != oracles[0].input_checksum);
  }

  SUBCASE("relative tolerance") {
    const Eigen::Vector3f oracle(0.0f, 1.5f, 2.25f);
    CHECK(compare_to_oracle(oracle, oracle).ok);
    Eigen::Vector3f near = oracle;
    near[2] *= 1.0f + 5e-5f;
    CHECK(compare_to_oracle(near, oracle).ok);
    Eigen::Vector3f far = oracle;
    far[1] *= 1.0f + 3e-4f;
    const auto r = compare_to_oracle(far, oracle);
    CHECK_FALSE(r.ok);
    CHECK(r.worst_index == 1);
    CHECK_THROWS_AS(compare_to_oracle(Eigen::Vector2f(1, 2), oracle), Error);
  }

  std::ofstream(dir / "broken.jsonl") << "{not json}\n";
  CHECK_THROWS_AS(load_oracles(dir / "broken.jsonl"), Error);
}

// Runs only when an exported model and its oracles are supplied, e.g.
//   SLIDESIM_ORACLE_DIR=/path/with/model.onnx,preprocess.json,oracles.jsonl,fixtures/
TEST_CASE("onnx backend reproduces exported oracle embeddings") {
  const char* env = std::getenv("SLIDESIM_ORACLE_DIR");
  if (!env || !onnx_backend_available()) {
    MESSAGE("skipped: needs SLIDESIM_ORACLE_DIR and an ONNX Runtime build");
    return;
  }
  const std::filesystem::path root(env);
  auto backend = make_onnx_backend(root / "model.onnx", root / "preprocess.json");
  for (const auto& oracle : load_oracles(root / "oracles.jsonl")) {
    const Raster fixture = read_png(root / "fixtures" / (oracle.fixture_name + ".png"));
    REQUIRE(fixture_checksum(fixture) == oracle.input_checksum);
    CHECK((oracle.vector.array() >= 0.0f).all());
    const auto result = compare_to_oracle(backend->infer({PatchRef{}, fixture}), oracle.vector);
    CHECK_MESSAGE(result.ok, oracle.fixture_name << " worst component " << result.worst_index);
  }
}
