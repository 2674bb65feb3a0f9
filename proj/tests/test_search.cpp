#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "slidesim/search.hpp"
#include "test_util.hpp"

using namespace slidesim;

namespace {

const Magnification k5x = Magnification::parse("5x");

void add_slide(EmbeddingStore& store, const std::vector<PatchEmbedding>& patches) {
  for (const auto& p : patches) store.add(p);
}

std::vector<PatchEmbedding> rename(const std::vector<PatchEmbedding>& patches, const std::string& id) {
  auto out = patches;
  for (auto& p : out) p.key.slide_id = id;
  return out;
}

SlideRecord record(const std::string& id, const std::string& label) {
  SlideRecord r;
  r.slide_id = id;
  r.label = label;
  return r;
}

RankedResult ranked(std::vector<std::string> ids) {
  RankedResult r;
  r.query_id = "q";
  double v = 1.0;
  for (auto& id : ids) r.neighbors.push_back({id, v -= 0.1});
  return r;
}

// Labelled random corpus: every class has its own mean direction.
struct Corpus {
  std::vector<SlideRecord> manifest;
  EmbeddingStore store;
};

Corpus clustered_corpus(std::mt19937_64& rng, int classes, int per_class, int dim, float spread) {
  Corpus c{{}, EmbeddingStore(dim, k5x)};
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (int k = 0; k < classes; ++k) {
    Eigen::VectorXf centre(dim);
    for (int d = 0; d < dim; ++d) centre[d] = normal(rng);
    for (int s = 0; s < per_class; ++s) {
      const std::string id = "C" + std::to_string(k) + "-" + std::to_string(s);
      c.manifest.push_back(record(id, "class" + std::to_string(k)));
      for (std::uint32_t p = 0; p < 6; ++p) {
        Eigen::VectorXf v = centre;
        for (int d = 0; d < dim; ++d) v[d] += spread * normal(rng);
        c.store.add(make_embedding({id, p, 0}, v));
      }
    }
  }
  return c;
}

}  // namespace

TEST_CASE("rank_all examples") {
  std::mt19937_64 rng(1);
  EmbeddingStore store(16, k5x);
  const auto a = test::random_slide(rng, "A", 4, 16);
  add_slide(store, a);
  add_slide(store, test::random_slide(rng, "B", 3, 16));

  SUBCASE("two slides") {
    SlideCorpus corpus(store);
    const auto r = rank_all(corpus, "A");
    REQUIRE(r.neighbors.size() == 1);
    CHECK(r.neighbors[0].reference_id == "B");
    CHECK(r.magnification == k5x);
  }

  SUBCASE("exact duplicate ranks first at 1.0") {
    add_slide(store, test::random_slide(rng, "C", 5, 16));
    add_slide(store, rename(a, "Z-dup"));
    SlideCorpus corpus(store);
    const auto r = rank_all(corpus, "A");
    REQUIRE(r.neighbors.size() == 3);
    CHECK(r.neighbors[0].reference_id == "Z-dup");
    CHECK(r.neighbors[0].similarity == 1.0);
  }

  SUBCASE("errors") {
    SlideCorpus corpus(store);
    CHECK_THROWS_WITH_AS(rank_all(corpus, "nope"), doctest::Contains("not in the corpus"), Error);
    EmbeddingStore single(16, k5x);
    add_slide(single, a);
    CHECK_THROWS_WITH_AS(rank_all(SlideCorpus(single), "A"), doctest::Contains("at least 2"), Error);
  }
}

TEST_CASE("ranking agrees with an all-pairs oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5, dim = 24;
    EmbeddingStore store(dim, k5x);
    std::map<std::string, std::vector<std::vector<double>>> rows;
    for (int s = 0; s < n; ++s) {
      const std::string id = "S" + std::to_string(s);
      const auto slide = test::random_slide(rng, id, std::uniform_int_distribution<int>(1, 8)(rng), dim);
      add_slide(store, slide);
      rows[id] = test::to_rows(slide);
    }
    SlideCorpus corpus(store);
    for (const auto& [qid, qrows] : rows) {
      std::vector<std::pair<double, std::string>> expected;
      for (const auto& [rid, rrows] : rows) {
        if (rid != qid) expected.emplace_back(oracle::slide_similarity(qrows, rrows), rid);
      }
      std::sort(expected.begin(), expected.end(),
                [](const auto& x, const auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
      const auto r = rank_all(corpus, qid);
      REQUIRE(r.neighbors.size() == expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(r.neighbors[i].reference_id == expected[i].second);
        CHECK(r.neighbors[i].similarity == doctest::Approx(expected[i].first).epsilon(1e-12));
        CHECK(r.neighbors[i].reference_id != qid);
      }
    }
  }
}

TEST_CASE("ties break by reference id") {
  EmbeddingStore store(2, k5x);
  store.add({{"Q", 0, 0}, Eigen::Vector2f(1, 0)});
  for (const char* id : {"d", "b", "c", "a"}) store.add({{id, 0, 0}, Eigen::Vector2f(0, 1)});
  const auto r = rank_all(SlideCorpus(store), "Q");
  std::vector<std::string> order;
  for (const auto& n : r.neighbors) order.push_back(n.reference_id);
  CHECK(order == std::vector<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("pairwise table is symmetric with a unit diagonal") {
  std::mt19937_64 rng(3);
  auto c = clustered_corpus(rng, 3, 3, 32, 1.0f);
  SlideCorpus corpus(c.store);
  const auto t1 = pairwise_similarities(corpus, 1);
  const auto t3 = pairwise_similarities(corpus, 3);
  CHECK(t1 == t1.transpose());
  CHECK(t1.diagonal() == Eigen::VectorXd::Ones(9));
  CHECK(t1 == t3);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      if (i != j) CHECK(t1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == doctest::Approx(corpus.similarity(i, j)).epsilon(1e-14));
}

TEST_CASE("top_k_hit examples") {
  const std::map<std::string, std::string> labels{{"q", "A"}, {"x", "B"}, {"y", "A"}, {"z", "B"}, {"w", "B"}};
  CHECK(top_k_hit(ranked({"x", "y", "z"}), labels, 3));
  CHECK_FALSE(top_k_hit(ranked({"x", "z", "w"}), labels, 3));
  CHECK_FALSE(top_k_hit(ranked({"x", "y", "z"}), labels, 1));
  CHECK(top_k_hit(ranked({"x", "y"}), labels, 50));
  CHECK_FALSE(top_k_hit(ranked({"x", "z"}), labels, 50));
  CHECK_THROWS_AS(top_k_hit(ranked({"x", "y"}), labels, 0), Error);
  CHECK_THROWS_WITH_AS(top_k_hit(ranked({"x", "unknown"}), labels, 2), doctest::Contains("unknown"), Error);
}

TEST_CASE("evaluate on duplicated slides is perfect") {
  std::mt19937_64 rng(4);
  const auto master = test::random_slide(rng, "M", 5, 16);
  EmbeddingStore store(16, k5x);
  std::vector<SlideRecord> manifest;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "S" + std::to_string(i);
    add_slide(store, rename(master, id));
    manifest.push_back(record(id, "same"));
  }
  const auto report = evaluate(manifest, {{k5x, store}}, {1, 3, 5});
  for (int k : {1, 3, 5}) CHECK(report.accuracy(k5x, k) == 1.0);
  CHECK(report.summary(k5x).corpus_size == 6);
  CHECK(report.per_query.size() == 6);
}

TEST_CASE("evaluate properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto c = clustered_corpus(rng, 4, 5, 24, 4.0f);  // heavily overlapping classes
    const auto report = evaluate(c.manifest, {{k5x, c.store}}, {5, 1, 3, 3});
    CHECK(report.ks == std::vector<int>{1, 3, 5});
    CHECK(report.accuracy(k5x, 1) <= report.accuracy(k5x, 3));
    CHECK(report.accuracy(k5x, 3) <= report.accuracy(k5x, 5));

    int hits3 = 0;
    for (const auto& q : report.per_query) {
      for (const auto& n : q.neighbors) CHECK(n.reference_id != q.query_id);
      CHECK(q.neighbors.size() == 19);
      hits3 += q.hits.at(3) ? 1 : 0;
    }
    CHECK(report.accuracy(k5x, 3) == static_cast<double>(hits3) / 20.0);
  }

  SUBCASE("well separated classes") {
    auto c = clustered_corpus(rng, 4, 5, 64, 0.3f);
    const auto report = evaluate(c.manifest, {{k5x, c.store}}, {3, 5});
    CHECK(report.accuracy(k5x, 3) == 1.0);
  }
}

TEST_CASE("reports are byte-identical across runs and worker counts") {
  std::mt19937_64 rng(6);
  auto c = clustered_corpus(rng, 3, 4, 16, 1.0f);
  test::TempDir dir;
  write_report(evaluate(c.manifest, {{k5x, c.store}}, {3, 5}, 1), dir / "a.json");
  write_report(evaluate(c.manifest, {{k5x, c.store}}, {3, 5}, 1), dir / "b.json");
  write_report(evaluate(c.manifest, {{k5x, c.store}}, {3, 5}, 4), dir / "c.json");
  const auto a = test::read_file(dir / "a.json");
  CHECK(a == test::read_file(dir / "b.json"));
  CHECK(a == test::read_file(dir / "c.json"));

  const auto j = nlohmann::json::parse(a);
  CHECK(j["format_version"] == kReportVersion);
  CHECK(j["accuracy"]["5x"].contains("top-3"));
  CHECK(j["corpus"]["5x"]["corpus_size"] == 12);
  CHECK(j["queries"].size() == 12);
}

TEST_CASE("slides without tissue are excluded and reported") {
  std::mt19937_64 rng(7);
  auto c = clustered_corpus(rng, 2, 3, 16, 0.5f);
  c.manifest.push_back(record("EMPTY", "class0"));
  const auto report = evaluate(c.manifest, {{k5x, c.store}}, {3});
  const auto& s = report.summary(k5x);
  CHECK(s.excluded == std::vector<std::string>{"EMPTY"});
  CHECK(s.corpus_size == 6);
  for (const auto& q : report.per_query) {
    CHECK(q.query_id != "EMPTY");
    for (const auto& n : q.neighbors) CHECK(n.reference_id != "EMPTY");
  }
  std::vector<std::string> ids;
  for (const auto& r : c.manifest) ids.push_back(r.slide_id);
  CHECK_THROWS_WITH_AS(rank_all(SlideCorpus(c.store, ids), "EMPTY"), doctest::Contains("no tissue"), Error);
}

TEST_CASE("evaluate errors") {
  std::mt19937_64 rng(8);
  auto c = clustered_corpus(rng, 2, 2, 8, 0.5f);
  CHECK_THROWS_WITH_AS(evaluate({}, {{k5x, c.store}}, {3}), doctest::Contains("empty corpus"), Error);
  CHECK_THROWS_WITH_AS(evaluate(c.manifest, {}, {3}), doctest::Contains("no embedding stores"), Error);
  CHECK_THROWS_AS(evaluate(c.manifest, {{k5x, c.store}}, {0}), Error);
  CHECK_THROWS_WITH_AS(evaluate(c.manifest, {{Magnification::parse("1x"), c.store}}, {3}),
                       doctest::Contains("holds 5x"), Error);
  auto partial = c.manifest;
  partial.pop_back();
  CHECK_THROWS_WITH_AS(evaluate(partial, {{k5x, c.store}}, {3}), doctest::Contains("not part of the corpus"), Error);
  CHECK_THROWS_AS(evaluate(c.manifest, {{k5x, c.store}}, {3}).accuracy(k5x, 5), Error);
}
