#include "slidesim/search.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>

#include "slidesim/error.hpp"
#include "slidesim/parallel.hpp"

namespace slidesim {
namespace {

// Eigen parallelises large products itself; with several pair workers that
// would oversubscribe, so GEMMs run single-threaded while the pool is active.
class ScopedEigenThreads {
 public:
  explicit ScopedEigenThreads(int n) : saved_(Eigen::nbThreads()) { Eigen::setNbThreads(n); }
  ~ScopedEigenThreads() { Eigen::setNbThreads(saved_); }
  ScopedEigenThreads(const ScopedEigenThreads&) = delete;
  ScopedEigenThreads& operator=(const ScopedEigenThreads&) = delete;

 private:
  int saved_;
};

void sort_neighbors(std::vector<Neighbor>& neighbors) {
  std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.reference_id < b.reference_id;
  });
}

std::string top_key(int k) { return "top-" + std::to_string(k); }

}  // namespace

SlideCorpus::SlideCorpus(const EmbeddingStore& store, std::vector<std::string> expected_ids)
    : mag_(store.magnification()) {
  if (expected_ids.empty()) expected_ids = store.slide_ids();
  std::set<std::string> expected(expected_ids.begin(), expected_ids.end());
  for (const auto& id : store.slide_ids()) {
    if (!expected.contains(id)) {
      throw Error("search", "store slide '" + id + "' is not part of the corpus");
    }
  }
  for (const auto& id : expected_ids) {
    if (!store.contains_slide(id)) {
      excluded_.push_back(id);
      continue;
    }
    ids_.push_back(id);
    unit_rows_.push_back(normalize_rows<double>(store.matrix_for(id)));
  }
}

int SlideCorpus::index_of(const std::string& slide_id) const {
  auto it = std::find(ids_.begin(), ids_.end(), slide_id);
  return it == ids_.end() ? -1 : static_cast<int>(it - ids_.begin());
}

double SlideCorpus::similarity(std::size_t i, std::size_t j) const {
  return aggregate_similarity(cosine_matrix_normalized(unit_rows_.at(i), unit_rows_.at(j)));
}

Eigen::MatrixXd pairwise_similarities(const SlideCorpus& corpus, int workers) {
  const std::size_t n = corpus.size();
  Eigen::MatrixXd table = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(n));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::optional<ScopedEigenThreads> single;
  if (workers > 1 && pairs.size() > 1) single.emplace(1);
  parallel_for(pairs.size(), workers, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    const double v = corpus.similarity(i, j);
    table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    table(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
  });
  return table;
}

RankedResult rank_from_table(const SlideCorpus& corpus, const Eigen::MatrixXd& table,
                             std::size_t query_index) {
  RankedResult result;
  result.query_id = corpus.slide_ids().at(query_index);
  result.magnification = corpus.magnification();
  result.excluded = corpus.excluded();
  for (std::size_t j = 0; j < corpus.size(); ++j) {
    if (j == query_index) continue;
    result.neighbors.push_back(
        {corpus.slide_ids()[j],
         table(static_cast<Eigen::Index>(query_index), static_cast<Eigen::Index>(j))});
  }
  sort_neighbors(result.neighbors);
  return result;
}

RankedResult rank_all(const SlideCorpus& corpus, const std::string& query_id) {
  const int q = corpus.index_of(query_id);
  if (q < 0) {
    const auto& ex = corpus.excluded();
    if (std::find(ex.begin(), ex.end(), query_id) != ex.end()) {
      throw Error("search", "query '" + query_id + "' has no tissue patches");
    }
    throw Error("search", "query '" + query_id + "' is not in the corpus");
  }
  if (corpus.size() < 2) throw Error("search", "corpus needs at least 2 slides with tissue");

  RankedResult result;
  result.query_id = query_id;
  result.magnification = corpus.magnification();
  result.excluded = corpus.excluded();
  for (std::size_t j = 0; j < corpus.size(); ++j) {
    if (static_cast<int>(j) == q) continue;
    result.neighbors.push_back({corpus.slide_ids()[j], corpus.similarity(static_cast<std::size_t>(q), j)});
  }
  sort_neighbors(result.neighbors);
  return result;
}

bool top_k_hit(const RankedResult& result, const std::map<std::string, std::string>& labels, int k) {
  if (k < 1) throw Error("search", "k must be at least 1");
  if (result.neighbors.empty()) throw Error("search", "no neighbours to score");
  auto label_of = [&](const std::string& id) -> const std::string& {
    auto it = labels.find(id);
    if (it == labels.end()) throw Error("search", "unknown slide_id '" + id + "' in labels");
    return it->second;
  };
  const std::string& query_label = label_of(result.query_id);
  const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), result.neighbors.size());
  bool hit = false;
  for (std::size_t i = 0; i < depth; ++i) {
    // Look up every neighbour in the window so unknown ids are always reported.
    if (label_of(result.neighbors[i].reference_id) == query_label) hit = true;
  }
  return hit;
}

const MagnificationSummary& SearchReport::summary(Magnification mag) const {
  for (const auto& s : summaries) {
    if (s.magnification == mag) return s;
  }
  throw Error("search", "no results for " + mag.label());
}

double SearchReport::accuracy(Magnification mag, int k) const {
  const auto& s = summary(mag);
  auto it = s.accuracy.find(k);
  if (it == s.accuracy.end()) throw Error("search", "top-" + std::to_string(k) + " not evaluated");
  return it->second;
}

SearchReport evaluate(const std::vector<SlideRecord>& manifest,
                      const std::map<Magnification, EmbeddingStore>& stores,
                      const std::vector<int>& ks, int workers) {
  if (manifest.empty()) throw Error("evaluate", "empty corpus");
  if (stores.empty()) throw Error("evaluate", "no embedding stores given");
  if (ks.empty()) throw Error("evaluate", "no k values given");
  for (int k : ks) {
    if (k < 1) throw Error("evaluate", "k must be at least 1");
  }

  std::map<std::string, std::string> labels;
  std::vector<std::string> ids;
  for (const auto& slide : manifest) {
    labels[slide.slide_id] = slide.label;
    ids.push_back(slide.slide_id);
  }

  SearchReport report;
  report.ks = ks;
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());

  for (const auto& [mag, store] : stores) {
    if (store.magnification() != mag) {
      throw Error("evaluate", "store given for " + mag.label() + " holds " +
                                  store.magnification().label() + " embeddings");
    }
    SlideCorpus corpus(store, ids);
    if (corpus.size() < 2) {
      throw Error("evaluate", "fewer than 2 slides with tissue at " + mag.label());
    }
    const Eigen::MatrixXd table = pairwise_similarities(corpus, workers);

    MagnificationSummary summary;
    summary.magnification = mag;
    summary.feature_dim = store.dim();
    summary.corpus_size = static_cast<int>(corpus.size());
    summary.excluded = corpus.excluded();
    std::map<int, int> hit_counts;
    for (std::size_t q = 0; q < corpus.size(); ++q) {
      RankedResult ranked = rank_from_table(corpus, table, q);
      QueryOutcome outcome;
      outcome.magnification = mag;
      outcome.query_id = ranked.query_id;
      outcome.label = labels.at(ranked.query_id);
      for (int k : report.ks) {
        const bool hit = top_k_hit(ranked, labels, k);
        outcome.hits[k] = hit;
        hit_counts[k] += hit ? 1 : 0;
      }
      outcome.neighbors = std::move(ranked.neighbors);
      report.per_query.push_back(std::move(outcome));
    }
    for (int k : report.ks) {
      summary.accuracy[k] = static_cast<double>(hit_counts[k]) / summary.corpus_size;
    }
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

nlohmann::json report_to_json(const SearchReport& report) {
  using nlohmann::json;
  json doc;
  doc["format_version"] = kReportVersion;
  doc["top_k"] = report.ks;
  json accuracy = json::object();
  json corpus = json::object();
  for (const auto& s : report.summaries) {
    json row = json::object();
    for (const auto& [k, acc] : s.accuracy) row[top_key(k)] = acc;
    accuracy[s.magnification.label()] = row;
    corpus[s.magnification.label()] = {{"feature_dim", s.feature_dim},
                                       {"corpus_size", s.corpus_size},
                                       {"excluded", s.excluded}};
  }
  doc["accuracy"] = accuracy;
  doc["corpus"] = corpus;
  json queries = json::array();
  for (const auto& q : report.per_query) {
    json hits = json::object();
    for (const auto& [k, hit] : q.hits) hits[top_key(k)] = hit;
    json neighbors = json::array();
    for (const auto& n : q.neighbors) {
      neighbors.push_back({{"reference_id", n.reference_id}, {"similarity", n.similarity}});
    }
    queries.push_back({{"magnification", q.magnification.label()},
                       {"query_id", q.query_id},
                       {"label", q.label},
                       {"hits", hits},
                       {"neighbors", neighbors}});
  }
  doc["queries"] = queries;
  return doc;
}

void write_report(const SearchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("evaluate", "cannot write report '" + path.string() + "'");
  out << report_to_json(report).dump(2) << '\n';
  if (!out) throw Error("evaluate", "write failed for '" + path.string() + "'");
}

}  // namespace slidesim
