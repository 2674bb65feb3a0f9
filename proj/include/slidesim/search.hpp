#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "slidesim/embedding.hpp"
#include "slidesim/similarity.hpp"
#include "slidesim/slide_io.hpp"

namespace slidesim {

inline constexpr int kReportVersion = 1;

struct Neighbor {
  std::string reference_id;
  double similarity = 0.0;
};

/// Every other slide ordered by decreasing similarity, ties by reference_id.
struct RankedResult {
  std::string query_id;
  Magnification magnification;
  std::vector<Neighbor> neighbors;
  /// Corpus slides without tissue patches; never ranked.
  std::vector<std::string> excluded;
};

/// One magnification's slides with unit-normalised patch matrices, built once
/// so that every pair comparison is a single GEMM.
class SlideCorpus {
 public:
  /// `expected_ids` lists every slide that should take part (manifest order);
  /// ids with no records in `store` are recorded as excluded. An empty list
  /// means "every slide in the store".
  explicit SlideCorpus(const EmbeddingStore& store, std::vector<std::string> expected_ids = {});

  Magnification magnification() const { return mag_; }
  const std::vector<std::string>& slide_ids() const { return ids_; }
  const std::vector<std::string>& excluded() const { return excluded_; }
  std::size_t size() const { return ids_.size(); }
  /// Index of a slide with tissue, or -1.
  int index_of(const std::string& slide_id) const;

  double similarity(std::size_t i, std::size_t j) const;

 private:
  Magnification mag_;
  std::vector<std::string> ids_;
  std::vector<std::string> excluded_;
  std::vector<RowMatrix<double>> unit_rows_;
};

/// Symmetric table of all slide-pair similarities. Each unordered pair is
/// computed once and mirrored; the diagonal is left at 1.
Eigen::MatrixXd pairwise_similarities(const SlideCorpus& corpus, int workers = 1);

/// Leave-one-out ranking of `query_id` against the rest of the corpus.
RankedResult rank_all(const SlideCorpus& corpus, const std::string& query_id);
RankedResult rank_from_table(const SlideCorpus& corpus, const Eigen::MatrixXd& table,
                             std::size_t query_index);

/// True iff one of the first min(k, |neighbors|) neighbours shares the query's label.
bool top_k_hit(const RankedResult& result, const std::map<std::string, std::string>& labels, int k);

struct QueryOutcome {
  Magnification magnification;
  std::string query_id;
  std::string label;
  std::vector<Neighbor> neighbors;
  std::map<int, bool> hits;  // k -> top-k hit
};

struct MagnificationSummary {
  Magnification magnification;
  int feature_dim = 0;
  int corpus_size = 0;  // queries evaluated
  std::vector<std::string> excluded;
  std::map<int, double> accuracy;  // k -> fraction of queries with a hit
};

struct SearchReport {
  std::vector<int> ks;
  std::vector<MagnificationSummary> summaries;
  std::vector<QueryOutcome> per_query;

  /// Throws if (mag, k) was not evaluated.
  double accuracy(Magnification mag, int k) const;
  const MagnificationSummary& summary(Magnification mag) const;
};

/// Leave-one-out evaluation of every manifest slide at every store's magnification.
SearchReport evaluate(const std::vector<SlideRecord>& manifest,
                      const std::map<Magnification, EmbeddingStore>& stores,
                      const std::vector<int>& ks, int workers = 1);

/// Report layout: `accuracy` keyed by magnification then `top-k`, plus
/// per-magnification corpus info and per-query rankings. Output is a pure
/// function of the report, so identical inputs give identical bytes.
nlohmann::json report_to_json(const SearchReport& report);
void write_report(const SearchReport& report, const std::filesystem::path& path);

}  // namespace slidesim
