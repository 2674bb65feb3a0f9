#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "slidesim/embedding.hpp"
#include "slidesim/error.hpp"

namespace slidesim {

/// Means with magnitude below this get cv = -inf (never selected over a finite cv).
inline constexpr double kCvMeanGuard = 1e-12;

/// Corpus-level feature statistics and the selected coordinates.
struct ReductionStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population standard deviation
  Eigen::VectorXd cv;   // std / mean, guarded
  std::vector<int> selected_indices;  // ascending
  std::int64_t n = 0;
  std::optional<Magnification> magnification;

  int s_f() const { return static_cast<int>(mean.size()); }
  int n_f() const { return static_cast<int>(selected_indices.size()); }
};

/// Indices of the `n_f` largest cv values (ties: lower index first), returned ascending.
inline std::vector<int> select_top_cv(const Eigen::Ref<const Eigen::VectorXd>& cv, int n_f) {
  if (n_f <= 0 || n_f > cv.size()) {
    throw Error("reduce", "n_f must lie in [1, " + std::to_string(cv.size()) + "], got " +
                              std::to_string(n_f));
  }
  std::vector<int> order(static_cast<std::size_t>(cv.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cv[a] > cv[b]; });
  order.resize(static_cast<std::size_t>(n_f));
  std::sort(order.begin(), order.end());
  return order;
}

/// Two-pass mean / population std / coefficient of variation over the rows of
/// `samples` (one row per patch), then top-`n_f` selection.
///
/// The deviation uses squared differences, sqrt((1/n) sum (d_i - mean)^2); the
/// unsquared form can go negative under the root.
template <typename Derived>
ReductionStats compute_stats(const Eigen::MatrixBase<Derived>& samples, int n_f) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw Error("reduce", "need at least 2 embeddings, got " + std::to_string(n));
  const Eigen::Index dim = samples.cols();

  ReductionStats stats;
  stats.n = n;
  stats.mean = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    stats.mean += samples.row(i).transpose().template cast<double>();
  }
  stats.mean /= static_cast<double>(n);

  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    sq += (samples.row(i).transpose().template cast<double>() - stats.mean).array().square().matrix();
  }
  stats.std = (sq / static_cast<double>(n)).array().sqrt().matrix();

  stats.cv.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    stats.cv[j] = std::abs(stats.mean[j]) < kCvMeanGuard
                      ? -std::numeric_limits<double>::infinity()
                      : stats.std[j] / stats.mean[j];
  }
  stats.selected_indices = select_top_cv(stats.cv, n_f);
  return stats;
}

/// Statistics over a list of embeddings; all vectors must share one length.
ReductionStats compute_stats(std::span<const PatchEmbedding> embeddings, int n_f);
/// Statistics over every record of a store (the corpus at one magnification).
ReductionStats compute_stats(const EmbeddingStore& store, int n_f);

/// Column projection onto `indices`: component k of each output row is
/// column indices[k] of the input.
template <typename Derived>
auto project_columns(const Eigen::MatrixBase<Derived>& rows, const std::vector<int>& indices) {
  return rows(Eigen::all, indices);
}

/// Keeps the selected coordinates of every embedding; keys and order preserved.
std::vector<PatchEmbedding> reduce(std::span<const PatchEmbedding> embeddings,
                                   const ReductionStats& stats);
EmbeddingStore reduce(const EmbeddingStore& store, const ReductionStats& stats);

/// JSON with `mean`, `std`, `cv`, `selected_indices`, `n`, `s_f`, `n_f`,
/// `magnification`. A -inf cv is written as null.
void write_stats(const ReductionStats& stats, const std::filesystem::path& path);
ReductionStats read_stats(const std::filesystem::path& path);

}  // namespace slidesim
