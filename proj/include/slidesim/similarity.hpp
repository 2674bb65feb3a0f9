#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slidesim/embedding.hpp"
#include "slidesim/error.hpp"

namespace slidesim {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dot products of unit vectors that land within this band of +1 are set to
/// exactly 1. The band is the worst-case accumulation error of a length-`dim`
/// dot product, so two copies of one vector always score exactly 1.
template <typename Scalar>
Scalar unit_snap_band(Eigen::Index dim) {
  return static_cast<Scalar>(std::max<Eigen::Index>(dim, 16)) *
         std::numeric_limits<Scalar>::epsilon();
}

/// Cosine similarity u.v / (|u| |v|), clamped to [-1, 1].
template <typename DerivedU, typename DerivedV>
double cosine(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
  if (u.size() != v.size()) {
    throw Error("similarity", "length mismatch: " + std::to_string(u.size()) + " vs " +
                                  std::to_string(v.size()));
  }
  const auto ud = u.template cast<double>();
  const auto vd = v.template cast<double>();
  const double value = ud.dot(vd) / (ud.norm() * vd.norm());
  if (value >= 1.0 - unit_snap_band<double>(u.size())) return 1.0;
  return std::clamp(value, -1.0, 1.0);
}

/// Rows scaled to unit L2 norm, in `Scalar` precision. Computing this once per
/// slide turns every pairwise cosine into a plain dot product.
template <typename Scalar = double, typename Derived>
RowMatrix<Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& rows) {
  RowMatrix<Scalar> out = rows.template cast<Scalar>();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = out.row(i).norm();
    if (!(norm > Scalar(0))) {
      throw Error("similarity", "zero-norm row " + std::to_string(i));
    }
    out.row(i) /= norm;
  }
  return out;
}

/// Dense n_q x n_r cosine matrix from already-normalised rows, computed as one
/// GEMM followed by clamping to [-1, 1].
template <typename DerivedQ, typename DerivedR>
auto cosine_matrix_normalized(const Eigen::MatrixBase<DerivedQ>& q_unit,
                              const Eigen::MatrixBase<DerivedR>& r_unit) {
  using Scalar = typename DerivedQ::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedR::Scalar>, "mixed scalar types");
  if (q_unit.rows() == 0 || r_unit.rows() == 0) {
    throw Error("similarity", "empty patch set (fully background slide?)");
  }
  if (q_unit.cols() != r_unit.cols()) {
    throw Error("similarity", "dimension mismatch: " + std::to_string(q_unit.cols()) + " vs " +
                                  std::to_string(r_unit.cols()));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> s(q_unit.rows(), r_unit.rows());
  s.noalias() = q_unit * r_unit.transpose();
  const Scalar snap = Scalar(1) - unit_snap_band<Scalar>(q_unit.cols());
  s = s.unaryExpr([snap](Scalar x) {
    return x >= snap ? Scalar(1) : std::clamp(x, Scalar(-1), Scalar(1));
  });
  return s;
}

/// s_ij = cos(q_i, r_j) for row-per-patch matrices `q` and `r`.
template <typename Scalar = double, typename DerivedQ, typename DerivedR>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cosine_matrix(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedR>& r) {
  if (q.rows() == 0 || r.rows() == 0) {
    throw Error("similarity", "empty patch set (fully background slide?)");
  }
  if (q.cols() != r.cols()) {
    throw Error("similarity", "dimension mismatch: " + std::to_string(q.cols()) + " vs " +
                                  std::to_string(r.cols()));
  }
  return cosine_matrix_normalized(normalize_rows<Scalar>(q), normalize_rows<Scalar>(r));
}

/// Set-to-set aggregation of a similarity matrix:
///   1/2 * [ mean_j max_i s_ij + mean_i max_j s_ij ].
/// Symmetric under transposition and equal to 1 when every row and column
/// attains 1.
template <typename Derived>
double aggregate_similarity(const Eigen::MatrixBase<Derived>& s) {
  if (s.rows() == 0 || s.cols() == 0) throw Error("similarity", "empty similarity matrix");
  const double column_term = s.colwise().maxCoeff().template cast<double>().mean();
  const double row_term = s.rowwise().maxCoeff().template cast<double>().mean();
  return 0.5 * (column_term + row_term);
}

/// Patch-pair similarities between a query slide (rows) and a reference slide (columns).
struct SimilarityMatrix {
  std::string query_id;
  std::string reference_id;
  Eigen::MatrixXd values;

  Eigen::Index n_q() const { return values.rows(); }
  Eigen::Index n_r() const { return values.cols(); }
};

struct SlideSimilarity {
  std::string query_id;
  std::string reference_id;
  double value = 0.0;
};

/// Builds the matrix from two embedding lists (stored order gives row/column order).
SimilarityMatrix similarity_matrix(std::span<const PatchEmbedding> q,
                                   std::span<const PatchEmbedding> r);

SlideSimilarity slide_similarity(const SimilarityMatrix& m);

/// Whole-slide comparison of two slides in one store (or two stores of one dimension).
SlideSimilarity compare_slides(const EmbeddingStore& q_store, const std::string& query_id,
                               const EmbeddingStore& r_store, const std::string& reference_id);
SlideSimilarity compare_slides(std::span<const PatchEmbedding> q, std::span<const PatchEmbedding> r);

/// Writes u32 n_q, u32 n_r, then n_q*n_r f32, all little-endian, row-major.
void write_matrix(const SimilarityMatrix& m, const std::filesystem::path& path);
SimilarityMatrix read_matrix(const std::filesystem::path& path);

}  // namespace slidesim
