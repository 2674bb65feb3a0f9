#include "slidesim/reduction.hpp"

#include <fstream>

#include <json.hpp>

namespace slidesim {
namespace {

// Adapts a list of embeddings to the row-access interface compute_stats expects.
Eigen::MatrixXf stack_rows(std::span<const PatchEmbedding> embeddings) {
  if (embeddings.empty()) return {};
  const Eigen::Index dim = embeddings.front().vector.size();
  Eigen::MatrixXf m(static_cast<Eigen::Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].vector.size() != dim) {
      throw Error("reduce", "length mismatch at " + embeddings[i].key.to_string());
    }
    m.row(static_cast<Eigen::Index>(i)) = embeddings[i].vector.transpose();
  }
  return m;
}

void check_indices(const ReductionStats& stats, Eigen::Index dim) {
  if (stats.s_f() != dim) {
    throw Error("reduce", "stats were computed for dimension " + std::to_string(stats.s_f()) +
                              ", embeddings have " + std::to_string(dim));
  }
  for (int j : stats.selected_indices) {
    if (j < 0 || j >= dim) throw Error("reduce", "selected index " + std::to_string(j) + " out of range");
  }
}

}  // namespace

ReductionStats compute_stats(std::span<const PatchEmbedding> embeddings, int n_f) {
  if (embeddings.size() < 2) {
    throw Error("reduce", "need at least 2 embeddings, got " + std::to_string(embeddings.size()));
  }
  return compute_stats(stack_rows(embeddings), n_f);
}

ReductionStats compute_stats(const EmbeddingStore& store, int n_f) {
  auto stats = compute_stats(std::span<const PatchEmbedding>(store.records()), n_f);
  stats.magnification = store.magnification();
  return stats;
}

std::vector<PatchEmbedding> reduce(std::span<const PatchEmbedding> embeddings,
                                   const ReductionStats& stats) {
  std::vector<PatchEmbedding> out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    check_indices(stats, e.vector.size());
    Eigen::VectorXf v = e.vector(stats.selected_indices);
    out.push_back(make_embedding(e.key, std::move(v)));
  }
  return out;
}

EmbeddingStore reduce(const EmbeddingStore& store, const ReductionStats& stats) {
  check_indices(stats, store.dim());
  if (stats.magnification && *stats.magnification != store.magnification()) {
    throw Error("reduce", "stats are for " + stats.magnification->label() + ", store is " +
                              store.magnification().label());
  }
  EmbeddingStore out(stats.n_f(), store.magnification());
  for (auto& e : reduce(std::span<const PatchEmbedding>(store.records()), stats)) {
    out.add(std::move(e));
  }
  return out;
}

void write_stats(const ReductionStats& stats, const std::filesystem::path& path) {
  using nlohmann::json;
  auto to_array = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::isfinite(v[i])) {
        a.push_back(v[i]);
      } else {
        a.push_back(nullptr);
      }
    }
    return a;
  };
  json doc;
  doc["n"] = stats.n;
  doc["s_f"] = stats.s_f();
  doc["n_f"] = stats.n_f();
  doc["magnification"] = stats.magnification ? json(stats.magnification->label()) : json(nullptr);
  doc["mean"] = to_array(stats.mean);
  doc["std"] = to_array(stats.std);
  doc["cv"] = to_array(stats.cv);
  doc["selected_indices"] = stats.selected_indices;
  std::ofstream out(path);
  out << doc.dump() << '\n';
  if (!out) throw Error("reduce", "cannot write stats '" + path.string() + "'");
}

ReductionStats read_stats(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw Error("reduce", "cannot open stats '" + path.string() + "'");
  ReductionStats stats;
  try {
    json doc;
    in >> doc;
    auto from_array = [](const json& a, double null_value) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
      for (std::size_t i = 0; i < a.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = a[i].is_null() ? null_value : a[i].get<double>();
      }
      return v;
    };
    const double ninf = -std::numeric_limits<double>::infinity();
    stats.n = doc.at("n").get<std::int64_t>();
    stats.mean = from_array(doc.at("mean"), 0.0);
    stats.std = from_array(doc.at("std"), 0.0);
    stats.cv = from_array(doc.at("cv"), ninf);
    stats.selected_indices = doc.at("selected_indices").get<std::vector<int>>();
    if (!doc.at("magnification").is_null()) {
      stats.magnification = Magnification::parse(doc.at("magnification").get<std::string>());
    }
    if (doc.at("s_f").get<int>() != stats.s_f() || doc.at("n_f").get<int>() != stats.n_f()) {
      throw Error("reduce", "inconsistent sizes in stats '" + path.string() + "'");
    }
  } catch (const json::exception& e) {
    throw Error("reduce", "malformed stats '" + path.string() + "': " + e.what());
  }
  check_indices(stats, stats.s_f());
  return stats;
}

}  // namespace slidesim
