#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slidesim/raster.hpp"

namespace slidesim {

/// One reference embedding emitted by the model export script.
struct OracleRecord {
  std::string fixture_name;
  std::string input_checksum;  // lowercase hex SHA-256 of the decoded RGB bytes
  Eigen::VectorXf vector;
};

/// Reads JSON lines `{"fixture_name", "input_checksum", "vector"}`.
std::vector<OracleRecord> load_oracles(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Checksum of a fixture's interleaved RGB pixels.
inline std::string fixture_checksum(const Raster& image) { return sha256_hex(image.pixels); }

struct OracleComparison {
  bool ok = true;
  Eigen::Index worst_index = -1;
  double worst_excess = 0.0;  // max over components of |a - b| - tolerance
};

/// Per-component check |actual - oracle| <= rtol * |oracle| + atol.
OracleComparison compare_to_oracle(const Eigen::Ref<const Eigen::VectorXf>& actual,
                                   const Eigen::Ref<const Eigen::VectorXf>& oracle,
                                   double rtol = 1e-4, double atol = 1e-6);

}  // namespace slidesim
