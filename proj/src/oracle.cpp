#include "slidesim/oracle.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "slidesim/error.hpp"

namespace slidesim {

std::vector<OracleRecord> load_oracles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("oracle", "cannot open '" + path.string() + "'");
  std::vector<OracleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      OracleRecord rec;
      rec.fixture_name = doc.at("fixture_name").get<std::string>();
      rec.input_checksum = doc.at("input_checksum").get<std::string>();
      auto values = doc.at("vector").get<std::vector<float>>();
      rec.vector = Eigen::Map<Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error("oracle", "malformed line " + std::to_string(line_no) + " in '" + path.string() +
                                "': " + e.what());
    }
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("oracle", "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

OracleComparison compare_to_oracle(const Eigen::Ref<const Eigen::VectorXf>& actual,
                                   const Eigen::Ref<const Eigen::VectorXf>& oracle, double rtol,
                                   double atol) {
  if (actual.size() != oracle.size()) {
    throw Error("oracle", "length mismatch: " + std::to_string(actual.size()) + " vs " +
                              std::to_string(oracle.size()));
  }
  OracleComparison result;
  result.worst_excess = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < actual.size(); ++i) {
    const double ref = oracle[i];
    const double excess = std::abs(static_cast<double>(actual[i]) - ref) - (rtol * std::abs(ref) + atol);
    if (excess > result.worst_excess) {
      result.worst_excess = excess;
      result.worst_index = i;
    }
  }
  result.ok = actual.size() == 0 || result.worst_excess <= 0.0;
  return result;
}

}  // namespace slidesim
