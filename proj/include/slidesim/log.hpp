#pragma once

#include <chrono>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

namespace slidesim {

/// Line-delimited JSON log records (`stage`, optional `slide_id`,
/// `duration_ms`, `msg`) written to a stream, stderr by default.
class Logger {
 public:
  explicit Logger(std::ostream* out = nullptr, bool enabled = true);

  void log(const std::string& stage, const std::string& msg,
           const std::optional<std::string>& slide_id = std::nullopt,
           std::optional<double> duration_ms = std::nullopt,
           const nlohmann::json& extra = nullptr);

  void set_enabled(bool enabled) { enabled_ = enabled; }

  /// Logger that discards everything.
  static Logger& null();

 private:
  std::ostream* out_;
  bool enabled_;
  std::mutex mutex_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double millis() const { return seconds() * 1e3; }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace slidesim
