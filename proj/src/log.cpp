#include "slidesim/log.hpp"

#include <iostream>

namespace slidesim {

Logger::Logger(std::ostream* out, bool enabled) : out_(out ? out : &std::cerr), enabled_(enabled) {}

void Logger::log(const std::string& stage, const std::string& msg,
                 const std::optional<std::string>& slide_id, std::optional<double> duration_ms,
                 const nlohmann::json& extra) {
  if (!enabled_) return;
  nlohmann::json line = {{"stage", stage}};
  if (slide_id) line["slide_id"] = *slide_id;
  if (duration_ms) line["duration_ms"] = *duration_ms;
  line["msg"] = msg;
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) line[k] = v;
  }
  std::lock_guard lock(mutex_);
  *out_ << line.dump() << '\n';
  out_->flush();
}

Logger& Logger::null() {
  static Logger logger(nullptr, false);
  return logger;
}

}  // namespace slidesim
