#pragma once

#include <stdexcept>
#include <string>

namespace slidesim {

/// Raised for every recoverable failure in the library. `stage` names the
/// pipeline step that failed so the CLI can attribute errors.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace slidesim
