#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace slidesim {

/// A pyramid magnification tier. The scale relative to 1x is stored as a
/// rational in halves (`halves == 2` is 1x, `halves == 5` is 2.5x) so that
/// every supported level has an exact integer code.
class Magnification {
 public:
  constexpr Magnification() = default;

  /// Parses labels such as "1x", "2.5x", "10x" (case-insensitive suffix).
  static Magnification parse(std::string_view label);
  static Magnification from_code(std::uint8_t code);

  static constexpr Magnification from_halves(std::uint8_t halves) {
    Magnification m;
    m.halves_ = halves;
    return m;
  }

  std::string label() const;
  double scale_factor() const { return halves_ / 2.0; }
  /// Single-byte code used by the embedding store header.
  std::uint8_t code() const { return halves_; }

  auto operator<=>(const Magnification&) const = default;

 private:
  std::uint8_t halves_ = 2;
};

/// The four magnifications evaluated by default: 1x, 2.5x, 5x and 10x.
std::vector<Magnification> default_magnifications();

}  // namespace slidesim
