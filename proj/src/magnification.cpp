#include "slidesim/magnification.hpp"

#include <charconv>

#include "slidesim/error.hpp"

namespace slidesim {

Magnification Magnification::parse(std::string_view label) {
  std::string_view body = label;
  if (!body.empty() && (body.back() == 'x' || body.back() == 'X')) {
    body.remove_suffix(1);
  }
  if (body.empty()) throw Error("magnification", "empty label");

  unsigned whole = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), whole);
  if (ec != std::errc{}) {
    throw Error("magnification", "cannot parse '" + std::string(label) + "'");
  }
  unsigned halves = whole * 2;
  std::string_view rest(ptr, body.data() + body.size() - ptr);
  if (rest == ".5") {
    halves += 1;
  } else if (!rest.empty() && rest != ".0") {
    throw Error("magnification",
                "only whole or half magnifications are supported: '" + std::string(label) + "'");
  }
  if (halves == 0 || halves > 255) {
    throw Error("magnification", "out of range: '" + std::string(label) + "'");
  }
  return from_halves(static_cast<std::uint8_t>(halves));
}

Magnification Magnification::from_code(std::uint8_t code) {
  if (code == 0) throw Error("magnification", "invalid code 0");
  return from_halves(code);
}

std::string Magnification::label() const {
  std::string s = std::to_string(halves_ / 2);
  if (halves_ % 2) s += ".5";
  return s + "x";
}

std::vector<Magnification> default_magnifications() {
  return {Magnification::from_halves(2), Magnification::from_halves(5),
          Magnification::from_halves(10), Magnification::from_halves(20)};
}

}  // namespace slidesim
