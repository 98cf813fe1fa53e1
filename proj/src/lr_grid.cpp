#include "hpprop/lr_grid.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace hpprop {

LrGridPoint::LrGridPoint(int mantissa, int exponent) : mantissa_(mantissa), exponent_(exponent) {
  if (mantissa < 1 || mantissa > 9) throw std::invalid_argument("grid mantissa must lie in 1..9");
}

LrGridPoint LrGridPoint::from_index(long index) {
  long exponent = index / 9;
  long rem = index % 9;
  if (rem < 0) {
    rem += 9;
    --exponent;
  }
  return {static_cast<int>(rem) + 1, static_cast<int>(exponent)};
}

double LrGridPoint::value() const { return std::strtod(to_string().c_str(), nullptr); }

std::string LrGridPoint::to_string() const {
  return std::to_string(mantissa_) + "e" + std::to_string(exponent_);
}

LrGridPoint LrGridPoint::snap(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
  auto exponent = static_cast<int>(std::floor(std::log10(lr)));
  double mantissa = lr / std::pow(10.0, exponent);
  // log10 rounding can land one decade off near powers of ten.
  if (mantissa >= 10.0 - 1e-9) {
    ++exponent;
    mantissa /= 10.0;
  } else if (mantissa < 1.0 - 1e-12) {
    --exponent;
    mantissa *= 10.0;
  }
  constexpr double kTol = 1e-9;
  const double lower = std::floor(mantissa + kTol);
  const double frac = mantissa - lower;
  int chosen = static_cast<int>(lower);
  if (frac > 0.5 + kTol) ++chosen;
  if (chosen < 1) chosen = 1;
  if (chosen == 10) return {1, exponent + 1};
  return {chosen, exponent};
}

LrGridPoint LrGridPoint::parse(std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::invalid_argument("not a number: " + s);
  return snap(v);
}

}  // namespace hpprop
