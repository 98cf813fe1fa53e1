#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace hpprop {

// Learning rate m x 10^e with integer mantissa 1..9. Neighbours differ by one
// mantissa unit and roll over across decades (9e-6 -> 1e-5).
class LrGridPoint {
 public:
  LrGridPoint() = default;
  LrGridPoint(int mantissa, int exponent);

  // Nearest grid point by absolute distance; ties go to the lower point.
  static LrGridPoint snap(double lr);
  // Accepts "5e-6", "5e-06", "0.000005" and other forms parsed by strtod.
  static LrGridPoint parse(std::string_view text);

  int mantissa() const { return mantissa_; }
  int exponent() const { return exponent_; }
  // Dense integer position on the grid; consecutive points differ by 1.
  long index() const { return static_cast<long>(exponent_) * 9 + (mantissa_ - 1); }
  static LrGridPoint from_index(long index);

  double value() const;
  LrGridPoint next() const { return from_index(index() + 1); }
  LrGridPoint prev() const { return from_index(index() - 1); }

  std::string to_string() const;  // "5e-6"

  friend bool operator==(const LrGridPoint&, const LrGridPoint&) = default;
  friend std::strong_ordering operator<=>(const LrGridPoint& a, const LrGridPoint& b) {
    return a.index() <=> b.index();
  }

 private:
  int mantissa_ = 1;
  int exponent_ = 0;
};

}  // namespace hpprop
