#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace bellsim {

/// An angle stored as an exact rational multiple of pi, always reduced with a
/// positive denominator. Equality is exact.
class Angle {
 public:
  constexpr Angle() = default;
  Angle(std::int64_t numerator, std::int64_t denominator);

  static Angle zero() { return {}; }
  /// Accepts "0", "pi", "-pi/4", "3pi/4" and "3*pi/4".
  static Angle parse(std::string_view text);

  std::int64_t numerator() const { return num_; }
  std::int64_t denominator() const { return den_; }

  double radians() const;
  /// cos(angle); exact at multiples of pi/2 and at +-pi/3, +-2pi/3.
  double cos() const;

  /// ASCII label, e.g. "0", "pi/4", "-3pi/4".
  std::string label() const;

  friend Angle operator-(const Angle& a, const Angle& b);
  friend Angle operator+(const Angle& a, const Angle& b);
  friend bool operator==(const Angle&, const Angle&) = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace bellsim
