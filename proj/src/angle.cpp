#include "bellsim/angle.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bellsim/errors.hpp"

namespace bellsim {

Angle::Angle(std::int64_t numerator, std::int64_t denominator) {
  if (denominator == 0) {
    throw InvalidArgument("angle denominator must be nonzero");
  }
  if (denominator < 0) {
    numerator = -numerator;
    denominator = -denominator;
  }
  const std::int64_t g = std::gcd(numerator, denominator);
  num_ = numerator / (g == 0 ? 1 : g);
  den_ = denominator / (g == 0 ? 1 : g);
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw InvalidArgument("malformed angle '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

Angle Angle::parse(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) throw InvalidArgument("empty angle");

  bool negative = false;
  if (s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  const auto pi_pos = s.find("pi");
  if (pi_pos == std::string_view::npos) {
    // Only a bare zero is meaningful without pi.
    if (parse_int(s, text) != 0) {
      throw InvalidArgument("angle '" + std::string(text) + "' must be a rational multiple of pi");
    }
    return {};
  }
  std::string_view coeff = s.substr(0, pi_pos);
  std::string_view rest = s.substr(pi_pos + 2);
  if (!coeff.empty() && coeff.back() == '*') coeff.remove_suffix(1);
  std::int64_t num = coeff.empty() ? 1 : parse_int(coeff, text);
  std::int64_t den = 1;
  if (!rest.empty()) {
    if (rest.front() != '/') {
      throw InvalidArgument("malformed angle '" + std::string(text) + "'");
    }
    den = parse_int(rest.substr(1), text);
  }
  return {negative ? -num : num, den};
}

double Angle::radians() const {
  return std::numbers::pi * static_cast<double>(num_) / static_cast<double>(den_);
}

double Angle::cos() const {
  // Reduce to r/den in [0, 1] (units of pi) using periodicity and evenness.
  const std::int64_t period = 2 * den_;
  std::int64_t r = ((num_ % period) + period) % period;
  if (r > den_) r = period - r;
  if (r == 0) return 1.0;
  if (r == den_) return -1.0;
  if (2 * r == den_) return 0.0;
  if (3 * r == den_) return 0.5;
  if (3 * r == 2 * den_) return -0.5;
  return std::cos(std::numbers::pi * static_cast<double>(r) / static_cast<double>(den_));
}

std::string Angle::label() const {
  if (num_ == 0) return "0";
  std::string out;
  if (num_ < 0) out += '-';
  const std::int64_t mag = num_ < 0 ? -num_ : num_;
  if (mag != 1) out += std::to_string(mag);
  out += "pi";
  if (den_ != 1) out += "/" + std::to_string(den_);
  return out;
}

Angle operator-(const Angle& a, const Angle& b) {
  return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_};
}

Angle operator+(const Angle& a, const Angle& b) {
  return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
}

}  // namespace bellsim
