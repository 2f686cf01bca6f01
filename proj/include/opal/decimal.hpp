#pragma once

#include <cfenv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "opal/error.hpp"

namespace opal {

// Fixed-point decimal: a signed count of 10^-6 units. All decimal arithmetic
// in the system happens on these integers, which keeps results identical
// across runs, platforms, and independent implementations. Magnitude is
// capped at 2^50 micro-units (~1.1e9 whole units) so every representable
// value survives a JSON double round trip exactly.
struct Decimal {
  std::int64_t micros = 0;

  static constexpr std::int64_t kScale = 1'000'000;
  static constexpr std::int64_t kMicrosLimit = std::int64_t{1} << 50;

  friend auto operator<=>(const Decimal&, const Decimal&) = default;

  double to_double() const { return static_cast<double>(micros) / static_cast<double>(kScale); }

  static Decimal from_units(std::int64_t units) {
    if (units > kMicrosLimit / kScale || units < -(kMicrosLimit / kScale))
      throw EvalError("decimal value out of range");
    return Decimal{units * kScale};
  }

  // Nearest representable decimal, ties to even in the 10^-6 place.
  static Decimal from_double(double v) {
    if (!std::isfinite(v)) throw CanonicalError("non-finite decimal value");
    double scaled = v * static_cast<double>(kScale);
    if (std::fabs(scaled) >= static_cast<double>(kMicrosLimit))
      throw CanonicalError("decimal value out of representable range");
    return Decimal{static_cast<std::int64_t>(std::nearbyint(scaled))};
  }

  // Exact parse of a plain decimal literal: [-]digits[.digits], at most six
  // fractional digits. No exponent form.
  static Decimal parse(std::string_view s) {
    auto fail = [] { throw ProtocolError("invalid decimal literal"); };
    if (s.empty()) fail();
    bool neg = false;
    std::size_t i = 0;
    if (s[0] == '-' || s[0] == '+') {
      neg = s[0] == '-';
      i = 1;
    }
    std::int64_t units = 0;
    std::size_t int_digits = 0;
    for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i, ++int_digits) {
      units = units * 10 + (s[i] - '0');
      if (units > kMicrosLimit / kScale) fail();
    }
    if (int_digits == 0) fail();
    std::int64_t frac = 0;
    if (i < s.size()) {
      if (s[i] != '.') fail();
      ++i;
      std::size_t frac_digits = 0;
      for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i, ++frac_digits) {
        if (frac_digits >= 6) fail();
        frac = frac * 10 + (s[i] - '0');
      }
      if (frac_digits == 0 || i != s.size()) fail();
      for (std::size_t k = frac_digits; k < 6; ++k) frac *= 10;
    }
    std::int64_t m = units * kScale + frac;
    if (m >= kMicrosLimit) fail();
    return Decimal{neg ? -m : m};
  }

  // Canonical text: minimal digits, no exponent, no trailing zeros, integral
  // values drop the point entirely ("2", "2.5", "-0.000001").
  std::string str() const {
    std::int64_t m = micros;
    std::string out;
    if (m < 0) {
      out.push_back('-');
      m = -m;
    }
    out += std::to_string(m / kScale);
    std::int64_t frac = m % kScale;
    if (frac != 0) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(frac));
      std::string f = buf;
      while (f.back() == '0') f.pop_back();
      out.push_back('.');
      out += f;
    }
    return out;
  }
};

// Every aggregate cell is one of these two shapes; counts and integer-column
// results stay exact int64, decimal-column results and means carry micros.
using NumericValue = std::variant<std::int64_t, Decimal>;

// Round-half-even division of a (possibly huge) exact numerator, used for
// means. Denominator must be positive.
inline std::int64_t div_round_half_even(__int128 numerator, std::int64_t denominator) {
  if (denominator <= 0) throw EvalError("division by non-positive count");
  bool neg = numerator < 0;
  unsigned __int128 n = neg ? static_cast<unsigned __int128>(-numerator)
                            : static_cast<unsigned __int128>(numerator);
  unsigned __int128 d = static_cast<unsigned __int128>(denominator);
  unsigned __int128 q = n / d;
  unsigned __int128 r = n % d;
  if (2 * r > d || (2 * r == d && (q & 1) != 0)) ++q;
  if (q > static_cast<unsigned __int128>(INT64_MAX)) throw EvalError("mean out of range");
  std::int64_t result = static_cast<std::int64_t>(q);
  return neg ? -result : result;
}

inline bool add_checked(std::int64_t a, std::int64_t b, std::int64_t& out) {
  return !__builtin_add_overflow(a, b, &out);
}

}  // namespace opal
