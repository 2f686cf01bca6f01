#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <string_view>

#include "opal/error.hpp"

namespace opal {

// Seconds since the Unix epoch, UTC. Second resolution is deliberate:
// every timestamp crosses the wire as RFC 3339 with whole seconds, so a
// finer internal clock would not survive a round trip.
struct Timestamp {
  std::int64_t seconds = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
  Timestamp operator+(std::int64_t s) const { return Timestamp{seconds + s}; }
  Timestamp operator-(std::int64_t s) const { return Timestamp{seconds - s}; }
};

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return Timestamp{std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count()};
}

inline Clock system_clock() {
  return [] { return system_now(); };
}

namespace detail {
// Civil-date conversions (proleptic Gregorian), after Howard Hinnant's
// chrono algorithms.
inline std::int64_t days_from_civil(std::int64_t y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, std::int64_t& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y += (m <= 2);
}
}  // namespace detail

// "YYYY-MM-DDTHH:MM:SSZ", always UTC, always whole seconds.
inline std::string to_rfc3339(Timestamp t) {
  std::int64_t days = t.seconds / 86400;
  std::int64_t rem = t.seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  int m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02d-%02dT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60), static_cast<long long>(rem % 60));
  return buf;
}

inline Timestamp from_rfc3339(std::string_view s) {
  auto fail = [&] { throw ProtocolError("invalid RFC 3339 timestamp"); };
  if (s.size() != 20) fail();
  auto digit = [&](std::size_t i) {
    char c = s[i];
    if (c < '0' || c > '9') fail();
    return c - '0';
  };
  if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != 'Z') fail();
  std::int64_t y = digit(0) * 1000 + digit(1) * 100 + digit(2) * 10 + digit(3);
  int mo = digit(5) * 10 + digit(6);
  int d = digit(8) * 10 + digit(9);
  int h = digit(11) * 10 + digit(12);
  int mi = digit(14) * 10 + digit(15);
  int sec = digit(17) * 10 + digit(18);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 59) fail();
  // Round-trip check catches impossible dates such as Feb 30.
  Timestamp t{detail::days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec};
  std::int64_t ry;
  int rm, rd;
  detail::civil_from_days(t.seconds / 86400 - (t.seconds % 86400 < 0 ? 1 : 0), ry, rm, rd);
  if (ry != y || rm != mo || rd != d) fail();
  return t;
}

}  // namespace opal
