#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "opal/encoding.hpp"
#include "opal/error.hpp"

namespace opal {

// Wire form is the lowercase hyphenated string.
struct Uuid {
  std::array<std::uint8_t, 16> bytes{};

  friend auto operator<=>(const Uuid&, const Uuid&) = default;

  bool is_nil() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  std::string str() const {
    std::string hex = to_hex(bytes.data(), bytes.size());
    std::string out;
    out.reserve(36);
    out += hex.substr(0, 8);
    out += '-';
    out += hex.substr(8, 4);
    out += '-';
    out += hex.substr(12, 4);
    out += '-';
    out += hex.substr(16, 4);
    out += '-';
    out += hex.substr(20, 12);
    return out;
  }

  static Uuid parse(std::string_view s) {
    if (s.size() != 36 || s[8] != '-' || s[13] != '-' || s[18] != '-' || s[23] != '-')
      throw ProtocolError("invalid UUID string");
    std::string hex;
    hex.reserve(32);
    for (char c : s) {
      if (c == '-') continue;
      if (hex_nibble(c) < 0) throw ProtocolError("invalid UUID string");
      hex.push_back(c);
    }
    Uuid u;
    auto raw = from_hex(hex);
    std::copy(raw.begin(), raw.end(), u.bytes.begin());
    return u;
  }

  // Version-4 UUID from the caller's generator, so tests can be seeded.
  static Uuid random(std::mt19937_64& rng) {
    Uuid u;
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    for (int i = 0; i < 8; ++i) u.bytes[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
    for (int i = 0; i < 8; ++i) u.bytes[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
    u.bytes[6] = static_cast<std::uint8_t>((u.bytes[6] & 0x0f) | 0x40);
    u.bytes[8] = static_cast<std::uint8_t>((u.bytes[8] & 0x3f) | 0x80);
    return u;
  }

  static Uuid random() {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    return random(rng);
  }
};

}  // namespace opal
