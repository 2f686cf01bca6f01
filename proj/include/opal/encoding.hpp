#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "opal/error.hpp"

namespace opal {

inline std::string to_hex(const std::uint8_t* data, std::size_t len) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0x0f]);
  }
  return out;
}

inline std::string to_hex(const std::vector<std::uint8_t>& data) {
  return to_hex(data.data(), data.size());
}

inline int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;  // uppercase is rejected: fingerprints and digests are lowercase on the wire
}

inline bool is_lower_hex(std::string_view s) {
  for (char c : s)
    if (hex_nibble(c) < 0) return false;
  return true;
}

inline std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw ProtocolError("hex string has odd length");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_nibble(hex[2 * i]);
    int lo = hex_nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ProtocolError("invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

namespace detail {
inline constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace detail

// Standard base64 with padding, no line wrapping.
inline std::string to_base64(const std::uint8_t* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= len; i += 3) {
    std::uint32_t v = data[i] << 16 | data[i + 1] << 8 | data[i + 2];
    out.push_back(detail::kB64Alphabet[v >> 18]);
    out.push_back(detail::kB64Alphabet[(v >> 12) & 63]);
    out.push_back(detail::kB64Alphabet[(v >> 6) & 63]);
    out.push_back(detail::kB64Alphabet[v & 63]);
  }
  if (len - i == 1) {
    std::uint32_t v = data[i] << 16;
    out.push_back(detail::kB64Alphabet[v >> 18]);
    out.push_back(detail::kB64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (len - i == 2) {
    std::uint32_t v = data[i] << 16 | data[i + 1] << 8;
    out.push_back(detail::kB64Alphabet[v >> 18]);
    out.push_back(detail::kB64Alphabet[(v >> 12) & 63]);
    out.push_back(detail::kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string to_base64(const std::vector<std::uint8_t>& data) {
  return to_base64(data.data(), data.size());
}

inline std::vector<std::uint8_t> from_base64(std::string_view b64) {
  if (b64.size() % 4 != 0) throw ProtocolError("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(b64.size() / 4 * 3);
  for (std::size_t i = 0; i < b64.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      char c = b64[i + k];
      if (c == '=') {
        if (i + 4 != b64.size() || k < 2) throw ProtocolError("misplaced base64 padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw ProtocolError("base64 data after padding");
      int d = detail::b64_value(c);
      if (d < 0) throw ProtocolError("invalid base64 character");
      v = v << 6 | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

}  // namespace opal
