#pragma once

// Canonical JSON bytes. Every digest and signature in the federation is
// computed over this encoding, so the rules are deliberately rigid:
//   - object keys in byte-wise lexicographic order, no whitespace anywhere
//   - strings escape only \" \\ \b \f \n \r \t; other control bytes become
//     lowercase \u00xx; all other bytes pass through as UTF-8
//   - integers render as plain decimal
//   - floating-point values are decimal quantities: normalized to 10^-6 units
//     (ties to even) and rendered with trailing zeros dropped
//   - NaN / infinity / binary nodes are refused, never silently encoded
// Two documents are the same document iff their canonical bytes are equal.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "opal/decimal.hpp"
#include "opal/error.hpp"

namespace opal {

namespace detail {

inline void canonical_string(std::string_view s, std::string& out) {
  static constexpr char kHex[] = "0123456789abcdef";
  out.push_back('"');
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '"') {
      out += "\\\"";
    } else if (c == '\\') {
      out += "\\\\";
    } else if (c == 0x08) {
      out += "\\b";
    } else if (c == 0x0c) {
      out += "\\f";
    } else if (c == 0x0a) {
      out += "\\n";
    } else if (c == 0x0d) {
      out += "\\r";
    } else if (c == 0x09) {
      out += "\\t";
    } else if (c < 0x20) {
      out += "\\u00";
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0f]);
    } else {
      out.push_back(ch);
    }
  }
  out.push_back('"');
}

inline void canonical_value(const nlohmann::json& j, std::string& out) {
  using value_t = nlohmann::json::value_t;
  switch (j.type()) {
    case value_t::null:
      out += "null";
      break;
    case value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      break;
    case value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case value_t::number_unsigned: {
      const auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX))
        throw CanonicalError("integer exceeds signed 64-bit range");
      out += std::to_string(u);
      break;
    }
    case value_t::number_float:
      // from_double rejects non-finite and out-of-range values.
      out += Decimal::from_double(j.get<double>()).str();
      break;
    case value_t::string:
      canonical_string(j.get_ref<const std::string&>(), out);
      break;
    case value_t::array: {
      out.push_back('[');
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out.push_back(',');
        canonical_value(j[i], out);
      }
      out.push_back(']');
      break;
    }
    case value_t::object: {
      // nlohmann objects are std::map<std::string, ...>: iteration order is
      // already byte-wise lexicographic.
      out.push_back('{');
      bool first = true;
      for (auto it = j.cbegin(); it != j.cend(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        canonical_string(it.key(), out);
        out.push_back(':');
        canonical_value(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    default:
      throw CanonicalError("unsupported value type in canonical encoding");
  }
}

}  // namespace detail

inline std::string canonicalize(const nlohmann::json& j) {
  std::string out;
  out.reserve(256);
  detail::canonical_value(j, out);
  return out;
}

}  // namespace opal
