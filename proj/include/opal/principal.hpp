#pragma once

// Federation principals. A principal is named by its role and the fingerprint
// of its signing key; there are no display names or addresses at this layer.

#include <compare>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "opal/encoding.hpp"
#include "opal/error.hpp"

namespace opal {

enum class Role { querier, data_provider, gateway, consent_authority, subject };

inline std::string_view role_label(Role r) {
  switch (r) {
    case Role::querier: return "querier";
    case Role::data_provider: return "data-provider";
    case Role::gateway: return "gateway";
    case Role::consent_authority: return "consent-authority";
    case Role::subject: return "subject";
  }
  throw ProtocolError("unknown role");
}

inline Role role_from_label(std::string_view s) {
  if (s == "querier") return Role::querier;
  if (s == "data-provider") return Role::data_provider;
  if (s == "gateway") return Role::gateway;
  if (s == "consent-authority") return Role::consent_authority;
  if (s == "subject") return Role::subject;
  throw ProtocolError("unknown role label");
}

struct PrincipalId {
  Role role{Role::querier};
  std::string key_fingerprint;  // lowercase hex SHA-256 of the raw public key

  auto operator<=>(const PrincipalId&) const = default;

  nlohmann::json to_json() const {
    return {{"role", std::string(role_label(role))}, {"key_fingerprint", key_fingerprint}};
  }

  static PrincipalId from_json(const nlohmann::json& j) {
    PrincipalId p;
    p.role = role_from_label(j.at("role").get<std::string>());
    p.key_fingerprint = j.at("key_fingerprint").get<std::string>();
    if (p.key_fingerprint.size() != 64 || !is_lower_hex(p.key_fingerprint))
      throw ProtocolError("key fingerprint must be 64 lowercase hex characters");
    return p;
  }
};

}  // namespace opal
