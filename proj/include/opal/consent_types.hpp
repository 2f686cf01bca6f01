#pragma once

// Consent documents: the subject's standing rules, the token a querier must
// obtain before execution, and the receipt recording the consent basis of
// each dataset actually used.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

enum class ConsentEffect { allow, deny };

inline std::string_view consent_effect_label(ConsentEffect e) {
  return e == ConsentEffect::allow ? "allow" : "deny";
}

inline ConsentEffect consent_effect_from_label(std::string_view s) {
  if (s == "allow") return ConsentEffect::allow;
  if (s == "deny") return ConsentEffect::deny;
  throw ProtocolError("unknown consent effect");
}

// A standing rule by one subject about one dataset. Patterns are either an
// exact value or the wildcard; absent optional = wildcard on the wire ("*").
struct ConsentRule {
  Uuid rule_id;
  PrincipalId subject;
  Uuid dataset_id;
  std::optional<Uuid> algorithm_pattern;         // nullopt = any algorithm
  std::optional<PrincipalId> querier_pattern;    // nullopt = any querier
  ConsentEffect effect{ConsentEffect::allow};
  std::optional<Timestamp> expires_at;
  bool revoked{false};

  bool operator==(const ConsentRule&) const = default;

  bool matches(const Uuid& algorithm_id, const PrincipalId& querier) const {
    if (algorithm_pattern && *algorithm_pattern != algorithm_id) return false;
    if (querier_pattern && !(*querier_pattern == querier)) return false;
    return true;
  }

  bool active_at(Timestamp t) const {
    return !revoked && (!expires_at || t <= *expires_at);
  }

  // The subject signs this view when registering the rule. Revocation state
  // is service-side bookkeeping and stays outside it.
  nlohmann::json signing_view() const {
    nlohmann::json j{{"rule_id", rule_id.str()},
                     {"subject", subject.to_json()},
                     {"dataset_id", dataset_id.str()},
                     {"effect", std::string(consent_effect_label(effect))}};
    j["algorithm_pattern"] = algorithm_pattern ? nlohmann::json(algorithm_pattern->str())
                                               : nlohmann::json("*");
    j["querier_pattern"] = querier_pattern ? querier_pattern->to_json() : nlohmann::json("*");
    if (expires_at) j["expires_at"] = to_rfc3339(*expires_at);
    return j;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    j["revoked"] = revoked;
    return j;
  }

  static ConsentRule from_json(const nlohmann::json& j) {
    ConsentRule r;
    r.rule_id = Uuid::parse(j.at("rule_id").get<std::string>());
    r.subject = PrincipalId::from_json(j.at("subject"));
    r.dataset_id = Uuid::parse(j.at("dataset_id").get<std::string>());
    const auto& ap = j.at("algorithm_pattern");
    if (!(ap.is_string() && ap.get_ref<const std::string&>() == "*"))
      r.algorithm_pattern = Uuid::parse(ap.get<std::string>());
    const auto& qp = j.at("querier_pattern");
    if (!(qp.is_string() && qp.get_ref<const std::string&>() == "*"))
      r.querier_pattern = PrincipalId::from_json(qp);
    r.effect = consent_effect_from_label(j.at("effect").get<std::string>());
    if (j.contains("expires_at")) r.expires_at = from_rfc3339(j.at("expires_at").get<std::string>());
    r.revoked = j.value("revoked", false);
    return r;
  }
};

struct ConsentToken {
  Uuid token_id;
  PrincipalId querier;
  Uuid algorithm_id;
  Uuid dataset_id;
  Timestamp issued_at;
  Timestamp expires_at;
  std::vector<Uuid> granting_rule_ids;  // sorted by string form
  PrincipalId issuer;                   // the consent authority
  SignatureEnvelope signature;

  bool operator==(const ConsentToken&) const = default;

  nlohmann::json signing_view() const {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : granting_rule_ids) ids.push_back(id.str());
    return {{"token_id", token_id.str()},
            {"querier", querier.to_json()},
            {"algorithm_id", algorithm_id.str()},
            {"dataset_id", dataset_id.str()},
            {"issued_at", to_rfc3339(issued_at)},
            {"expires_at", to_rfc3339(expires_at)},
            {"granting_rule_ids", ids},
            {"issuer", issuer.to_json()}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    j["signature"] = signature.to_json();
    return j;
  }

  static ConsentToken from_json(const nlohmann::json& j) {
    ConsentToken t;
    t.token_id = Uuid::parse(j.at("token_id").get<std::string>());
    t.querier = PrincipalId::from_json(j.at("querier"));
    t.algorithm_id = Uuid::parse(j.at("algorithm_id").get<std::string>());
    t.dataset_id = Uuid::parse(j.at("dataset_id").get<std::string>());
    t.issued_at = from_rfc3339(j.at("issued_at").get<std::string>());
    t.expires_at = from_rfc3339(j.at("expires_at").get<std::string>());
    if (!(t.expires_at > t.issued_at)) throw ProtocolError("token expiry must follow issuance");
    for (const auto& id : j.at("granting_rule_ids"))
      t.granting_rule_ids.push_back(Uuid::parse(id.get<std::string>()));
    t.issuer = PrincipalId::from_json(j.at("issuer"));
    t.signature = SignatureEnvelope::from_json(j.at("signature"));
    return t;
  }
};

// Per-execution record of the consent basis. The five identification fields
// (algorithm, dataset, provider, querier, terms of use) must all be present.
struct ConsentReceipt {
  Uuid algorithm_id;
  Uuid dataset_id;
  PrincipalId data_provider;
  PrincipalId querier;
  std::string terms_of_use;
  Uuid token_id;
  Timestamp executed_at;

  bool operator==(const ConsentReceipt&) const = default;

  nlohmann::json to_json() const {
    return {{"algorithm_id", algorithm_id.str()},
            {"dataset_id", dataset_id.str()},
            {"data_provider", data_provider.to_json()},
            {"querier", querier.to_json()},
            {"terms_of_use", terms_of_use},
            {"token_id", token_id.str()},
            {"executed_at", to_rfc3339(executed_at)}};
  }

  static ConsentReceipt from_json(const nlohmann::json& j) {
    ConsentReceipt r;
    r.algorithm_id = Uuid::parse(j.at("algorithm_id").get<std::string>());
    r.dataset_id = Uuid::parse(j.at("dataset_id").get<std::string>());
    r.data_provider = PrincipalId::from_json(j.at("data_provider"));
    r.querier = PrincipalId::from_json(j.at("querier"));
    r.terms_of_use = j.at("terms_of_use").get<std::string>();
    r.token_id = Uuid::parse(j.at("token_id").get<std::string>());
    r.executed_at = from_rfc3339(j.at("executed_at").get<std::string>());
    if (r.algorithm_id.is_nil() || r.dataset_id.is_nil() || r.token_id.is_nil() ||
        r.terms_of_use.empty() || r.data_provider.key_fingerprint.empty() ||
        r.querier.key_fingerprint.empty())
      throw ProtocolError("consent receipt identification fields must be populated");
    return r;
  }
};

}  // namespace opal
