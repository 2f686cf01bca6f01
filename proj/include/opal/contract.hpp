#pragma once

// The execution request and its answer. A contract binds algorithm, target
// repository, parameters, and (when subject data is involved) the consent
// token into one signed region, so none of them can be swapped after the
// querier signs. The response either carries a safe result or a decline
// reason, never both.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/consent_types.hpp"
#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"
#include "opal/safe_table.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct Contract {
  Uuid contract_id;
  Uuid algorithm_id;
  Uuid target_repository_id;  // a repository id, or a domain id for broadcast
  nlohmann::json parameter_bindings = nlohmann::json::object();
  std::optional<ConsentToken> consent_token;
  std::optional<std::vector<std::uint8_t>> payment_voucher;
  Timestamp issued_at;
  PrincipalId querier;
  SignatureEnvelope signature;

  bool operator==(const Contract&) const = default;

  // Everything except the signature. The consent token sits inside, which is
  // what binds it to this specific request.
  nlohmann::json signing_view() const {
    nlohmann::json j{{"contract_id", contract_id.str()},
                     {"algorithm_id", algorithm_id.str()},
                     {"target_repository_id", target_repository_id.str()},
                     {"parameter_bindings", parameter_bindings},
                     {"issued_at", to_rfc3339(issued_at)},
                     {"querier", querier.to_json()}};
    if (consent_token) j["consent_token"] = consent_token->to_json();
    if (payment_voucher) j["payment_voucher"] = to_base64(*payment_voucher);
    return j;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    j["signature"] = signature.to_json();
    return j;
  }

  static Contract from_json(const nlohmann::json& j) {
    Contract c;
    c.contract_id = Uuid::parse(j.at("contract_id").get<std::string>());
    c.algorithm_id = Uuid::parse(j.at("algorithm_id").get<std::string>());
    c.target_repository_id = Uuid::parse(j.at("target_repository_id").get<std::string>());
    c.parameter_bindings = j.at("parameter_bindings");
    if (!c.parameter_bindings.is_object())
      throw ProtocolError("parameter_bindings must be a map");
    if (j.contains("consent_token")) c.consent_token = ConsentToken::from_json(j.at("consent_token"));
    if (j.contains("payment_voucher"))
      c.payment_voucher = from_base64(j.at("payment_voucher").get<std::string>());
    c.issued_at = from_rfc3339(j.at("issued_at").get<std::string>());
    c.querier = PrincipalId::from_json(j.at("querier"));
    c.signature = SignatureEnvelope::from_json(j.at("signature"));
    return c;
  }
};

enum class DeclineReason {
  data_unavailable,
  related_query_detected,
  consent_denied,
  invalid_contract,
  unknown_algorithm
};

inline std::string_view decline_reason_label(DeclineReason r) {
  switch (r) {
    case DeclineReason::data_unavailable: return "data-unavailable";
    case DeclineReason::related_query_detected: return "related-query-detected";
    case DeclineReason::consent_denied: return "consent-denied";
    case DeclineReason::invalid_contract: return "invalid-contract";
    case DeclineReason::unknown_algorithm: return "unknown-algorithm";
  }
  throw ProtocolError("unknown decline reason");
}

inline DeclineReason decline_reason_from_label(std::string_view s) {
  if (s == "data-unavailable") return DeclineReason::data_unavailable;
  if (s == "related-query-detected") return DeclineReason::related_query_detected;
  if (s == "consent-denied") return DeclineReason::consent_denied;
  if (s == "invalid-contract") return DeclineReason::invalid_contract;
  if (s == "unknown-algorithm") return DeclineReason::unknown_algorithm;
  throw ProtocolError("unknown decline reason label");
}

enum class ResponseStatus { fulfilled, declined };

struct ContractResponse {
  Uuid contract_id;
  ResponseStatus status{ResponseStatus::declined};
  std::optional<SafeTable> result;           // present iff fulfilled
  std::optional<DeclineReason> decline_reason;  // present iff declined
  std::vector<Uuid> dataset_ids_used;
  std::int64_t validity_duration{0};  // seconds
  std::vector<ConsentReceipt> consent_receipts;
  Timestamp responded_at;
  PrincipalId provider;
  SignatureEnvelope signature;

  bool operator==(const ContractResponse&) const = default;

  // The constructors are the only way modules build responses, which is what
  // keeps the status/result/decline_reason exclusivity invariant total.
  static ContractResponse make_fulfilled(const Uuid& contract_id, SafeTable result,
                                         std::vector<Uuid> dataset_ids_used,
                                         std::int64_t validity_duration,
                                         std::vector<ConsentReceipt> receipts,
                                         Timestamp responded_at, const PrincipalId& provider) {
    ContractResponse r;
    r.contract_id = contract_id;
    r.status = ResponseStatus::fulfilled;
    r.result = std::move(result);
    r.dataset_ids_used = std::move(dataset_ids_used);
    r.validity_duration = validity_duration;
    r.consent_receipts = std::move(receipts);
    r.responded_at = responded_at;
    r.provider = provider;
    return r;
  }

  static ContractResponse make_declined(const Uuid& contract_id, DeclineReason reason,
                                        Timestamp responded_at, const PrincipalId& provider) {
    ContractResponse r;
    r.contract_id = contract_id;
    r.status = ResponseStatus::declined;
    r.decline_reason = reason;
    r.responded_at = responded_at;
    r.provider = provider;
    return r;
  }

  nlohmann::json signing_view() const {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : dataset_ids_used) ids.push_back(id.str());
    nlohmann::json receipts = nlohmann::json::array();
    for (const auto& rc : consent_receipts) receipts.push_back(rc.to_json());
    nlohmann::json j{{"contract_id", contract_id.str()},
                     {"status", status == ResponseStatus::fulfilled ? "fulfilled" : "declined"},
                     {"dataset_ids_used", ids},
                     {"validity_duration", validity_duration},
                     {"consent_receipts", receipts},
                     {"responded_at", to_rfc3339(responded_at)},
                     {"provider", provider.to_json()}};
    if (result) j["result"] = result->to_json();
    if (decline_reason) j["decline_reason"] = std::string(decline_reason_label(*decline_reason));
    return j;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    j["signature"] = signature.to_json();
    return j;
  }

  static ContractResponse from_json(const nlohmann::json& j) {
    ContractResponse r;
    r.contract_id = Uuid::parse(j.at("contract_id").get<std::string>());
    const auto& status = j.at("status").get_ref<const std::string&>();
    if (status == "fulfilled")
      r.status = ResponseStatus::fulfilled;
    else if (status == "declined")
      r.status = ResponseStatus::declined;
    else
      throw ProtocolError("unknown response status");
    if (j.contains("result")) r.result = SafeTable::from_json(j.at("result"));
    if (j.contains("decline_reason"))
      r.decline_reason = decline_reason_from_label(j.at("decline_reason").get<std::string>());
    const bool fulfilled = r.status == ResponseStatus::fulfilled;
    if (fulfilled != r.result.has_value() || fulfilled == r.decline_reason.has_value())
      throw ProtocolError("response status does not match result/decline_reason presence");
    for (const auto& id : j.at("dataset_ids_used"))
      r.dataset_ids_used.push_back(Uuid::parse(id.get<std::string>()));
    r.validity_duration = j.at("validity_duration").get<std::int64_t>();
    for (const auto& rc : j.at("consent_receipts"))
      r.consent_receipts.push_back(ConsentReceipt::from_json(rc));
    r.responded_at = from_rfc3339(j.at("responded_at").get<std::string>());
    r.provider = PrincipalId::from_json(j.at("provider"));
    r.signature = SignatureEnvelope::from_json(j.at("signature"));
    return r;
  }
};

}  // namespace opal
