#pragma once

// The data provider node. Raw rows never leave this process: a contract
// comes in, the pipeline below runs in fixed order, and only a signed
// aggregate (or a signed decline) goes out. Every contract is audited on
// receipt and every response before release; an audit failure suppresses
// the response entirely.
//
//   1 validate_contract   -> invalid-contract / unknown-algorithm / ...
//   2 verify_token        -> consent-denied
//   3 consent mask        -> consent-denied when nobody consents
//   4 evaluate            -> data-unavailable on evaluation failure
//   5 differencing guard  -> related-query-detected
//   6 apply_policy        -> k-anonymity suppression
//   7 audit               -> fail closed
//   8 sign                -> response released

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/audit.hpp"
#include "opal/canonical.hpp"
#include "opal/consent.hpp"
#include "opal/contract.hpp"
#include "opal/crypto.hpp"
#include "opal/dataset.hpp"
#include "opal/dsl.hpp"
#include "opal/error.hpp"
#include "opal/evaluate.hpp"
#include "opal/policy.hpp"
#include "opal/registry.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct ProviderConfig {
  Uuid repository_id;
  std::vector<Uuid> domains;  // broadcast domains this node participates in
  PolicyConfig policy;
  std::int64_t response_validity_seconds{86400};
  std::int64_t max_future_skew_seconds{kDefaultMaxClockSkewSeconds};

  void validate() const {
    policy.validate();
    if (response_validity_seconds < 1) throw ConfigError("response validity must be positive");
    if (max_future_skew_seconds < 0) throw ConfigError("clock skew bound must be non-negative");
  }
};

// Live token re-check at execution time; the consent authority answers with
// the currently consenting subjects so revocation needs no propagation lag.
using IntrospectionFn = std::function<IntrospectionResult(const ConsentToken&, Timestamp)>;

class ProviderNode {
 public:
  ProviderNode(KeyPair key, ProviderConfig config, KeyDirectory trusted_vetters,
               KeyDirectory querier_keys, KeyDirectory authority_keys,
               IntrospectionFn introspect, std::filesystem::path audit_path,
               Clock clock = system_clock())
      : key_(std::move(key)),
        principal_{Role::data_provider, key_.fingerprint()},
        config_(std::move(config)),
        registry_(config_.repository_id, config_.domains, std::move(trusted_vetters)),
        querier_keys_(std::move(querier_keys)),
        authority_keys_(std::move(authority_keys)),
        introspect_(std::move(introspect)),
        audit_(std::move(audit_path), clock),
        clock_(std::move(clock)) {
    config_.validate();
    if (!introspect_) throw ConfigError("provider requires an introspection channel");
  }

  const PrincipalId& principal() const { return principal_; }
  std::vector<std::uint8_t> public_key() const { return key_.public_key(); }
  const ProviderConfig& config() const { return config_; }
  TemplateRegistry& registry() { return registry_; }
  const TemplateRegistry& registry() const { return registry_; }
  AuditLog& audit() { return audit_; }

  Registration register_template(const AlgorithmTemplate& tmpl) {
    return registry_.register_template(tmpl);
  }

  // Re-ingesting a dataset_id replaces the snapshot wholesale.
  DatasetSnapshot ingest(const std::string& csv_text, const DataSchema& schema,
                         const Uuid& dataset_id) {
    auto snap = std::make_shared<const DatasetSnapshot>(
        ingest_dataset(csv_text, schema, dataset_id, clock_()));
    std::unique_lock lock(datasets_mutex_);
    datasets_[dataset_id] = snap;
    return *snap;
  }

  void add_dataset(DatasetSnapshot snapshot) {
    auto snap = std::make_shared<const DatasetSnapshot>(std::move(snapshot));
    std::unique_lock lock(datasets_mutex_);
    datasets_[snap->dataset_id] = snap;
  }

  std::vector<Uuid> dataset_ids() const {
    std::shared_lock lock(datasets_mutex_);
    std::vector<Uuid> out;
    out.reserve(datasets_.size());
    for (const auto& [id, snap] : datasets_) out.push_back(id);
    return out;
  }

  // Template listing annotated with the dataset ids each template can run
  // against, so queriers know which dataset to request consent for.
  nlohmann::json templates_for_wire() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const AlgorithmTemplate& tmpl : registry_.templates()) {
      nlohmann::json entry = tmpl.to_json();
      nlohmann::json ids = nlohmann::json::array();
      for (const auto& [id, snap] : snapshot_copies())
        if (schemas_equal(snap->schema, tmpl.data_schema)) ids.push_back(id.str());
      entry["dataset_ids"] = std::move(ids);
      arr.push_back(std::move(entry));
    }
    return arr;
  }

  ContractResponse handle_contract(const Contract& contract) {
    const Timestamp now = clock_();
    audit_.append(AuditKind::contract_received, contract.contract_id,
                  sha256(canonicalize(contract.to_json())));

    ValidationReport report =
        validate_contract(contract, registry_, querier_keys_, now,
                          config_.max_future_skew_seconds);
    if (!report.ok()) return decline(contract, decline_reason_for(report), now);

    // The template's declared schema must name exactly one local snapshot.
    const std::optional<AlgorithmTemplate> tmpl = registry_.find(contract.algorithm_id);
    std::shared_ptr<const DatasetSnapshot> snap;
    for (const auto& [id, candidate] : snapshot_copies()) {
      if (!schemas_equal(candidate->schema, tmpl->data_schema)) continue;
      if (snap) return decline(contract, DeclineReason::data_unavailable, now);
      snap = candidate;
    }
    if (!snap) return decline(contract, DeclineReason::data_unavailable, now);

    const TokenCheck token_check =
        verify_token(contract, snap->dataset_id, authority_keys_, querier_keys_, now);
    if (token_check != TokenCheck::ok)
      return decline(contract, DeclineReason::consent_denied, now);
    const ConsentToken& token = *contract.consent_token;
    audit_.append(AuditKind::token_verified, contract.contract_id,
                  sha256(canonicalize(token.to_json())));

    const IntrospectionResult live = introspect_(token, now);
    if (!live.valid || live.consenting_subjects.empty())
      return decline(contract, DeclineReason::consent_denied, now);
    const std::vector<std::string>& subjects = snap->subject_values();
    std::vector<bool> mask(subjects.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      mask[i] = live.consenting_subjects.count(subjects[i]) != 0;
      any = any || mask[i];
    }
    if (!any) return decline(contract, DeclineReason::consent_denied, now);

    const auto ast = registry_.ast_of(contract.algorithm_id);
    BindResult bound = bind_parameters(*ast, contract.parameter_bindings);
    AggregateTable table;
    try {
      table = evaluate(*ast, *snap, mask, *bound.bindings);
    } catch (const EvalError&) {
      return decline(contract, DeclineReason::data_unavailable, now);
    }

    std::vector<std::set<std::int64_t>> cohorts;
    cohorts.reserve(table.rows.size());
    for (const AggregateRow& row : table.rows) cohorts.push_back(row.cohort_row_ids);
    if (differencing_guard(history_, contract.querier, snap->dataset_id, contract.contract_id,
                           cohorts, config_.policy) == GuardDecision::decline)
      return decline(contract, DeclineReason::related_query_detected, now);

    SafeTable safe = apply_policy(table, config_.policy);

    ConsentReceipt receipt;
    receipt.algorithm_id = contract.algorithm_id;
    receipt.dataset_id = snap->dataset_id;
    receipt.data_provider = principal_;
    receipt.querier = contract.querier;
    receipt.terms_of_use = tmpl->terms_of_use;
    receipt.token_id = token.token_id;
    receipt.executed_at = now;

    ContractResponse response = ContractResponse::make_fulfilled(
        contract.contract_id, std::move(safe), {snap->dataset_id},
        config_.response_validity_seconds, {std::move(receipt)}, now, principal_);
    record_execution(contract.contract_id, *snap, mask);
    return release(std::move(response), AuditKind::response_issued);
  }

  // Subject transparency: contracts whose execution actually included any
  // row belonging to this subject.
  std::vector<Uuid> contracts_touching_subject(const std::string& subject_fingerprint) const {
    std::lock_guard<std::mutex> lock(executions_mutex_);
    std::vector<Uuid> out;
    for (const auto& [contract_id, included] : executions_)
      if (included.count(subject_fingerprint) != 0) out.push_back(contract_id);
    return out;
  }

 private:
  static bool schemas_equal(const DataSchema& a, const DataSchema& b) {
    return canonicalize(a.to_json()) == canonicalize(b.to_json());
  }

  std::vector<std::pair<Uuid, std::shared_ptr<const DatasetSnapshot>>> snapshot_copies() const {
    std::shared_lock lock(datasets_mutex_);
    return {datasets_.begin(), datasets_.end()};
  }

  // First failing check decides the reason, in report order.
  static DeclineReason decline_reason_for(const ValidationReport& report) {
    for (const ValidationCheck& check : report.checks) {
      if (check.passed) continue;
      if (check.name == "known-algorithm") return DeclineReason::unknown_algorithm;
      if (check.name == "repository-match") return DeclineReason::data_unavailable;
      return DeclineReason::invalid_contract;
    }
    return DeclineReason::invalid_contract;
  }

  ContractResponse decline(const Contract& contract, DeclineReason reason, Timestamp now) {
    return release(ContractResponse::make_declined(contract.contract_id, reason, now, principal_),
                   AuditKind::decline_issued);
  }

  // Audit precedes signing: the audited digest is the signed region's
  // digest, so the log commits to exactly what the signature covers.
  ContractResponse release(ContractResponse response, AuditKind kind) {
    audit_.append(kind, response.contract_id, sha256(canonicalize(response.signing_view())));
    response.signature = sign_view(response.signing_view(), principal_, key_);
    return response;
  }

  void record_execution(const Uuid& contract_id, const DatasetSnapshot& snap,
                        const std::vector<bool>& mask) {
    std::set<std::string> included;
    const auto& subjects = snap.subject_values();
    for (std::size_t i = 0; i < subjects.size(); ++i)
      if (mask[i]) included.insert(subjects[i]);
    std::lock_guard<std::mutex> lock(executions_mutex_);
    executions_.emplace_back(contract_id, std::move(included));
  }

  KeyPair key_;
  PrincipalId principal_;
  ProviderConfig config_;
  TemplateRegistry registry_;
  KeyDirectory querier_keys_;
  KeyDirectory authority_keys_;
  IntrospectionFn introspect_;
  AuditLog audit_;
  Clock clock_;

  mutable std::shared_mutex datasets_mutex_;
  std::map<Uuid, std::shared_ptr<const DatasetSnapshot>> datasets_;

  QueryHistory history_;
  mutable std::mutex executions_mutex_;
  std::vector<std::pair<Uuid, std::set<std::string>>> executions_;
};

}  // namespace opal
