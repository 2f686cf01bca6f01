#pragma once

// Vetted-template registry and contract validation. A template enters the
// registry only if every attached vetting signature verifies against the
// node's trusted vetter keys, the template targets this node, and its
// source parses against its own declared schema. Contract validation is a
// report, never an exception: each check is listed pass/fail.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/algorithm_template.hpp"
#include "opal/canonical.hpp"
#include "opal/contract.hpp"
#include "opal/crypto.hpp"
#include "opal/dsl.hpp"
#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct Registration {
  bool accepted{false};
  std::string reason;  // empty when accepted

  static Registration ok() { return {true, ""}; }
  static Registration rejected(std::string why) { return {false, std::move(why)}; }
};

class TemplateRegistry {
 public:
  TemplateRegistry(Uuid repository_id, std::vector<Uuid> served_domains,
                   KeyDirectory trusted_vetters)
      : repository_id_(repository_id), trusted_vetters_(std::move(trusted_vetters)) {
    served_.insert(repository_id_);
    served_.insert(served_domains.begin(), served_domains.end());
  }

  const Uuid& repository_id() const { return repository_id_; }

  // True for this node's repository id or any domain it participates in.
  bool serves(const Uuid& target) const { return served_.count(target) != 0; }

  Registration register_template(const AlgorithmTemplate& tmpl) {
    // Re-validate invariants even for in-process callers.
    try {
      tmpl.data_schema.validate();
    } catch (const std::exception& e) {
      return Registration::rejected(std::string("invalid: ") + e.what());
    }
    if (tmpl.cost_to_querier.micros < 0) return Registration::rejected("invalid: negative cost");
    if (tmpl.target_repository_id != repository_id_)
      return Registration::rejected("wrong-target");
    if (tmpl.vetting_signatures.empty())
      return Registration::rejected("vetting: no signatures");
    for (const SignatureEnvelope& env : tmpl.vetting_signatures) {
      bool good = false;
      try {
        good = verify_view(tmpl.signing_view(), env, trusted_vetters_);
      } catch (const SchemeError&) {
        good = false;
      }
      if (!good) return Registration::rejected("vetting: untrusted or invalid signature");
    }
    AlgorithmAst ast;
    try {
      ast = parse_algorithm(tmpl.algorithm_source, tmpl.data_schema);
    } catch (const DslParseError& e) {
      return Registration::rejected(std::string("parse: ") + e.what());
    }

    const std::string wire = canonicalize(tmpl.to_json());
    std::unique_lock lock(mutex_);
    auto it = entries_.find(tmpl.algorithm_id);
    if (it != entries_.end()) {
      if (it->second.wire == wire) return Registration::ok();  // idempotent re-registration
      return Registration::rejected("duplicate-id");
    }
    Entry entry{tmpl, std::make_shared<const AlgorithmAst>(std::move(ast)), wire};
    entries_.emplace(tmpl.algorithm_id, std::move(entry));
    return Registration::ok();
  }

  std::optional<AlgorithmTemplate> find(const Uuid& algorithm_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(algorithm_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.tmpl;
  }

  // Parse happens once at registration; lookups share the parsed form.
  std::shared_ptr<const AlgorithmAst> ast_of(const Uuid& algorithm_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(algorithm_id);
    if (it == entries_.end()) return nullptr;
    return it->second.ast;
  }

  std::vector<AlgorithmTemplate> templates() const {
    std::shared_lock lock(mutex_);
    std::vector<AlgorithmTemplate> out;
    out.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) out.push_back(entry.tmpl);
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  struct Entry {
    AlgorithmTemplate tmpl;
    std::shared_ptr<const AlgorithmAst> ast;
    std::string wire;  // canonical bytes, for idempotence comparison
  };

  Uuid repository_id_;
  std::set<Uuid> served_;
  KeyDirectory trusted_vetters_;
  mutable std::shared_mutex mutex_;
  std::map<Uuid, Entry> entries_;
};

// ── contract validation ──

struct ValidationCheck {
  std::string name;
  bool passed{false};
  std::string detail;  // empty when passed

  nlohmann::json to_json() const {
    return {{"name", name}, {"passed", passed}, {"detail", detail}};
  }
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  const ValidationCheck* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) arr.push_back(c.to_json());
    return {{"checks", arr}, {"ok", ok()}};
  }
};

inline constexpr std::int64_t kDefaultMaxClockSkewSeconds = 300;

// Five checks, always all listed: signature, known-algorithm,
// repository-match, binding-types, timestamp. Checks that need a template
// pass vacuously when the algorithm is unknown, so an unknown algorithm
// fails exactly one entry.
inline ValidationReport validate_contract(const Contract& contract,
                                          const TemplateRegistry& registry,
                                          const KeyDirectory& querier_keys, Timestamp now,
                                          std::int64_t max_future_skew_seconds =
                                              kDefaultMaxClockSkewSeconds) {
  ValidationReport report;

  ValidationCheck signature{"signature", false, ""};
  if (!(contract.signature.signer == contract.querier)) {
    signature.detail = "signer is not the contract's querier";
  } else {
    try {
      if (verify_view(contract.signing_view(), contract.signature, querier_keys))
        signature.passed = true;
      else
        signature.detail = "signature does not verify";
    } catch (const SchemeError& e) {
      signature.detail = e.what();
    }
  }
  report.checks.push_back(std::move(signature));

  const std::optional<AlgorithmTemplate> tmpl = registry.find(contract.algorithm_id);
  report.checks.push_back({"known-algorithm", tmpl.has_value(),
                           tmpl ? "" : "algorithm_id not in registry"});

  report.checks.push_back({"repository-match", registry.serves(contract.target_repository_id),
                           registry.serves(contract.target_repository_id)
                               ? ""
                               : "target repository not served by this node"});

  ValidationCheck bindings{"binding-types", true, ""};
  if (tmpl) {
    const auto ast = registry.ast_of(contract.algorithm_id);
    BindResult bound = bind_parameters(*ast, contract.parameter_bindings);
    if (!bound.bindings) {
      bindings.passed = false;
      bindings.detail = bound.error;
    }
  }
  report.checks.push_back(std::move(bindings));

  const bool timely = contract.issued_at.seconds <= now.seconds + max_future_skew_seconds;
  report.checks.push_back(
      {"timestamp", timely, timely ? "" : "contract issued too far in the future"});

  return report;
}

}  // namespace opal
