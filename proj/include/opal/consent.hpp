#pragma once

// Consent authority: stores subject-signed consent rules, issues signed
// consent tokens, and computes per-row consent masks. Consent is opt-in
// (no rule means excluded), deny overrides allow, and revocation takes
// effect the moment revoke_rule returns because every decision re-reads
// the live rule store.

#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "opal/consent_types.hpp"
#include "opal/contract.hpp"
#include "opal/crypto.hpp"
#include "opal/dataset.hpp"
#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

// ── token verification (runs on the provider side) ──

enum class TokenCheck {
  ok,
  missing,
  bad_signature,
  expired,
  wrong_querier,
  wrong_algorithm,
  wrong_dataset,
  not_bound,
};

inline std::string_view token_check_label(TokenCheck c) {
  switch (c) {
    case TokenCheck::ok: return "ok";
    case TokenCheck::missing: return "missing";
    case TokenCheck::bad_signature: return "bad-signature";
    case TokenCheck::expired: return "expired";
    case TokenCheck::wrong_querier: return "wrong-querier";
    case TokenCheck::wrong_algorithm: return "wrong-algorithm";
    case TokenCheck::wrong_dataset: return "wrong-dataset";
    case TokenCheck::not_bound: return "not-bound";
  }
  throw ProtocolError("unknown token check");
}

// Checks the token embedded in a contract: authority signature, lifetime,
// (querier, algorithm, dataset) agreement, and that the token lies inside
// the region the querier signed. A token pasted in after signing makes the
// signed view fail while the view without the token still verifies.
inline TokenCheck verify_token(const Contract& contract, const Uuid& resolved_dataset_id,
                               const KeyDirectory& authority_keys,
                               const KeyDirectory& querier_keys, Timestamp at) {
  if (!contract.consent_token) return TokenCheck::missing;
  const ConsentToken& token = *contract.consent_token;
  if (!verify_view(token.signing_view(), token.signature, authority_keys))
    return TokenCheck::bad_signature;
  if (at.seconds > token.expires_at.seconds) return TokenCheck::expired;
  if (!(token.querier == contract.querier)) return TokenCheck::wrong_querier;
  if (token.algorithm_id != contract.algorithm_id) return TokenCheck::wrong_algorithm;
  if (token.dataset_id != resolved_dataset_id) return TokenCheck::wrong_dataset;
  if (!verify_view(contract.signing_view(), contract.signature, querier_keys))
    return TokenCheck::not_bound;
  return TokenCheck::ok;
}

// ── consent authority service ──

struct IntrospectionResult {
  bool valid{false};
  std::string reason;  // empty when valid
  // Subjects (key fingerprints) consenting right now under live rules; the
  // caller masks rows against this set, so revocation has zero lag.
  std::set<std::string> consenting_subjects;
};

class ConsentService {
 public:
  // event_path persists rule events as one JSON line each; empty = in-memory.
  ConsentService(KeyPair authority_key, std::filesystem::path event_path = {},
                 Clock clock = system_clock(), std::int64_t max_token_ttl_seconds = 86400)
      : key_(std::move(authority_key)),
        authority_{Role::consent_authority, key_.fingerprint()},
        event_path_(std::move(event_path)),
        clock_(std::move(clock)),
        max_ttl_(max_token_ttl_seconds) {
    if (max_ttl_ < 1) throw ConfigError("token ttl cap must be positive");
    if (!event_path_.empty()) {
      replay_events();
      event_file_ = std::fopen(event_path_.string().c_str(), "ab");
      if (event_file_ == nullptr) throw ConfigError("cannot open consent event store");
    }
  }

  ~ConsentService() {
    if (event_file_ != nullptr) std::fclose(event_file_);
  }

  ConsentService(const ConsentService&) = delete;
  ConsentService& operator=(const ConsentService&) = delete;

  const PrincipalId& authority() const { return authority_; }
  std::vector<std::uint8_t> authority_public_key() const { return key_.public_key(); }

  void add_subject_key(const std::vector<std::uint8_t>& public_key) {
    std::unique_lock lock(mutex_);
    subject_keys_.add(public_key);
  }

  // The rule must be signed by its own subject; the signed view excludes the
  // revoked flag so a rule cannot be un-revoked by replaying its creation.
  Uuid set_rule(const ConsentRule& rule, const SignatureEnvelope& subject_signature) {
    std::unique_lock lock(mutex_);
    if (!(subject_signature.signer == rule.subject))
      throw ProtocolError("rule must be signed by its subject");
    if (!verify_view(rule.signing_view(), subject_signature, subject_keys_))
      throw ProtocolError("rule signature does not verify");
    if (rules_.count(rule.rule_id) != 0) throw ProtocolError("rule id already exists");
    ConsentRule stored = rule;
    stored.revoked = false;
    persist_event({{"event", "rule-set"}, {"rule", stored.to_json()}});
    rules_.emplace(stored.rule_id, stored);
    return stored.rule_id;
  }

  static nlohmann::json revoke_view(const Uuid& rule_id) {
    return {{"action", "revoke-rule"}, {"rule_id", rule_id.str()}};
  }

  // Revocation is permanent; the rule id can never be reused.
  void revoke_rule(const Uuid& rule_id, const SignatureEnvelope& subject_signature) {
    std::unique_lock lock(mutex_);
    auto it = rules_.find(rule_id);
    if (it == rules_.end()) throw ProtocolError("unknown rule id");
    if (!(subject_signature.signer == it->second.subject))
      throw ProtocolError("revocation must be signed by the rule's subject");
    if (!verify_view(revoke_view(rule_id), subject_signature, subject_keys_))
      throw ProtocolError("revocation signature does not verify");
    if (!it->second.revoked) {
      persist_event({{"event", "rule-revoked"}, {"rule_id", rule_id.str()}});
      it->second.revoked = true;
    }
  }

  // Issues iff at least one subject nets out to consent; nullopt is a
  // denial, not an error. granting_rule_ids lists the allow rules that
  // carried consenting subjects, sorted by id.
  std::optional<ConsentToken> issue_token(const PrincipalId& querier, const Uuid& algorithm_id,
                                          const Uuid& dataset_id, std::int64_t ttl_seconds) {
    std::shared_lock lock(mutex_);
    if (ttl_seconds < 1) throw ProtocolError("token ttl must be positive");
    const Timestamp now = clock_();
    std::set<Uuid> granting;
    bool any_subject = false;
    for_each_subject_verdict(dataset_id, algorithm_id, querier, now,
                             [&](const PrincipalId&, const std::vector<const ConsentRule*>& allows,
                                 bool denied) {
                               if (denied || allows.empty()) return;
                               any_subject = true;
                               for (const ConsentRule* r : allows) granting.insert(r->rule_id);
                             });
    if (!any_subject) return std::nullopt;

    ConsentToken token;
    token.token_id = Uuid::random();
    token.querier = querier;
    token.algorithm_id = algorithm_id;
    token.dataset_id = dataset_id;
    token.issued_at = now;
    token.expires_at = Timestamp{now.seconds + std::min(ttl_seconds, max_ttl_)};
    token.granting_rule_ids.assign(granting.begin(), granting.end());
    token.issuer = authority_;
    token.signature = sign_view(token.signing_view(), authority_, key_);
    return token;
  }

  // Subjects (key fingerprints) whose live rules net out to consent.
  std::set<std::string> consenting_subjects(const Uuid& dataset_id, const Uuid& algorithm_id,
                                            const PrincipalId& querier, Timestamp at) const {
    std::shared_lock lock(mutex_);
    std::set<std::string> out;
    for_each_subject_verdict(dataset_id, algorithm_id, querier, at,
                             [&](const PrincipalId& subject,
                                 const std::vector<const ConsentRule*>& allows, bool denied) {
                               if (!denied && !allows.empty()) out.insert(subject.key_fingerprint);
                             });
    return out;
  }

  // Bit i is true iff row i's subject consents; rows of unknown subjects
  // stay false (opt-in default).
  std::vector<bool> consent_mask(const DatasetSnapshot& snapshot, const Uuid& algorithm_id,
                                 const PrincipalId& querier, Timestamp at) const {
    const auto consenting =
        consenting_subjects(snapshot.dataset_id, algorithm_id, querier, at);
    const std::vector<std::string>& subjects = snapshot.subject_values();
    std::vector<bool> mask(subjects.size(), false);
    for (std::size_t i = 0; i < subjects.size(); ++i)
      mask[i] = consenting.count(subjects[i]) != 0;
    return mask;
  }

  // Live re-evaluation of a token: signature and lifetime decide validity,
  // and the consenting set is recomputed from current rules.
  IntrospectionResult introspect(const ConsentToken& token, Timestamp at) const {
    IntrospectionResult result;
    KeyDirectory self;
    self.add(key_.public_key());
    if (!verify_view(token.signing_view(), token.signature, self)) {
      result.reason = "bad-signature";
      return result;
    }
    if (at.seconds > token.expires_at.seconds) {
      result.reason = "expired";
      return result;
    }
    result.valid = true;
    result.consenting_subjects =
        consenting_subjects(token.dataset_id, token.algorithm_id, token.querier, at);
    return result;
  }

  std::vector<ConsentRule> rules() const {
    std::shared_lock lock(mutex_);
    std::vector<ConsentRule> out;
    out.reserve(rules_.size());
    for (const auto& [id, rule] : rules_) out.push_back(rule);
    return out;
  }

 private:
  // Calls fn(subject, active matching allow rules, any matching deny) once
  // per subject that has at least one matching active rule. Caller holds a lock.
  template <typename Fn>
  void for_each_subject_verdict(const Uuid& dataset_id, const Uuid& algorithm_id,
                                const PrincipalId& querier, Timestamp at, Fn&& fn) const {
    std::map<PrincipalId, std::pair<std::vector<const ConsentRule*>, bool>> per_subject;
    for (const auto& [id, rule] : rules_) {
      if (rule.dataset_id != dataset_id) continue;
      if (!rule.active_at(at) || !rule.matches(algorithm_id, querier)) continue;
      auto& [allows, denied] = per_subject[rule.subject];
      if (rule.effect == ConsentEffect::deny)
        denied = true;
      else
        allows.push_back(&rule);
    }
    for (const auto& [subject, verdict] : per_subject)
      fn(subject, verdict.first, verdict.second);
  }

  void persist_event(const nlohmann::json& event) {
    if (event_file_ == nullptr) return;
    const std::string line = event.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), event_file_) != line.size() ||
        std::fflush(event_file_) != 0 || ::fsync(::fileno(event_file_)) != 0)
      throw ConfigError("consent event append not durable");
  }

  void replay_events() {
    std::FILE* f = std::fopen(event_path_.string().c_str(), "rb");
    if (f == nullptr) return;  // fresh store
    std::string content;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, n);
    std::fclose(f);
    std::size_t pos = 0;
    while (pos < content.size()) {
      std::size_t end = content.find('\n', pos);
      if (end == std::string::npos) end = content.size();
      std::string_view line(content.data() + pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      nlohmann::json event;
      try {
        event = nlohmann::json::parse(line);
        const std::string kind = event.at("event").get<std::string>();
        if (kind == "rule-set") {
          ConsentRule rule = ConsentRule::from_json(event.at("rule"));
          rules_.emplace(rule.rule_id, rule);
        } else if (kind == "rule-revoked") {
          rules_.at(Uuid::parse(event.at("rule_id").get<std::string>())).revoked = true;
        } else {
          throw ProtocolError("unknown event kind");
        }
      } catch (const std::exception&) {
        throw ConfigError("consent event store is unreadable");
      }
    }
  }

  KeyPair key_;
  PrincipalId authority_;
  std::filesystem::path event_path_;
  Clock clock_;
  std::int64_t max_ttl_;
  std::FILE* event_file_{nullptr};
  mutable std::shared_mutex mutex_;
  std::map<Uuid, ConsentRule> rules_;
  KeyDirectory subject_keys_;
};

}  // namespace opal
