#pragma once

// Federation gateway: routes signed contracts to member providers without
// altering them, collates the signed responses, and countersigns the
// package. The gateway can neither forge nor modify a member's answer;
// anything it synthesizes (no match, timeout, broken inner signature) is a
// decline signed with its own key, attributed to itself in the package.

#include <chrono>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/canonical.hpp"
#include "opal/contract.hpp"
#include "opal/crypto.hpp"
#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct Member {
  PrincipalId provider;
  std::string endpoint;  // opaque address handed to the transport client
  std::vector<Uuid> repository_ids;
  std::vector<Uuid> domains;
  std::vector<std::uint8_t> public_key;

  nlohmann::json to_json() const {
    nlohmann::json repos = nlohmann::json::array();
    for (const auto& id : repository_ids) repos.push_back(id.str());
    nlohmann::json doms = nlohmann::json::array();
    for (const auto& id : domains) doms.push_back(id.str());
    return {{"provider", provider.to_json()},
            {"endpoint", endpoint},
            {"repository_ids", repos},
            {"domains", doms},
            {"public_key", to_base64(public_key)}};
  }

  static Member from_json(const nlohmann::json& j) {
    Member m;
    m.provider = PrincipalId::from_json(j.at("provider"));
    m.endpoint = j.at("endpoint").get<std::string>();
    for (const auto& id : j.at("repository_ids"))
      m.repository_ids.push_back(Uuid::parse(id.get<std::string>()));
    for (const auto& id : j.at("domains")) m.domains.push_back(Uuid::parse(id.get<std::string>()));
    m.public_key = from_base64(j.at("public_key").get<std::string>());
    return m;
  }
};

class MembershipRegistry {
 public:
  void add_member(Member member) {
    if (fingerprint_of(member.public_key) != member.provider.key_fingerprint)
      throw ConfigError("member key does not match its principal");
    for (const Member& existing : members_)
      if (existing.provider == member.provider)
        throw ConfigError("member already registered");
    for (const Uuid& repo : member.repository_ids)
      if (!claimed_repos_.insert(repo).second)
        throw ConfigError("repository id served by two members");
    member_keys_.add(member.public_key);
    members_.push_back(std::move(member));
  }

  const std::vector<Member>& members() const { return members_; }
  const KeyDirectory& member_keys() const { return member_keys_; }
  bool empty() const { return members_.empty(); }

  // Exact repository match wins; otherwise every member declaring the
  // target as a domain receives the broadcast. Header-only decision: the
  // contract body is never consulted.
  std::vector<Member> route(const Uuid& target_repository_id) const {
    std::vector<Member> repo_matches;
    std::vector<Member> domain_matches;
    for (const Member& m : members_) {
      bool repo = false;
      for (const Uuid& id : m.repository_ids) repo = repo || id == target_repository_id;
      if (repo) {
        repo_matches.push_back(m);
        continue;
      }
      for (const Uuid& id : m.domains)
        if (id == target_repository_id) {
          domain_matches.push_back(m);
          break;
        }
    }
    return repo_matches.empty() ? domain_matches : repo_matches;
  }

 private:
  std::vector<Member> members_;
  std::set<Uuid> claimed_repos_;
  KeyDirectory member_keys_;
};

struct MemberResponse {
  PrincipalId member;  // who answered (the gateway itself for synthesized declines)
  ContractResponse response;

  nlohmann::json to_json() const {
    return {{"member", member.to_json()}, {"response", response.to_json()}};
  }

  static MemberResponse from_json(const nlohmann::json& j) {
    return {PrincipalId::from_json(j.at("member")),
            ContractResponse::from_json(j.at("response"))};
  }
};

struct FederatedResponse {
  std::vector<Uuid> contract_ids;
  std::vector<MemberResponse> member_responses;
  PrincipalId gateway;
  Timestamp collated_at;
  SignatureEnvelope gateway_signature;

  nlohmann::json signing_view() const {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : contract_ids) ids.push_back(id.str());
    nlohmann::json inner = nlohmann::json::array();
    for (const auto& mr : member_responses) inner.push_back(mr.to_json());
    return {{"contract_ids", ids},
            {"member_responses", inner},
            {"gateway", gateway.to_json()},
            {"collated_at", to_rfc3339(collated_at)}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    j["gateway_signature"] = gateway_signature.to_json();
    return j;
  }

  static FederatedResponse from_json(const nlohmann::json& j) {
    FederatedResponse f;
    for (const auto& id : j.at("contract_ids"))
      f.contract_ids.push_back(Uuid::parse(id.get<std::string>()));
    for (const auto& mr : j.at("member_responses"))
      f.member_responses.push_back(MemberResponse::from_json(mr));
    f.gateway = PrincipalId::from_json(j.at("gateway"));
    f.collated_at = from_rfc3339(j.at("collated_at").get<std::string>());
    f.gateway_signature = SignatureEnvelope::from_json(j.at("gateway_signature"));
    return f;
  }
};

// Transport used to reach member providers; implementations may be
// in-process (tests) or HTTP (daemons). Throw on transport failure.
class ProviderClient {
 public:
  virtual ~ProviderClient() = default;
  virtual nlohmann::json submit_contract(const Member& member,
                                         const nlohmann::json& contract_wire) = 0;
  virtual nlohmann::json list_templates(const Member& member) = 0;
};

struct GatewayConfig {
  std::int64_t member_timeout_seconds{10};

  void validate() const {
    if (member_timeout_seconds < 1) throw ConfigError("member timeout must be positive");
  }
};

class Gateway {
 public:
  Gateway(KeyPair key, MembershipRegistry registry, std::shared_ptr<ProviderClient> client,
          GatewayConfig config = {}, Clock clock = system_clock())
      : key_(std::move(key)),
        principal_{Role::gateway, key_.fingerprint()},
        registry_(std::move(registry)),
        client_(std::move(client)),
        config_(config),
        clock_(std::move(clock)) {
    config_.validate();
    if (!client_) throw ConfigError("gateway requires a provider client");
  }

  const PrincipalId& principal() const { return principal_; }
  std::vector<std::uint8_t> public_key() const { return key_.public_key(); }
  const MembershipRegistry& members() const { return registry_; }

  std::vector<Member> route(const Contract& contract) const {
    return registry_.route(contract.target_repository_id);
  }

  // Fan out, wait at the collation barrier, countersign the package. The
  // querier's contract is forwarded byte-identically; slow or unreachable
  // members come back as gateway-signed declines.
  FederatedResponse handle_contract(const Contract& contract) {
    const nlohmann::json wire = contract.to_json();
    const std::vector<Member> targets = route(contract);

    std::vector<MemberResponse> collected;
    if (targets.empty()) {
      collected.push_back(synthesize_decline(contract.contract_id, principal_));
    } else {
      std::vector<std::shared_future<Attempt>> futures;
      futures.reserve(targets.size());
      for (const Member& member : targets) futures.push_back(submit_async(member, wire));
      const auto deadline = std::chrono::steady_clock::now() +
                            std::chrono::seconds(config_.member_timeout_seconds);
      for (std::size_t i = 0; i < targets.size(); ++i)
        collected.push_back(settle(contract.contract_id, targets[i], futures[i], deadline));
    }
    return collate(contract.contract_id, std::move(collected));
  }

  // Packages already-settled member responses: inner signatures are checked
  // against member keys (gateway-synthesized declines against the gateway's
  // own key) and broken ones are replaced by gateway declines; verifiable
  // declines are preserved, never dropped.
  FederatedResponse collate(const Uuid& contract_id, std::vector<MemberResponse> responses) {
    KeyDirectory self;
    self.add(key_.public_key());
    for (MemberResponse& mr : responses) {
      const bool own = mr.response.provider == principal_;
      bool good = false;
      try {
        good = verify_view(mr.response.signing_view(), mr.response.signature,
                           own ? self : registry_.member_keys());
      } catch (const SchemeError&) {
        good = false;
      }
      if (!good) mr = synthesize_decline(contract_id, mr.member, DeclineReason::invalid_contract);
    }
    FederatedResponse fed;
    fed.contract_ids = {contract_id};
    fed.member_responses = std::move(responses);
    fed.gateway = principal_;
    fed.collated_at = clock_();
    fed.gateway_signature = sign_view(fed.signing_view(), principal_, key_);
    return fed;
  }

  // Union of member template listings; member signatures inside each entry
  // are passed through untouched. Unreachable members contribute nothing.
  nlohmann::json federation_templates() const {
    nlohmann::json all = nlohmann::json::array();
    for (const Member& member : registry_.members()) {
      try {
        nlohmann::json listing = client_->list_templates(member);
        if (!listing.is_array()) continue;
        for (auto& entry : listing) all.push_back(std::move(entry));
      } catch (const std::exception&) {
        continue;
      }
    }
    return all;
  }

 private:
  struct Attempt {
    bool ok{false};
    nlohmann::json body;
  };

  // Detached worker per member: the future is abandoned on timeout instead
  // of joined, so one stuck member cannot hold up the collation barrier.
  std::shared_future<Attempt> submit_async(const Member& member,
                                           const nlohmann::json& wire) const {
    auto promise = std::make_shared<std::promise<Attempt>>();
    std::shared_future<Attempt> future = promise->get_future().share();
    std::shared_ptr<ProviderClient> client = client_;
    std::thread([promise, client, member, wire]() {
      Attempt attempt;
      try {
        attempt.body = client->submit_contract(member, wire);
        attempt.ok = true;
      } catch (const std::exception&) {
        attempt.ok = false;
      }
      promise->set_value(std::move(attempt));
    }).detach();
    return future;
  }

  MemberResponse settle(const Uuid& contract_id, const Member& member,
                        const std::shared_future<Attempt>& future,
                        std::chrono::steady_clock::time_point deadline) {
    if (future.wait_until(deadline) != std::future_status::ready)
      return synthesize_decline(contract_id, member.provider);
    const Attempt& attempt = future.get();
    if (!attempt.ok) return synthesize_decline(contract_id, member.provider);
    try {
      MemberResponse mr{member.provider, ContractResponse::from_json(attempt.body)};
      return mr;
    } catch (const std::exception&) {
      return synthesize_decline(contract_id, member.provider);
    }
  }

  // A gateway-synthesized decline names the member it stands in for but is
  // signed by the gateway; collate() recognizes it by the gateway provider id.
  MemberResponse synthesize_decline(const Uuid& contract_id, const PrincipalId& member,
                                    DeclineReason reason = DeclineReason::data_unavailable) {
    ContractResponse decline =
        ContractResponse::make_declined(contract_id, reason, clock_(), principal_);
    decline.signature = sign_view(decline.signing_view(), principal_, key_);
    MemberResponse mr{member, std::move(decline)};
    return mr;
  }

  KeyPair key_;
  PrincipalId principal_;
  MembershipRegistry registry_;
  std::shared_ptr<ProviderClient> client_;
  GatewayConfig config_;
  Clock clock_;
};

}  // namespace opal
