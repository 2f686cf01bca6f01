#pragma once

// Shared federation rig: deterministic keys for each role, an in-memory
// consent authority on a controllable clock, and helpers that produce vetted
// templates, enrolled subjects, and signed contracts. Used by the provider,
// gateway, transport, and end-to-end suites.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "opal/consent.hpp"
#include "opal/contract.hpp"
#include "opal/provider.hpp"
#include "opal/registry.hpp"

namespace fx {

inline std::vector<std::uint8_t> seed_bytes(unsigned char b) {
  return std::vector<std::uint8_t>(32, b);
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir()
      : path(std::filesystem::temp_directory_path() /
             ("opal-fx-" + opal::Uuid::random().str().substr(0, 8))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct Subject {
  opal::KeyPair key;
  opal::PrincipalId id;
  opal::Uuid rule_id;  // the allow rule created at enrollment
};

struct Federation {
  TempDir dir;
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'700'000'000);
  opal::Clock clock = [n = now] { return opal::Timestamp{*n}; };

  opal::KeyPair vetter_key = opal::KeyPair::from_seed(seed_bytes(0x11));
  opal::PrincipalId vetter{opal::Role::data_provider, vetter_key.fingerprint()};
  opal::KeyPair querier_key = opal::KeyPair::from_seed(seed_bytes(0x22));
  opal::PrincipalId querier{opal::Role::querier, querier_key.fingerprint()};
  opal::ConsentService authority{opal::KeyPair::from_seed(seed_bytes(0xA1)), {}, clock};

  int provider_seq = 0;

  opal::KeyDirectory vetter_dir() const {
    opal::KeyDirectory d;
    d.add(vetter_key.public_key());
    return d;
  }
  opal::KeyDirectory querier_dir() const {
    opal::KeyDirectory d;
    d.add(querier_key.public_key());
    return d;
  }
  opal::KeyDirectory authority_dir() const {
    opal::KeyDirectory d;
    d.add(authority.authority_public_key());
    return d;
  }

  static opal::DataSchema people_schema() {
    return opal::DataSchema{{{"person", opal::SemanticType::subject_id},
                             {"age", opal::SemanticType::integer},
                             {"income", opal::SemanticType::decimal},
                             {"region", opal::SemanticType::categorical}}};
  }

  std::unique_ptr<opal::ProviderNode> make_provider(unsigned char key_seed,
                                                    const opal::Uuid& repo,
                                                    std::vector<opal::Uuid> domains = {},
                                                    opal::PolicyConfig policy = {}) {
    opal::ProviderConfig config;
    config.repository_id = repo;
    config.domains = std::move(domains);
    config.policy = policy;
    auto audit = dir.path / ("audit-" + std::to_string(++provider_seq) + ".jsonl");
    return std::make_unique<opal::ProviderNode>(
        opal::KeyPair::from_seed(seed_bytes(key_seed)), config, vetter_dir(), querier_dir(),
        authority_dir(),
        [this](const opal::ConsentToken& token, opal::Timestamp at) {
          return authority.introspect(token, at);
        },
        audit, clock);
  }

  opal::AlgorithmTemplate vetted_template(std::string source, const opal::Uuid& target,
                                          opal::DataSchema schema = people_schema()) {
    opal::AlgorithmTemplate t;
    t.template_id = opal::Uuid::random();
    t.algorithm_id = opal::Uuid::random();
    t.description = "test algorithm";
    t.algorithm_source = std::move(source);
    t.target_repository_id = target;
    t.data_schema = std::move(schema);
    t.cost_to_querier = opal::Decimal::from_units(1);
    t.terms_of_use = "aggregate use only";
    t.publisher = vetter;
    t.vetting_signatures = {opal::sign_view(t.signing_view(), vetter, vetter_key)};
    return t;
  }

  // Registers the subject's key and a wildcard allow rule for the dataset.
  Subject enroll(unsigned char key_seed, const opal::Uuid& dataset) {
    Subject s{opal::KeyPair::from_seed(seed_bytes(key_seed)), {}, {}};
    s.id = opal::PrincipalId{opal::Role::subject, s.key.fingerprint()};
    authority.add_subject_key(s.key.public_key());
    opal::ConsentRule rule;
    rule.rule_id = opal::Uuid::random();
    rule.subject = s.id;
    rule.dataset_id = dataset;
    s.rule_id = authority.set_rule(rule, opal::sign_view(rule.signing_view(), s.id, s.key));
    return s;
  }

  void revoke(const Subject& s) {
    authority.revoke_rule(
        s.rule_id,
        opal::sign_view(opal::ConsentService::revoke_view(s.rule_id), s.id, s.key));
  }

  opal::ConsentToken token_for(const opal::Uuid& algorithm, const opal::Uuid& dataset,
                               std::int64_t ttl = 3600) {
    auto t = authority.issue_token(querier, algorithm, dataset, ttl);
    if (!t) throw std::runtime_error("fixture: consent token denied");
    return *t;
  }

  opal::Contract contract(const opal::Uuid& algorithm_id, const opal::Uuid& target,
                          nlohmann::json bindings = nlohmann::json::object(),
                          std::optional<opal::ConsentToken> token = std::nullopt) {
    opal::Contract c;
    c.contract_id = opal::Uuid::random();
    c.algorithm_id = algorithm_id;
    c.target_repository_id = target;
    c.parameter_bindings = std::move(bindings);
    c.consent_token = std::move(token);
    c.issued_at = opal::Timestamp{*now};
    c.querier = querier;
    c.signature = opal::sign_view(c.signing_view(), querier, querier_key);
    return c;
  }
};

// CSV for people_schema(); each row is (subject, age, income-text, region).
struct PersonRow {
  std::string subject;
  std::int64_t age{0};
  std::string income{"0"};
  std::string region{"north"};
};

inline std::string people_csv(const std::vector<PersonRow>& rows) {
  std::string csv = "person,age,income,region\n";
  for (const auto& r : rows)
    csv += r.subject + "," + std::to_string(r.age) + "," + r.income + "," + r.region + "\n";
  return csv;
}

}  // namespace fx
