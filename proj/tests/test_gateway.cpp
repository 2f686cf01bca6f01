// Gateway semantics: header-only routing, byte-identical forwarding,
// verify-then-collate packaging, and gateway-signed stand-in declines for
// anything that cannot answer for itself.

#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <future>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "opal/gateway.hpp"
#include "opal/provider.hpp"
#include "support/fixtures.hpp"
#include "support/generators.hpp"

using namespace opal;

namespace {

Member member_of(const ProviderNode& node, std::string endpoint,
                 std::vector<Uuid> repos, std::vector<Uuid> domains = {}) {
  Member m;
  m.provider = node.principal();
  m.endpoint = std::move(endpoint);
  m.repository_ids = std::move(repos);
  m.domains = std::move(domains);
  m.public_key = node.public_key();
  return m;
}

// Transport stub scripted per endpoint.
struct ScriptedClient : ProviderClient {
  std::function<nlohmann::json(const Member&, const nlohmann::json&)> on_submit =
      [](const Member&, const nlohmann::json&) -> nlohmann::json {
    throw std::runtime_error("no submit script");
  };
  std::function<nlohmann::json(const Member&)> on_list =
      [](const Member&) -> nlohmann::json { throw std::runtime_error("no list script"); };

  nlohmann::json submit_contract(const Member& m, const nlohmann::json& wire) override {
    return on_submit(m, wire);
  }
  nlohmann::json list_templates(const Member& m) override { return on_list(m); }
};

Member dummy_member(unsigned char seed, std::vector<Uuid> repos,
                    std::vector<Uuid> domains = {}) {
  KeyPair key = KeyPair::from_seed(fx::seed_bytes(seed));
  Member m;
  m.provider = PrincipalId{Role::data_provider, key.fingerprint()};
  m.endpoint = "member-" + std::to_string(seed);
  m.repository_ids = std::move(repos);
  m.domains = std::move(domains);
  m.public_key = key.public_key();
  return m;
}

Gateway make_gateway(MembershipRegistry registry, std::shared_ptr<ProviderClient> client,
                     GatewayConfig config = {}) {
  return Gateway(KeyPair::from_seed(fx::seed_bytes(0xE7)), std::move(registry),
                 std::move(client), config,
                 [] { return Timestamp{1'700'000'000}; });
}

}  // namespace

TEST_CASE("gateway: membership admission is strict", "[gateway]") {
  MembershipRegistry reg;
  Uuid repo = Uuid::random();
  reg.add_member(dummy_member(0x01, {repo}));

  SECTION("key fingerprint must match the principal") {
    Member bad = dummy_member(0x02, {Uuid::random()});
    bad.provider.key_fingerprint = std::string(64, 'a');
    CHECK_THROWS_AS(reg.add_member(bad), ConfigError);
  }
  SECTION("the same principal cannot join twice") {
    CHECK_THROWS_AS(reg.add_member(dummy_member(0x01, {Uuid::random()})), ConfigError);
  }
  SECTION("a repository id belongs to one member") {
    CHECK_THROWS_AS(reg.add_member(dummy_member(0x03, {repo})), ConfigError);
  }
}

TEST_CASE("gateway: exact repository match outranks domain broadcast", "[gateway]") {
  Uuid repo_a = Uuid::random(), repo_b = Uuid::random(), domain = Uuid::random();
  MembershipRegistry reg;
  reg.add_member(dummy_member(0x01, {repo_a}, {domain}));
  reg.add_member(dummy_member(0x02, {repo_b}, {domain}));
  reg.add_member(dummy_member(0x03, {Uuid::random()}));

  auto exact = reg.route(repo_a);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].endpoint == "member-1");

  auto broadcast = reg.route(domain);
  REQUIRE(broadcast.size() == 2);

  CHECK(reg.route(Uuid::random()).empty());
}

TEST_CASE("gateway: routing matches an independent scan", "[gateway]") {
  gen::Rng rng(20260814);
  std::vector<Uuid> ids;
  for (int i = 0; i < 12; ++i) ids.push_back(Uuid::random());

  for (int round = 0; round < 30; ++round) {
    MembershipRegistry reg;
    struct Decl {
      std::string endpoint;
      std::set<Uuid> repos, domains;
    };
    std::vector<Decl> decls;
    std::set<Uuid> claimed;
    for (unsigned char m = 1; m <= 6; ++m) {
      Decl d;
      d.endpoint = "member-" + std::to_string(m);
      while (d.repos.empty()) {
        for (int k = 0; k < 2; ++k) {
          const Uuid& candidate = ids[gen::pick_index(rng, ids.size())];
          if (claimed.count(candidate) == 0 && gen::chance(rng, 0.7)) {
            d.repos.insert(candidate);
            claimed.insert(candidate);
          }
        }
      }
      for (int k = 0; k < 2; ++k)
        if (gen::chance(rng, 0.5)) d.domains.insert(ids[gen::pick_index(rng, ids.size())]);
      reg.add_member(dummy_member(m, {d.repos.begin(), d.repos.end()},
                                  {d.domains.begin(), d.domains.end()}));
      decls.push_back(std::move(d));
    }

    for (const Uuid& target : ids) {
      // Restated routing rule: the repository owner if one exists, otherwise
      // everyone declaring the domain.
      std::set<std::string> expect;
      for (const auto& d : decls)
        if (d.repos.count(target) != 0) expect.insert(d.endpoint);
      if (expect.empty())
        for (const auto& d : decls)
          if (d.domains.count(target) != 0) expect.insert(d.endpoint);

      std::set<std::string> got;
      for (const Member& m : reg.route(target)) got.insert(m.endpoint);
      CHECK(got == expect);
    }
  }
}

TEST_CASE("gateway: domain broadcast collates fulfilments and declines", "[gateway]") {
  fx::Federation fed;
  Uuid domain = Uuid::random();
  Uuid repo1 = Uuid::random(), repo2 = Uuid::random(), repo3 = Uuid::random();
  Uuid dataset = Uuid::random();

  PolicyConfig policy;
  policy.k_min = 2;
  auto p1 = fed.make_provider(0x61, repo1, {domain}, policy);
  auto p2 = fed.make_provider(0x62, repo2, {domain}, policy);
  auto p3 = fed.make_provider(0x63, repo3, {domain}, policy);

  // One algorithm offered federation-wide: per-member template copies share
  // the algorithm id but each targets its owner's repository.
  auto t1 = fed.vetted_template("group by region\nagg count() as n\n", repo1);
  auto retarget = [&](AlgorithmTemplate t, const Uuid& repo) {
    t.target_repository_id = repo;
    t.vetting_signatures = {sign_view(t.signing_view(), fed.vetter, fed.vetter_key)};
    return t;
  };
  REQUIRE(p1->register_template(t1).accepted);
  REQUIRE(p2->register_template(retarget(t1, repo2)).accepted);
  REQUIRE(p3->register_template(retarget(t1, repo3)).accepted);

  // Two members replicate the dataset; the third holds nothing.
  std::vector<fx::PersonRow> rows;
  for (int i = 0; i < 5; ++i) {
    auto s = fed.enroll(static_cast<unsigned char>(0xB0 + i), dataset);
    rows.push_back({s.id.key_fingerprint, 20 + i, "3.50", i < 3 ? "north" : "south"});
  }
  p1->ingest(fx::people_csv(rows), fx::Federation::people_schema(), dataset);
  p2->ingest(fx::people_csv(rows), fx::Federation::people_schema(), dataset);

  std::map<std::string, ProviderNode*> nodes{
      {"p1", p1.get()}, {"p2", p2.get()}, {"p3", p3.get()}};
  auto client = std::make_shared<ScriptedClient>();
  client->on_submit = [&](const Member& m, const nlohmann::json& wire) {
    return nodes.at(m.endpoint)->handle_contract(Contract::from_json(wire)).to_json();
  };

  MembershipRegistry reg;
  reg.add_member(member_of(*p1, "p1", {repo1}, {domain}));
  reg.add_member(member_of(*p2, "p2", {repo2}, {domain}));
  reg.add_member(member_of(*p3, "p3", {repo3}, {domain}));
  Gateway gateway = make_gateway(std::move(reg), client);

  Contract c = fed.contract(t1.algorithm_id, domain, nlohmann::json::object(),
                            fed.token_for(t1.algorithm_id, dataset));
  FederatedResponse fr = gateway.handle_contract(c);

  CHECK(fr.contract_ids == std::vector<Uuid>{c.contract_id});
  CHECK(fr.gateway == gateway.principal());
  REQUIRE(fr.member_responses.size() == 3);

  int fulfilled = 0, declined = 0;
  for (const MemberResponse& mr : fr.member_responses) {
    // Every inner signature must verify against its actual signer.
    KeyDirectory keys;
    if (mr.response.provider == gateway.principal())
      keys.add(gateway.public_key());
    else
      keys.add(nodes.at(mr.member == p1->principal()   ? "p1"
                        : mr.member == p2->principal() ? "p2"
                                                       : "p3")
                   ->public_key());
    CHECK(verify_view(mr.response.signing_view(), mr.response.signature, keys));

    if (mr.response.status == ResponseStatus::fulfilled) {
      ++fulfilled;
      REQUIRE(mr.response.result.has_value());
      CHECK(mr.response.result->rows.size() == 2);  // north 3, south 2
    } else {
      ++declined;
      CHECK(mr.member == p3->principal());
      CHECK(mr.response.provider == p3->principal());  // the member answered itself
      CHECK(mr.response.decline_reason == DeclineReason::data_unavailable);
    }
  }
  CHECK(fulfilled == 2);
  CHECK(declined == 1);

  // Gateway countersignature covers the collated package.
  KeyDirectory gw;
  gw.add(gateway.public_key());
  CHECK(verify_view(fr.signing_view(), fr.gateway_signature, gw));

  // Round-trip through the wire form preserves everything signed.
  FederatedResponse reparsed = FederatedResponse::from_json(fr.to_json());
  CHECK(canonicalize(reparsed.signing_view()) == canonicalize(fr.signing_view()));
  CHECK(verify_view(reparsed.signing_view(), reparsed.gateway_signature, gw));
}

TEST_CASE("gateway: forwards the contract byte-identically and blind", "[gateway]") {
  fx::Federation fed;
  Uuid repo = Uuid::random();
  auto client = std::make_shared<ScriptedClient>();
  std::string forwarded;
  client->on_submit = [&](const Member&, const nlohmann::json& wire) -> nlohmann::json {
    forwarded = canonicalize(wire);
    throw std::runtime_error("unreachable member");
  };
  MembershipRegistry reg;
  reg.add_member(dummy_member(0x04, {repo}));
  Gateway gateway = make_gateway(std::move(reg), client);

  // Nothing about this contract is locally valid — unknown algorithm, junk
  // bindings — yet routing must depend on the target header alone.
  Contract c = fed.contract(Uuid::random(), repo,
                            nlohmann::json{{"asymmetric", "nonsense"}});
  FederatedResponse fr = gateway.handle_contract(c);
  CHECK(forwarded == canonicalize(c.to_json()));
  REQUIRE(fr.member_responses.size() == 1);
  CHECK(fr.member_responses[0].response.decline_reason == DeclineReason::data_unavailable);
}

TEST_CASE("gateway: stands in for members that cannot answer", "[gateway]") {
  fx::Federation fed;
  Uuid repo = Uuid::random();
  Member m = dummy_member(0x05, {repo});

  auto run = [&](std::shared_ptr<ScriptedClient> client, GatewayConfig config = {}) {
    MembershipRegistry reg;
    reg.add_member(m);
    Gateway gateway = make_gateway(std::move(reg), client, config);
    Contract c = fed.contract(Uuid::random(), repo);
    FederatedResponse fr = gateway.handle_contract(c);
    REQUIRE(fr.member_responses.size() == 1);
    const MemberResponse& mr = fr.member_responses[0];
    CHECK(mr.member == m.provider);                      // attributed to the member
    CHECK(mr.response.provider == gateway.principal());  // but answered by the gateway
    CHECK(mr.response.decline_reason == DeclineReason::data_unavailable);
    KeyDirectory gw;
    gw.add(gateway.public_key());
    CHECK(verify_view(mr.response.signing_view(), mr.response.signature, gw));
    return fr;
  };

  SECTION("transport failure") {
    auto client = std::make_shared<ScriptedClient>();
    client->on_submit = [](const Member&, const nlohmann::json&) -> nlohmann::json {
      throw std::runtime_error("connection refused");
    };
    run(client);
  }

  SECTION("garbage response body") {
    auto client = std::make_shared<ScriptedClient>();
    client->on_submit = [](const Member&, const nlohmann::json&) {
      return nlohmann::json{{"weather", "sunny"}};
    };
    run(client);
  }

  SECTION("member slower than the collation barrier") {
    auto client = std::make_shared<ScriptedClient>();
    auto never = std::make_shared<std::promise<void>>();
    client->on_submit = [never](const Member&, const nlohmann::json&) -> nlohmann::json {
      never->get_future().wait();  // blocks forever; the worker is abandoned
      return nlohmann::json::object();
    };
    GatewayConfig config;
    config.member_timeout_seconds = 1;
    run(client, config);
    never->set_value();  // release the stranded worker before teardown
  }

  SECTION("no member serves the target at all") {
    MembershipRegistry reg;
    reg.add_member(m);
    Gateway gateway = make_gateway(std::move(reg), std::make_shared<ScriptedClient>());
    Contract c = fed.contract(Uuid::random(), Uuid::random());
    FederatedResponse fr = gateway.handle_contract(c);
    REQUIRE(fr.member_responses.size() == 1);
    // Nobody to stand in for: the gateway attributes the decline to itself.
    CHECK(fr.member_responses[0].member == gateway.principal());
    CHECK(fr.member_responses[0].response.decline_reason ==
          DeclineReason::data_unavailable);
  }
}

TEST_CASE("gateway: collation verifies before it countersigns", "[gateway]") {
  fx::Federation fed;
  Uuid repo = Uuid::random();
  auto node = fed.make_provider(0x64, repo, {});
  Member m = member_of(*node, "p", {repo});

  MembershipRegistry reg;
  reg.add_member(m);
  Gateway gateway = make_gateway(std::move(reg), std::make_shared<ScriptedClient>());
  Uuid contract_id = Uuid::random();

  // A genuine member decline (signed by the member) survives collation.
  ContractResponse honest = ContractResponse::make_declined(
      contract_id, DeclineReason::consent_denied, Timestamp{1'700'000'000},
      node->principal());
  honest.signature = sign_view(honest.signing_view(), node->principal(),
                               KeyPair::from_seed(fx::seed_bytes(0x64)));

  // The same decline with one flipped field must be replaced, not repackaged.
  ContractResponse forged = honest;
  forged.responded_at = Timestamp{1'700'000'001};

  FederatedResponse fr =
      gateway.collate(contract_id, {MemberResponse{m.provider, honest},
                                    MemberResponse{m.provider, forged}});
  REQUIRE(fr.member_responses.size() == 2);

  CHECK(fr.member_responses[0].response == honest);  // untouched, same signature
  CHECK(fr.member_responses[0].response.decline_reason == DeclineReason::consent_denied);

  const ContractResponse& replaced = fr.member_responses[1].response;
  CHECK(replaced.provider == gateway.principal());
  CHECK(replaced.decline_reason == DeclineReason::invalid_contract);
  CHECK(fr.member_responses[1].member == m.provider);
  KeyDirectory gw;
  gw.add(gateway.public_key());
  CHECK(verify_view(replaced.signing_view(), replaced.signature, gw));
}

TEST_CASE("gateway: a response claiming to be the gateway's needs its key",
          "[gateway]") {
  fx::Federation fed;
  Uuid repo = Uuid::random();
  Member m = dummy_member(0x06, {repo});
  MembershipRegistry reg;
  reg.add_member(m);
  Gateway gateway = make_gateway(std::move(reg), std::make_shared<ScriptedClient>());

  // A member forging a "gateway-synthesized" decline fails the self-key check.
  ContractResponse fake = ContractResponse::make_declined(
      Uuid::random(), DeclineReason::data_unavailable, Timestamp{1'700'000'000},
      gateway.principal());
  fake.signature = sign_view(fake.signing_view(), gateway.principal(),
                             KeyPair::from_seed(fx::seed_bytes(0x06)));
  FederatedResponse fr = gateway.collate(fake.contract_id, {MemberResponse{m.provider, fake}});
  CHECK(fr.member_responses[0].response.decline_reason == DeclineReason::invalid_contract);
  KeyDirectory gw;
  gw.add(gateway.public_key());
  CHECK(verify_view(fr.member_responses[0].response.signing_view(),
                    fr.member_responses[0].response.signature, gw));
}

TEST_CASE("gateway: federation template listing unions what members offer",
          "[gateway]") {
  MembershipRegistry reg;
  reg.add_member(dummy_member(0x07, {Uuid::random()}));
  reg.add_member(dummy_member(0x08, {Uuid::random()}));
  reg.add_member(dummy_member(0x09, {Uuid::random()}));

  auto client = std::make_shared<ScriptedClient>();
  client->on_list = [](const Member& m) -> nlohmann::json {
    if (m.endpoint == "member-7")
      return nlohmann::json::array({{{"name", "a"}}, {{"name", "b"}}});
    if (m.endpoint == "member-8") throw std::runtime_error("unreachable");
    return nlohmann::json{{"not", "an array"}};
  };
  Gateway gateway = make_gateway(std::move(reg), client);

  auto listing = gateway.federation_templates();
  REQUIRE(listing.is_array());
  CHECK(listing.size() == 2);
  CHECK(listing[0].at("name") == "a");
}

TEST_CASE("gateway: configuration is validated up front", "[gateway]") {
  MembershipRegistry reg;
  GatewayConfig bad;
  bad.member_timeout_seconds = 0;
  CHECK_THROWS_AS(make_gateway(reg, std::make_shared<ScriptedClient>(), bad), ConfigError);
  CHECK_THROWS_AS(Gateway(KeyPair::from_seed(fx::seed_bytes(0x0A)), reg, nullptr),
                  ConfigError);
}
