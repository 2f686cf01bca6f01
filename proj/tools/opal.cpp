// Querier command line: key management, template discovery, contract
// construction and signing, submission, response verification, rendering.
//
// Exit codes (stable): 0 fulfilled, 2 declined, 3 response verification
// failure, 1 usage or transport error. Nothing received is written to disk
// unless --out is given explicitly.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "opal/keystore.hpp"
#include "opal/net.hpp"

using namespace opal;

namespace {

constexpr int kExitFulfilled = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDeclined = 2;
constexpr int kExitVerification = 3;

// ── shared options ──

struct CommonOpts {
  std::string endpoint;
  std::string keys_dir;
  std::int64_t timeout{10};
  bool raw_json{false};
};

// Flag beats OPAL_KEY_DIR beats ./opal-keys.
KeyStore open_keystore(const CommonOpts& opts) {
  if (!opts.keys_dir.empty()) return KeyStore(opts.keys_dir);
  if (const char* env = std::getenv("OPAL_KEY_DIR"); env != nullptr && *env != '\0')
    return KeyStore(env);
  return KeyStore("opal-keys");
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_endpoint = true) {
  auto* ep = cmd->add_option("--endpoint", opts.endpoint,
                             "provider or gateway base URL, e.g. http://127.0.0.1:8080");
  if (needs_endpoint) ep->required();
  cmd->add_option("--keys", opts.keys_dir,
                  "key directory (default: $OPAL_KEY_DIR, then ./opal-keys)");
  cmd->add_option("--timeout", opts.timeout, "network timeout in seconds (default 10)");
  cmd->add_flag("--json", opts.raw_json, "emit the raw wire body instead of a table");
}

nlohmann::json get_json(const CommonOpts& opts, const std::string& path) {
  auto client = net_detail::make_client(opts.endpoint, opts.timeout);
  return net_detail::parse_reply(client.Get(path), "GET " + path);
}

// ── rendering ──

std::string cell_text(const SafeCell& cell) {
  if (std::holds_alternative<Suppressed>(cell)) return std::string(kSuppressionMarker);
  if (std::holds_alternative<std::int64_t>(cell))
    return std::to_string(std::get<std::int64_t>(cell));
  return std::get<Decimal>(cell).str();
}

void print_aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (widths.size() <= i) widths.resize(i + 1, 0);
      widths[i] = std::max(widths[i], row[i].size());
    }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i != 0) line += "  ";
      line += row[i];
      if (i + 1 < row.size()) line.append(widths[i] - row[i].size(), ' ');
    }
    std::printf("%s\n", line.c_str());
  }
}

void render_table(const SafeTable& table) {
  std::set<std::string> value_names;
  for (const auto& row : table.rows)
    for (const auto& [name, _] : row.values) value_names.insert(name);

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = table.group_key_columns;
  header.insert(header.end(), value_names.begin(), value_names.end());
  header.push_back("cohort");
  grid.push_back(std::move(header));

  for (const auto& row : table.rows) {
    std::vector<std::string> line = row.group_key;
    for (const auto& name : value_names) {
      auto it = row.values.find(name);
      line.push_back(it == row.values.end() ? "" : cell_text(it->second));
    }
    line.push_back(cell_text(row.cohort_size_disclosed));
    grid.push_back(std::move(line));
  }
  print_aligned(grid);
}

std::string short_fp(const std::string& fp) { return fp.substr(0, 12); }

void render_response(const ContractResponse& r) {
  if (r.status == ResponseStatus::fulfilled) {
    std::printf("fulfilled  provider=%s  validity=%llds\n", short_fp(r.provider.key_fingerprint).c_str(),
                static_cast<long long>(r.validity_duration));
    render_table(*r.result);
  } else {
    std::printf("declined  provider=%s  reason=%s\n", short_fp(r.provider.key_fingerprint).c_str(),
                std::string(decline_reason_label(*r.decline_reason)).c_str());
  }
}

// ── response verification ──

bool signature_ok(const nlohmann::json& view, const SignatureEnvelope& sig,
                  const KeyDirectory& keys) {
  try {
    return verify_view(view, sig, keys);
  } catch (const SchemeError&) {
    return false;
  }
}

// Keys a response may legitimately be signed with: providers for direct
// answers, the gateway for countersignatures and stood-in declines.
KeyDirectory response_keys(const KeyStore& store) {
  KeyDirectory dir;
  for (const auto& e : store.known_keys())
    if (e.role == Role::data_provider || e.role == Role::gateway) dir.add(e.public_key);
  return dir;
}

// ── keygen ──

struct KeygenOpts {
  CommonOpts common;
  std::string role{"querier"};
  std::string name;
};

int cmd_keygen(const KeygenOpts& opts) {
  KeyStore store = open_keystore(opts.common);
  const Role role = role_from_label(opts.role);
  const std::string name = opts.name.empty() ? opts.role : opts.name;
  const PrincipalId id = store.create(role, name);
  std::printf("created %s key '%s' in %s\n", opts.role.c_str(), name.c_str(),
              store.dir().string().c_str());
  std::printf("fingerprint %s\n", id.key_fingerprint.c_str());
  std::printf("share %s with your peers; the .key file never leaves this machine\n",
              store.public_path(name).string().c_str());
  return kExitFulfilled;
}

// ── templates ──

// Failing vetting signatures are flagged, never hidden: an operator must be
// able to see that a catalogue entry exists and that it cannot be trusted.
std::string vetting_status(const nlohmann::json& entry, const KeyDirectory& known) {
  AlgorithmTemplate tmpl;
  try {
    tmpl = AlgorithmTemplate::from_json(entry);
  } catch (const std::exception&) {
    return "unparseable";
  }
  if (tmpl.vetting_signatures.empty()) return "unvetted";
  for (const auto& sig : tmpl.vetting_signatures)
    if (!signature_ok(tmpl.signing_view(), sig, known)) return "signature-invalid";
  return "ok";
}

int cmd_templates(const CommonOpts& opts) {
  const nlohmann::json listing = get_json(opts, "/templates");
  if (opts.raw_json) {
    std::printf("%s\n", listing.dump().c_str());
    return kExitFulfilled;
  }
  const KeyDirectory known = open_keystore(opts).directory();
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"TEMPLATE", "ALGORITHM", "COST", "VETTING", "DESCRIPTION", "TERMS"});
  for (const auto& entry : listing) {
    const std::string status = vetting_status(entry, known);
    std::string cost = "?";
    if (status != "unparseable")
      cost = Decimal::from_double(entry.at("cost_to_querier").get<double>()).str();
    grid.push_back({entry.value("template_id", "?"), entry.value("algorithm_id", "?"), cost,
                    status, entry.value("description", ""), entry.value("terms_of_use", "")});
  }
  print_aligned(grid);
  return kExitFulfilled;
}

// ── run ──

struct RunOpts {
  CommonOpts common;
  std::string consent_endpoint;
  std::string template_id;
  std::string target;
  std::string dataset;
  std::vector<std::string> bindings;
  std::string key_name{"querier"};
  std::string out_file;
  std::string voucher_file;
  std::int64_t ttl{3600};
};

nlohmann::json parse_bindings(const std::vector<std::string>& pairs) {
  nlohmann::json bindings = nlohmann::json::object();
  for (const std::string& pair : pairs) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--bind expects name=value, got '" + pair + "'");
    const std::string name = pair.substr(0, eq);
    const std::string value = pair.substr(eq + 1);
    try {
      bindings[name] = nlohmann::json::parse(value);  // numbers, quoted strings
    } catch (const nlohmann::json::exception&) {
      bindings[name] = value;  // bare words are categorical strings
    }
  }
  return bindings;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  return {s.begin(), s.end()};
}

int render_federated(const nlohmann::json& body, const KeyDirectory& keys,
                     const Uuid& contract_id, const RunOpts& opts) {
  const FederatedResponse fr = FederatedResponse::from_json(body);
  if (!signature_ok(fr.signing_view(), fr.gateway_signature, keys)) {
    std::fprintf(stderr, "verification failed: gateway countersignature does not verify\n");
    return kExitVerification;
  }
  if (fr.contract_ids != std::vector<Uuid>{contract_id}) {
    std::fprintf(stderr, "verification failed: response names a different contract\n");
    return kExitVerification;
  }
  for (const MemberResponse& mr : fr.member_responses) {
    if (!signature_ok(mr.response.signing_view(), mr.response.signature, keys)) {
      std::fprintf(stderr, "verification failed: member response signature does not verify\n");
      return kExitVerification;
    }
    if (mr.response.contract_id != contract_id) {
      std::fprintf(stderr, "verification failed: member response names a different contract\n");
      return kExitVerification;
    }
  }

  int fulfilled = 0;
  if (!opts.common.raw_json)
    std::printf("federated  gateway=%s  members=%zu\n",
                short_fp(fr.gateway.key_fingerprint).c_str(), fr.member_responses.size());
  for (const MemberResponse& mr : fr.member_responses) {
    if (mr.response.status == ResponseStatus::fulfilled) ++fulfilled;
    if (!opts.common.raw_json) {
      std::printf("member %s: ", short_fp(mr.member.key_fingerprint).c_str());
      render_response(mr.response);
    }
  }
  return fulfilled > 0 ? kExitFulfilled : kExitDeclined;
}

int cmd_run(const RunOpts& opts) {
  KeyStore store = open_keystore(opts.common);
  const KeyPair key = store.load_private(opts.key_name);
  const Role role = store.role_of(opts.key_name);
  if (role != Role::querier)
    throw ConfigError("key '" + opts.key_name + "' has role " +
                      std::string(role_label(role)) + "; contracts are signed by queriers");
  const PrincipalId querier{Role::querier, key.fingerprint()};

  // Discover the algorithm behind the chosen template.
  const nlohmann::json listing = get_json(opts.common, "/templates");
  const nlohmann::json* entry = nullptr;
  for (const auto& e : listing)
    if (e.value("template_id", "") == opts.template_id) {
      entry = &e;
      break;
    }
  if (entry == nullptr) throw ConfigError("no template " + opts.template_id + " at endpoint");
  const AlgorithmTemplate tmpl = AlgorithmTemplate::from_json(*entry);

  Contract contract;
  contract.contract_id = Uuid::random();
  contract.algorithm_id = tmpl.algorithm_id;
  contract.target_repository_id =
      opts.target.empty() ? tmpl.target_repository_id : Uuid::parse(opts.target);
  contract.parameter_bindings = parse_bindings(opts.bindings);
  contract.issued_at = system_clock()();
  contract.querier = querier;
  if (!opts.voucher_file.empty()) contract.payment_voucher = read_bytes(opts.voucher_file);

  // Consent comes first: the token must sit inside the signed region.
  if (!opts.consent_endpoint.empty()) {
    Uuid dataset;
    if (!opts.dataset.empty()) {
      dataset = Uuid::parse(opts.dataset);
    } else {
      const auto ids = entry->value("dataset_ids", nlohmann::json::array());
      if (ids.empty())
        throw ConfigError("endpoint lists no dataset for this template; pass --dataset");
      dataset = Uuid::parse(ids.front().get<std::string>());
    }
    ConsentClient consent(opts.consent_endpoint, opts.common.timeout);
    auto token = consent.request_token(querier, tmpl.algorithm_id, dataset, opts.ttl);
    if (!token) {
      std::printf("declined  reason=consent-denied (no token issued)\n");
      return kExitDeclined;
    }
    contract.consent_token = *token;
  }

  contract.signature = sign_view(contract.signing_view(), querier, key);

  auto client = net_detail::make_client(opts.common.endpoint, opts.common.timeout);
  const nlohmann::json body = net_detail::parse_reply(
      client.Post("/contracts", contract.to_json().dump(), "application/json"),
      "submit contract");

  const KeyDirectory keys = response_keys(store);
  int rc;
  if (body.contains("member_responses")) {
    rc = render_federated(body, keys, contract.contract_id, opts);
  } else {
    const ContractResponse r = ContractResponse::from_json(body);
    if (!signature_ok(r.signing_view(), r.signature, keys)) {
      std::fprintf(stderr, "verification failed: response signature does not verify\n");
      return kExitVerification;
    }
    if (r.contract_id != contract.contract_id) {
      std::fprintf(stderr, "verification failed: response names a different contract\n");
      return kExitVerification;
    }
    if (!opts.common.raw_json) render_response(r);
    rc = r.status == ResponseStatus::fulfilled ? kExitFulfilled : kExitDeclined;
  }

  // The wire body is only persisted or echoed once verification has passed.
  if (opts.common.raw_json) std::printf("%s\n", body.dump().c_str());
  if (!opts.out_file.empty()) write_text_file(opts.out_file, body.dump() + "\n");
  return rc;
}

// ── audit-head / transparency ──

int cmd_audit_head(const CommonOpts& opts) {
  const nlohmann::json head = get_json(opts, "/audit/head");
  if (opts.raw_json) {
    std::printf("%s\n", head.dump().c_str());
  } else {
    std::printf("head %s\nsize %lld\n", head.at("head").get<std::string>().c_str(),
                head.at("size").get<long long>());
  }
  return kExitFulfilled;
}

int cmd_transparency(const CommonOpts& opts, const std::string& subject) {
  auto client = net_detail::make_client(opts.endpoint, opts.timeout);
  const nlohmann::json reply = net_detail::parse_reply(
      client.Post("/transparency", nlohmann::json{{"subject", subject}}.dump(),
                  "application/json"),
      "transparency lookup");
  if (opts.raw_json) {
    std::printf("%s\n", reply.dump().c_str());
    return kExitFulfilled;
  }
  const auto& ids = reply.at("contract_ids");
  if (ids.empty()) {
    std::printf("no contracts touched this subject\n");
  } else {
    for (const auto& id : ids) std::printf("%s\n", id.get<std::string>().c_str());
  }
  return kExitFulfilled;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OPAL querier client: discover templates, run vetted algorithms, "
               "verify signed answers"};
  app.require_subcommand(1);

  KeygenOpts keygen;
  auto* keygen_cmd = app.add_subcommand("keygen", "create a principal key pair");
  add_common(keygen_cmd, keygen.common, /*needs_endpoint=*/false);
  keygen_cmd->add_option("--role", keygen.role,
                         "querier | data-provider | gateway | consent-authority | subject");
  keygen_cmd->add_option("--name", keygen.name, "file stem (default: the role)");

  CommonOpts templates;
  auto* templates_cmd = app.add_subcommand("templates", "list vetted algorithm templates");
  add_common(templates_cmd, templates);

  RunOpts run;
  auto* run_cmd = app.add_subcommand("run", "execute a vetted algorithm and verify the answer");
  add_common(run_cmd, run.common);
  run_cmd->add_option("--template-id", run.template_id, "template to execute")->required();
  run_cmd->add_option("--consent", run.consent_endpoint,
                      "consent authority URL; a token is acquired before submission");
  run_cmd->add_option("--target", run.target,
                      "override the target repository (e.g. a domain id for broadcast)");
  run_cmd->add_option("--dataset", run.dataset, "dataset id for the consent token");
  run_cmd->add_option("--bind", run.bindings, "parameter binding name=value (repeatable)");
  run_cmd->add_option("--key-name", run.key_name, "querier key file stem (default 'querier')");
  run_cmd->add_option("--out", run.out_file, "write the verified raw response body here");
  run_cmd->add_option("--voucher", run.voucher_file, "attach this file as an opaque payment voucher");
  run_cmd->add_option("--ttl", run.ttl, "requested consent token lifetime in seconds");

  CommonOpts audit;
  auto* audit_cmd = app.add_subcommand("audit-head", "show a provider's audit chain head");
  add_common(audit_cmd, audit);

  CommonOpts transparency;
  std::string subject;
  auto* transparency_cmd =
      app.add_subcommand("transparency", "list contracts that touched a subject");
  add_common(transparency_cmd, transparency);
  transparency_cmd->add_option("--subject", subject, "subject key fingerprint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand(keygen_cmd)) return cmd_keygen(keygen);
    if (app.got_subcommand(templates_cmd)) return cmd_templates(templates);
    if (app.got_subcommand(run_cmd)) return cmd_run(run);
    if (app.got_subcommand(audit_cmd)) return cmd_audit_head(audit);
    return cmd_transparency(transparency, subject);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}
