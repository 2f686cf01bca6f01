// Data-provider daemon: loads templates and datasets from its config,
// verifies consent through the configured authority, and serves the
// provider endpoints (/contracts, /templates, /audit/head, /transparency).
//
// Config:
//   {
//     "key_file": "provider.key",
//     "repository_id": "<uuid>",
//     "domains": ["<uuid>", ...],
//     "policy": {"k_min": 3, "differencing_window": 100},        // optional
//     "response_validity_seconds": 86400,                        // optional
//     "max_future_skew_seconds": 300,                            // optional
//     "audit_path": "audit.jsonl",
//     "trusted_vetters": ["<base64 pub>", ...],
//     "queriers": ["<base64 pub>", ...],
//     "consent_authorities": ["<base64 pub>", ...],
//     "consent_endpoint": "http://127.0.0.1:NNNN",
//     "templates": ["template.json", ...],
//     "datasets": [{"dataset_id": "<uuid>", "csv": "people.csv",
//                   "schema": <schema json>}, ...]
//   }

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "daemon_common.hpp"

using namespace opal;

namespace {

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::shared_ptr<ProviderNode> build_node(const nlohmann::json& config,
                                         const std::filesystem::path& config_file) {
  ProviderConfig pc;
  pc.repository_id = Uuid::parse(config.at("repository_id").get<std::string>());
  for (const auto& d : config.value("domains", nlohmann::json::array()))
    pc.domains.push_back(Uuid::parse(d.get<std::string>()));
  if (config.contains("policy")) pc.policy = PolicyConfig::from_json(config.at("policy"));
  pc.response_validity_seconds =
      config.value("response_validity_seconds", pc.response_validity_seconds);
  pc.max_future_skew_seconds =
      config.value("max_future_skew_seconds", pc.max_future_skew_seconds);

  // The authority's clock rules introspection; the timestamp the node would
  // pass is deliberately ignored on the remote path.
  ConsentClient consent(config.at("consent_endpoint").get<std::string>());
  IntrospectionFn introspect = [consent](const ConsentToken& token, Timestamp) mutable {
    return consent.introspect(token);
  };

  auto node = std::make_shared<ProviderNode>(
      tool::load_key(config, config_file), pc, tool::key_list(config, "trusted_vetters"),
      tool::key_list(config, "queriers"), tool::key_list(config, "consent_authorities"),
      std::move(introspect),
      tool::resolve(config_file, config.at("audit_path").get<std::string>()));

  for (const auto& t : config.value("templates", nlohmann::json::array())) {
    const auto file = tool::resolve(config_file, t.get<std::string>());
    const Registration r = node->register_template(AlgorithmTemplate::from_json(read_json_file(file)));
    if (!r.accepted) throw ConfigError(file.string() + " rejected: " + r.reason);
  }

  for (const auto& d : config.value("datasets", nlohmann::json::array())) {
    node->ingest(read_file(tool::resolve(config_file, d.at("csv").get<std::string>())),
                 DataSchema::from_json(d.at("schema")),
                 Uuid::parse(d.at("dataset_id").get<std::string>()));
  }
  return node;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OPAL data-provider daemon"};
  tool::DaemonArgs args;
  tool::add_daemon_options(app, args);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return tool::parse_exit(app, e);
  }

  return tool::guarded_main([&] {
    const nlohmann::json config = read_json_file(args.config_file);
    ProviderServer server(build_node(config, args.config_file));
    return tool::serve(server, args);
  });
}
