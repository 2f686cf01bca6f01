// Consent-authority daemon: subjects named in the config may register and
// revoke rules over the wire; queriers request tokens; providers introspect.
// With "event_path" set, rules and revocations survive restarts.
//
// Config:
//   {
//     "key_file": "authority.key",
//     "event_path": "consent-events.jsonl",   // optional: enables persistence
//     "max_token_ttl_seconds": 86400,         // optional
//     "subjects": ["<base64 pub>", ...]
//   }

#include <memory>

#include "daemon_common.hpp"

using namespace opal;

int main(int argc, char** argv) {
  CLI::App app{"OPAL consent-authority daemon"};
  tool::DaemonArgs args;
  tool::add_daemon_options(app, args);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return tool::parse_exit(app, e);
  }

  return tool::guarded_main([&] {
    const nlohmann::json config = read_json_file(args.config_file);
    std::filesystem::path events;
    if (config.contains("event_path"))
      events = tool::resolve(args.config_file, config.at("event_path").get<std::string>());

    auto service = std::make_shared<ConsentService>(
        tool::load_key(config, args.config_file), events, system_clock(),
        config.value("max_token_ttl_seconds", std::int64_t{86400}));
    for (const auto& b64 : config.value("subjects", nlohmann::json::array()))
      service->add_subject_key(from_base64(b64.get<std::string>()));

    ConsentServer server(std::move(service));
    return tool::serve(server, args);
  });
}
