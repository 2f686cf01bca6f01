// Gateway daemon: routes contracts to the configured members over HTTP,
// collates their signed responses, and serves /contracts, /templates and
// /members.
//
// Config:
//   {
//     "key_file": "gateway.key",
//     "member_timeout_seconds": 10,           // optional
//     "members": [<member json>, ...]         // provider, endpoint,
//   }                                         // repository_ids, domains,
//                                             // public_key (base64)

#include <memory>

#include "daemon_common.hpp"

using namespace opal;

int main(int argc, char** argv) {
  CLI::App app{"OPAL federation gateway daemon"};
  tool::DaemonArgs args;
  tool::add_daemon_options(app, args);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return tool::parse_exit(app, e);
  }

  return tool::guarded_main([&] {
    const nlohmann::json config = read_json_file(args.config_file);
    GatewayConfig gc;
    gc.member_timeout_seconds =
        config.value("member_timeout_seconds", gc.member_timeout_seconds);

    MembershipRegistry registry;
    for (const auto& m : config.value("members", nlohmann::json::array()))
      registry.add_member(Member::from_json(m));

    auto gateway = std::make_shared<Gateway>(
        tool::load_key(config, args.config_file), std::move(registry),
        std::make_shared<HttpProviderClient>(gc.member_timeout_seconds), gc);
    GatewayServer server(std::move(gateway));
    return tool::serve(server, args);
  });
}
