#pragma once

// Shared plumbing for the three daemons: one --config JSON file describes
// the node, keys arrive as key files (private) or base64 strings (peers),
// and every daemon announces "LISTENING <port>" on stdout once it is
// actually accepting connections. --port-file writes the bare port number
// for harnesses that cannot read stdout.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "opal/keystore.hpp"
#include "opal/net.hpp"

namespace opal::tool {

struct DaemonArgs {
  std::filesystem::path config_file;
  std::string host{"127.0.0.1"};
  int port{0};  // 0 = ephemeral
  std::filesystem::path port_file;
};

inline void add_daemon_options(CLI::App& app, DaemonArgs& args) {
  app.add_option("--config", args.config_file, "JSON configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--host", args.host, "bind address (default 127.0.0.1)");
  app.add_option("--port", args.port, "listening port (default: ephemeral)");
  app.add_option("--port-file", args.port_file, "write the bound port to this file");
}

// Paths in a config file are relative to the file itself, not the cwd.
inline std::filesystem::path resolve(const std::filesystem::path& config_file,
                                     const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : config_file.parent_path() / p;
}

inline KeyPair load_key(const nlohmann::json& config,
                        const std::filesystem::path& config_file) {
  const auto file = resolve(config_file, config.at("key_file").get<std::string>());
  const nlohmann::json j = read_json_file(file);
  if (j.value("kind", "") != kPrivateKeyKind)
    throw ConfigError(file.string() + " is not a private key file");
  return KeyPair::from_seed(from_base64(j.at("seed").get<std::string>()));
}

// An array of base64 raw public keys, e.g. "trusted_vetters": ["...", ...].
inline KeyDirectory key_list(const nlohmann::json& config, const std::string& field) {
  KeyDirectory dir;
  if (!config.contains(field)) return dir;
  for (const auto& b64 : config.at(field)) dir.add(from_base64(b64.get<std::string>()));
  return dir;
}

inline int serve(HttpDaemon& daemon, const DaemonArgs& args) {
  daemon.start(args.host, args.port);
  if (!args.port_file.empty())
    write_text_file(args.port_file, std::to_string(daemon.port()) + "\n");
  daemon.announce();
  daemon.wait();
  return 0;
}

// CLI11's own exit codes leak construction details; everything that is not
// a clean exit (help text) maps to the stable usage-error code 1.
inline int parse_exit(CLI::App& app, const CLI::ParseError& e) {
  return app.exit(e) == 0 ? 0 : 1;
}

template <typename Fn>
int guarded_main(Fn fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace opal::tool
