#pragma once

// File-backed principal keys for the CLI and daemons. A private key file
// holds the 32-byte seed and stays on this machine; public key files are
// what operators exchange and drop into a peers/ directory to trust. Both
// loaders recompute the fingerprint, so a corrupted or mislabelled file is
// a configuration error, never a silently different identity.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/stat.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/crypto.hpp"
#include "opal/encoding.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"

namespace opal {

inline constexpr std::string_view kPrivateKeyKind = "opal-private-key";
inline constexpr std::string_view kPublicKeyKind = "opal-public-key";

inline nlohmann::json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
  if (!out.flush()) throw ConfigError("cannot write " + file.string());
}

class KeyStore {
 public:
  struct PublicEntry {
    Role role{};
    std::vector<std::uint8_t> public_key;

    PrincipalId principal() const { return {role, fingerprint_of(public_key)}; }
  };

  explicit KeyStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  // Writes <name>.key (owner-only) and <name>.pub; refuses to clobber an
  // existing identity.
  PrincipalId create(Role role, const std::string& name) {
    const auto key_file = private_path(name);
    const auto pub_file = public_path(name);
    if (std::filesystem::exists(key_file) || std::filesystem::exists(pub_file))
      throw ConfigError("key files for '" + name + "' already exist");
    std::filesystem::create_directories(dir_);

    KeyPair key = KeyPair::generate();
    const nlohmann::json priv{{"kind", kPrivateKeyKind},
                              {"role", std::string(role_label(role))},
                              {"seed", to_base64(key.seed())}};
    write_text_file(key_file, priv.dump(2) + "\n");
    ::chmod(key_file.c_str(), S_IRUSR | S_IWUSR);
    write_public(pub_file, role, key.public_key());
    return {role, key.fingerprint()};
  }

  bool has_private(const std::string& name) const {
    return std::filesystem::exists(private_path(name));
  }

  KeyPair load_private(const std::string& name) const {
    const nlohmann::json j = read_json_file(private_path(name));
    if (j.value("kind", "") != kPrivateKeyKind)
      throw ConfigError(private_path(name).string() + " is not a private key file");
    return KeyPair::from_seed(from_base64(j.at("seed").get<std::string>()));
  }

  Role role_of(const std::string& name) const {
    const nlohmann::json j = read_json_file(private_path(name));
    return role_from_label(j.at("role").get<std::string>());
  }

  static PublicEntry read_public(const std::filesystem::path& file) {
    const nlohmann::json j = read_json_file(file);
    if (j.value("kind", "") != kPublicKeyKind)
      throw ConfigError(file.string() + " is not a public key file");
    PublicEntry e;
    e.role = role_from_label(j.at("role").get<std::string>());
    e.public_key = from_base64(j.at("public_key").get<std::string>());
    if (j.at("fingerprint").get<std::string>() != fingerprint_of(e.public_key))
      throw ConfigError(file.string() + ": fingerprint does not match the public key");
    return e;
  }

  // Every *.pub in the store and its peers/ subdirectory. Peers are how the
  // CLI learns which provider, gateway, and vetter keys to trust.
  std::vector<PublicEntry> known_keys() const {
    std::vector<PublicEntry> out;
    for (const auto& d : {dir_, dir_ / "peers"}) {
      if (!std::filesystem::is_directory(d)) continue;
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(d))
        if (entry.path().extension() == ".pub") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out.push_back(read_public(f));
    }
    return out;
  }

  KeyDirectory directory_for(Role role) const {
    KeyDirectory dir;
    for (const auto& e : known_keys())
      if (e.role == role) dir.add(e.public_key);
    return dir;
  }

  KeyDirectory directory() const {
    KeyDirectory dir;
    for (const auto& e : known_keys()) dir.add(e.public_key);
    return dir;
  }

  // Drops a peer's public key into peers/ under the given name.
  void add_peer(const std::string& name, Role role,
                const std::vector<std::uint8_t>& public_key) {
    std::filesystem::create_directories(dir_ / "peers");
    write_public(dir_ / "peers" / (name + ".pub"), role, public_key);
  }

  std::filesystem::path private_path(const std::string& name) const {
    return dir_ / (name + ".key");
  }
  std::filesystem::path public_path(const std::string& name) const {
    return dir_ / (name + ".pub");
  }

 private:
  static void write_public(const std::filesystem::path& file, Role role,
                           const std::vector<std::uint8_t>& public_key) {
    const nlohmann::json pub{{"kind", kPublicKeyKind},
                             {"role", std::string(role_label(role))},
                             {"public_key", to_base64(public_key)},
                             {"fingerprint", fingerprint_of(public_key)}};
    write_text_file(file, pub.dump(2) + "\n");
  }

  std::filesystem::path dir_;
};

}  // namespace opal
