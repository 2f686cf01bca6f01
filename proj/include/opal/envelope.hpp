#pragma once

// Detached signature envelope. A document's signing view (the document minus
// its own signature field) is canonicalized; the envelope records who signed,
// the digest of those bytes, and the signature over those same bytes.
//
// Verification outcomes are deliberately three-valued:
//   - valid signature over matching bytes        -> true
//   - digest mismatch, bad signature, unknown key -> false
//   - unrecognized scheme label                  -> SchemeError
// An unknown scheme means we cannot evaluate the claim at all; reporting it
// as a mere "invalid signature" would invite downgrade confusion.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/canonical.hpp"
#include "opal/crypto.hpp"
#include "opal/encoding.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"

namespace opal {

struct SignatureEnvelope {
  PrincipalId signer;
  std::string scheme_label{kSignatureScheme};
  std::string payload_digest;             // hex SHA-256 of the canonical signing view
  std::vector<std::uint8_t> signature;    // raw Ed25519 signature; base64 on the wire

  bool operator==(const SignatureEnvelope&) const = default;

  nlohmann::json to_json() const {
    return {{"signer", signer.to_json()},
            {"scheme_label", scheme_label},
            {"payload_digest", payload_digest},
            {"signature_bytes", to_base64(signature)}};
  }

  static SignatureEnvelope from_json(const nlohmann::json& j) {
    SignatureEnvelope e;
    e.signer = PrincipalId::from_json(j.at("signer"));
    e.scheme_label = j.at("scheme_label").get<std::string>();
    e.payload_digest = j.at("payload_digest").get<std::string>();
    if (e.payload_digest.size() != 64 || !is_lower_hex(e.payload_digest))
      throw ProtocolError("payload digest must be 64 lowercase hex characters");
    e.signature = from_base64(j.at("signature_bytes").get<std::string>());
    return e;
  }
};

inline SignatureEnvelope sign_view(const nlohmann::json& signing_view, const PrincipalId& signer,
                                   const KeyPair& key) {
  const std::string bytes = canonicalize(signing_view);
  SignatureEnvelope env;
  env.signer = signer;
  env.payload_digest = sha256(bytes).hex();
  env.signature = key.sign(bytes);
  return env;
}

inline bool verify_view(const nlohmann::json& signing_view, const SignatureEnvelope& env,
                        const KeyDirectory& keys) {
  if (env.scheme_label != kSignatureScheme)
    throw SchemeError("unrecognized signature scheme label");
  const std::string bytes = canonicalize(signing_view);
  if (sha256(bytes).hex() != env.payload_digest) return false;
  const auto* pub = keys.lookup(env.signer.key_fingerprint);
  if (pub == nullptr) return false;
  return verify_raw(*pub, bytes, env.signature);
}

}  // namespace opal
