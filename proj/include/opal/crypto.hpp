#pragma once

// SHA-256 digests and Ed25519 signatures over OpenSSL 3 EVP. Signing is
// deterministic; a key's fingerprint is the lowercase hex SHA-256 of its raw
// 32-byte public key and is the only identifier other parties ever see.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "opal/encoding.hpp"
#include "opal/error.hpp"

namespace opal {

// The only signature scheme this build understands. Envelopes carrying any
// other label are rejected with SchemeError, never treated as "invalid".
inline constexpr std::string_view kSignatureScheme = "ed25519";

inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kSignatureSize = 64;

struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;

  std::string hex() const { return to_hex(bytes.data(), bytes.size()); }

  static Digest from_hex(std::string_view h) {
    if (h.size() != 64) throw ProtocolError("digest must be 64 hex characters");
    const auto raw = opal::from_hex(h);
    Digest d;
    std::copy(raw.begin(), raw.end(), d.bytes.begin());
    return d;
  }
};

inline Digest sha256(const std::uint8_t* data, std::size_t len) {
  Digest d;
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, d.bytes.data(), &out_len, EVP_sha256(), nullptr) != 1 ||
      out_len != d.bytes.size())
    throw CryptoError("SHA-256 computation failed");
  return d;
}

inline Digest sha256(std::string_view s) {
  return sha256(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

inline Digest sha256(const std::vector<std::uint8_t>& v) { return sha256(v.data(), v.size()); }

inline std::string fingerprint_of(const std::vector<std::uint8_t>& public_key) {
  if (public_key.size() != kPublicKeySize)
    throw CryptoError("public key must be 32 bytes");
  return sha256(public_key).hex();
}

namespace detail {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

inline PkeyPtr public_pkey(const std::vector<std::uint8_t>& pub) {
  if (pub.size() != kPublicKeySize)
    throw CryptoError("public key must be 32 bytes");
  PkeyPtr p(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), pub.size()));
  if (!p) throw CryptoError("failed to load public key");
  return p;
}

}  // namespace detail

class KeyPair {
 public:
  static KeyPair generate() {
    detail::PkeyPtr pkey;
    {
      std::unique_ptr<EVP_PKEY_CTX, decltype(&EVP_PKEY_CTX_free)> ctx(
          EVP_PKEY_CTX_new_id(EVP_PKEY_ED25519, nullptr), EVP_PKEY_CTX_free);
      if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1)
        throw CryptoError("key generation init failed");
      EVP_PKEY* raw = nullptr;
      if (EVP_PKEY_keygen(ctx.get(), &raw) != 1) throw CryptoError("key generation failed");
      pkey.reset(raw);
    }
    return KeyPair(std::move(pkey));
  }

  static KeyPair from_seed(const std::vector<std::uint8_t>& seed) {
    if (seed.size() != kSeedSize) throw CryptoError("seed must be 32 bytes");
    detail::PkeyPtr pkey(
        EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!pkey) throw CryptoError("failed to load private key");
    return KeyPair(std::move(pkey));
  }

  std::vector<std::uint8_t> public_key() const {
    std::size_t len = kPublicKeySize;
    std::vector<std::uint8_t> out(len);
    if (EVP_PKEY_get_raw_public_key(pkey_.get(), out.data(), &len) != 1 ||
        len != kPublicKeySize)
      throw CryptoError("failed to extract public key");
    return out;
  }

  std::vector<std::uint8_t> seed() const {
    std::size_t len = kSeedSize;
    std::vector<std::uint8_t> out(len);
    if (EVP_PKEY_get_raw_private_key(pkey_.get(), out.data(), &len) != 1 || len != kSeedSize)
      throw CryptoError("failed to extract private key");
    return out;
  }

  std::string fingerprint() const { return fingerprint_of(public_key()); }

  std::vector<std::uint8_t> sign(const std::uint8_t* msg, std::size_t len) const {
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey_.get()) != 1)
      throw CryptoError("sign init failed");
    std::size_t sig_len = kSignatureSize;
    std::vector<std::uint8_t> sig(sig_len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &sig_len, msg, len) != 1 ||
        sig_len != kSignatureSize)
      throw CryptoError("signing failed");
    return sig;
  }

  std::vector<std::uint8_t> sign(std::string_view msg) const {
    return sign(reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size());
  }

 private:
  explicit KeyPair(detail::PkeyPtr pkey) : pkey_(std::move(pkey)) {}
  detail::PkeyPtr pkey_;
};

// True iff `sig` is a valid Ed25519 signature by `public_key` over `msg`.
// Malformed signatures are invalid, not errors; malformed keys are errors.
inline bool verify_raw(const std::vector<std::uint8_t>& public_key, const std::uint8_t* msg,
                       std::size_t len, const std::vector<std::uint8_t>& sig) {
  if (sig.size() != kSignatureSize) return false;
  auto pkey = detail::public_pkey(public_key);
  detail::MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1)
    throw CryptoError("verify init failed");
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg, len) == 1;
}

inline bool verify_raw(const std::vector<std::uint8_t>& public_key, std::string_view msg,
                       const std::vector<std::uint8_t>& sig) {
  return verify_raw(public_key, reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size(),
                    sig);
}

// Maps key fingerprints to raw public keys. Provisioned from configuration;
// there is no certificate chain, a key is trusted iff an operator listed it.
class KeyDirectory {
 public:
  std::string add(const std::vector<std::uint8_t>& public_key) {
    auto fp = fingerprint_of(public_key);
    keys_[fp] = public_key;
    return fp;
  }

  const std::vector<std::uint8_t>* lookup(std::string_view fingerprint) const {
    auto it = keys_.find(fingerprint);
    return it == keys_.end() ? nullptr : &it->second;
  }

  bool contains(std::string_view fingerprint) const { return lookup(fingerprint) != nullptr; }

  std::size_t size() const { return keys_.size(); }

 private:
  std::map<std::string, std::vector<std::uint8_t>, std::less<>> keys_;
};

}  // namespace opal
