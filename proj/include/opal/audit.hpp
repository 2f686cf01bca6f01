#pragma once

// Hash-chained append-only audit log. Every record commits to its
// predecessor: this_hash = digest(prev_hash bytes ‖ canonical record without
// this_hash), with an all-zero prev_hash at genesis and gapless sequence
// numbers. The log stores digests of documents, never documents themselves,
// so it cannot become a data-egress channel. Appends are durable (flushed
// and synced) before they return; callers fail closed on append errors.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "opal/canonical.hpp"
#include "opal/crypto.hpp"
#include "opal/error.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

enum class AuditKind { contract_received, response_issued, token_verified, decline_issued };

inline std::string_view audit_kind_label(AuditKind k) {
  switch (k) {
    case AuditKind::contract_received: return "contract-received";
    case AuditKind::response_issued: return "response-issued";
    case AuditKind::token_verified: return "token-verified";
    case AuditKind::decline_issued: return "decline-issued";
  }
  throw ProtocolError("unknown audit kind");
}

inline AuditKind audit_kind_from_label(std::string_view s) {
  if (s == "contract-received") return AuditKind::contract_received;
  if (s == "response-issued") return AuditKind::response_issued;
  if (s == "token-verified") return AuditKind::token_verified;
  if (s == "decline-issued") return AuditKind::decline_issued;
  throw ProtocolError("unknown audit kind label");
}

struct AuditRecord {
  std::int64_t sequence{0};
  Timestamp recorded_at;
  AuditKind kind{AuditKind::contract_received};
  Uuid contract_id;
  std::string payload_digest;  // hex digest of the logged document
  std::string prev_hash;       // hex
  std::string this_hash;       // hex

  bool operator==(const AuditRecord&) const = default;

  // Everything the chain hash covers: the record minus this_hash.
  nlohmann::json chain_view() const {
    return {{"sequence", sequence},
            {"recorded_at", to_rfc3339(recorded_at)},
            {"kind", std::string(audit_kind_label(kind))},
            {"contract_id", contract_id.str()},
            {"payload_digest", payload_digest},
            {"prev_hash", prev_hash}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = chain_view();
    j["this_hash"] = this_hash;
    return j;
  }

  static AuditRecord from_json(const nlohmann::json& j) {
    AuditRecord r;
    r.sequence = j.at("sequence").get<std::int64_t>();
    r.recorded_at = from_rfc3339(j.at("recorded_at").get<std::string>());
    r.kind = audit_kind_from_label(j.at("kind").get<std::string>());
    r.contract_id = Uuid::parse(j.at("contract_id").get<std::string>());
    r.payload_digest = j.at("payload_digest").get<std::string>();
    r.prev_hash = j.at("prev_hash").get<std::string>();
    r.this_hash = j.at("this_hash").get<std::string>();
    return r;
  }
};

inline Digest chain_hash(const AuditRecord& record) {
  const auto prev = from_hex(record.prev_hash);
  const std::string body = canonicalize(record.chain_view());
  std::vector<std::uint8_t> material;
  material.reserve(prev.size() + body.size());
  material.insert(material.end(), prev.begin(), prev.end());
  material.insert(material.end(), body.begin(), body.end());
  return sha256(material);
}

inline std::string all_zero_digest_hex() { return std::string(64, '0'); }

struct ChainStatus {
  enum class State { ok, broken_at, head_mismatch };
  State state{State::ok};
  std::int64_t broken_at{-1};

  bool ok() const { return state == State::ok; }
};

// Genesis, gaplessness, and the hash recurrence; reports the first violating
// sequence number.
inline ChainStatus verify_chain(const std::vector<AuditRecord>& records) {
  std::string expected_prev = all_zero_digest_hex();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AuditRecord& r = records[i];
    if (r.sequence != static_cast<std::int64_t>(i) || r.prev_hash != expected_prev ||
        r.this_hash != chain_hash(r).hex())
      return {ChainStatus::State::broken_at, static_cast<std::int64_t>(i)};
    expected_prev = r.this_hash;
  }
  return {};
}

// Additionally requires the chain to end at a separately stored head digest,
// which is what catches tail truncation.
inline ChainStatus verify_chain(const std::vector<AuditRecord>& records,
                                const Digest& expected_head) {
  ChainStatus status = verify_chain(records);
  if (!status.ok()) return status;
  const std::string head = records.empty() ? all_zero_digest_hex() : records.back().this_hash;
  if (head != expected_head.hex())
    return {ChainStatus::State::head_mismatch, static_cast<std::int64_t>(records.size())};
  return {};
}

// File-backed log: one wire-encoded record per line. Reopening a log file
// resumes the chain at its durable head.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path, Clock clock = system_clock())
      : path_(std::move(path)), clock_(std::move(clock)) {
    records_ = load(path_);
    ChainStatus status = verify_chain(records_);
    if (!status.ok())
      throw AuditError("existing audit log fails verification at sequence " +
                       std::to_string(status.broken_at));
    file_ = std::fopen(path_.string().c_str(), "ab");
    if (file_ == nullptr) throw AuditError("cannot open audit log for append");
  }

  ~AuditLog() {
    if (file_ != nullptr) std::fclose(file_);
  }

  AuditLog(const AuditLog&) = delete;
  AuditLog& operator=(const AuditLog&) = delete;

  AuditRecord append(AuditKind kind, const Uuid& contract_id, const Digest& payload_digest) {
    std::lock_guard<std::mutex> lock(mutex_);
    AuditRecord r;
    r.sequence = static_cast<std::int64_t>(records_.size());
    r.recorded_at = clock_();
    r.kind = kind;
    r.contract_id = contract_id;
    r.payload_digest = payload_digest.hex();
    r.prev_hash = records_.empty() ? all_zero_digest_hex() : records_.back().this_hash;
    r.this_hash = chain_hash(r).hex();

    const std::string line = r.to_json().dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() ||
        std::fflush(file_) != 0 || ::fsync(::fileno(file_)) != 0)
      throw AuditError("audit append not durable");
    records_.push_back(r);
    return r;
  }

  Digest head() const {
    std::lock_guard<std::mutex> lock(mutex_);
    if (records_.empty()) return Digest{};
    return Digest::from_hex(records_.back().this_hash);
  }

  std::int64_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return static_cast<std::int64_t>(records_.size());
  }

  std::vector<AuditRecord> records() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_;
  }

  const std::filesystem::path& path() const { return path_; }

  static std::vector<AuditRecord> load(const std::filesystem::path& path) {
    std::vector<AuditRecord> out;
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (f == nullptr) return out;  // absent file = empty log
    std::string content;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, n);
    std::fclose(f);
    std::size_t pos = 0;
    while (pos < content.size()) {
      std::size_t end = content.find('\n', pos);
      if (end == std::string::npos) end = content.size();
      std::string_view line(content.data() + pos, end - pos);
      if (!line.empty()) {
        try {
          out.push_back(AuditRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception&) {
          throw AuditError("audit log line " + std::to_string(out.size()) + " is unreadable");
        }
      }
      pos = end + 1;
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  Clock clock_;
  std::FILE* file_{nullptr};
  mutable std::mutex mutex_;
  std::vector<AuditRecord> records_;
};

}  // namespace opal
