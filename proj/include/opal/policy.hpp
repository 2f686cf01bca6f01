#pragma once

// Safe-answer policy: k-threshold suppression and the related-query
// (differencing) guard. Suppression keeps the group row but replaces every
// cell and the disclosed size with the marker; the guard declines any query
// whose cohort differs from a remembered cohort by fewer than k_min rows,
// because subtracting two such answers would isolate those rows.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/error.hpp"
#include "opal/evaluate.hpp"
#include "opal/principal.hpp"
#include "opal/safe_table.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct PolicyConfig {
  std::int64_t k_min{10};
  std::int64_t differencing_window{100};
  std::string suppression_marker{kSuppressionMarker};  // display form; wire form is fixed

  void validate() const {
    if (k_min < 2) throw ConfigError("k_min must be at least 2");
    if (differencing_window < 1) throw ConfigError("differencing_window must be positive");
    if (suppression_marker.empty()) throw ConfigError("suppression_marker must be non-empty");
  }

  nlohmann::json to_json() const {
    return {{"k_min", k_min},
            {"differencing_window", differencing_window},
            {"suppression_marker", suppression_marker}};
  }

  static PolicyConfig from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.k_min = j.value("k_min", c.k_min);
    c.differencing_window = j.value("differencing_window", c.differencing_window);
    c.suppression_marker = j.value("suppression_marker", c.suppression_marker);
    c.validate();
    return c;
  }
};

// Groups at or above k_min pass through unchanged; the boundary is released.
inline SafeTable apply_policy(const AggregateTable& table, const PolicyConfig& config) {
  config.validate();
  SafeTable out;
  out.group_key_columns = table.group_key_columns;
  for (const auto& row : table.rows) {
    SafeRow safe;
    safe.group_key = row.group_key;
    const bool released = row.cohort_size >= config.k_min;
    for (const auto& [name, value] : row.values) {
      if (!released)
        safe.values[name] = Suppressed{};
      else if (std::holds_alternative<std::int64_t>(value))
        safe.values[name] = std::get<std::int64_t>(value);
      else
        safe.values[name] = std::get<Decimal>(value);
    }
    safe.cohort_size_disclosed =
        released ? SafeCell{row.cohort_size} : SafeCell{Suppressed{}};
    out.rows.push_back(std::move(safe));
  }
  return out;
}

enum class GuardDecision { allow, decline };

// Remembered cohorts per (querier, dataset), bounded by the configured
// window. The check-then-append step is atomic per key; distinct keys do not
// contend.
class QueryHistory {
 public:
  GuardDecision check_and_record(const PrincipalId& querier, const Uuid& dataset_id,
                                 const Uuid& contract_id,
                                 const std::vector<std::set<std::int64_t>>& new_cohorts,
                                 const PolicyConfig& config) {
    config.validate();
    KeyState& state = state_for(querier, dataset_id);
    std::lock_guard<std::mutex> lock(state.mutex);
    for (const auto& entry : state.entries)
      for (const auto& remembered : entry.cohorts)
        for (const auto& fresh : new_cohorts) {
          std::size_t diff = symmetric_difference_size(remembered, fresh);
          if (diff > 0 && diff < static_cast<std::size_t>(config.k_min))
            return GuardDecision::decline;
        }
    state.entries.push_back({contract_id, new_cohorts});
    while (state.entries.size() > static_cast<std::size_t>(config.differencing_window))
      state.entries.pop_front();
    return GuardDecision::allow;
  }

  std::size_t remembered(const PrincipalId& querier, const Uuid& dataset_id) {
    KeyState& state = state_for(querier, dataset_id);
    std::lock_guard<std::mutex> lock(state.mutex);
    return state.entries.size();
  }

  static std::size_t symmetric_difference_size(const std::set<std::int64_t>& a,
                                               const std::set<std::int64_t>& b) {
    std::size_t diff = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
      if (*ia < *ib) {
        ++diff;
        ++ia;
      } else if (*ib < *ia) {
        ++diff;
        ++ib;
      } else {
        ++ia;
        ++ib;
      }
    }
    diff += std::distance(ia, a.end());
    diff += std::distance(ib, b.end());
    return diff;
  }

 private:
  struct Entry {
    Uuid contract_id;
    std::vector<std::set<std::int64_t>> cohorts;
  };
  struct KeyState {
    std::mutex mutex;
    std::deque<Entry> entries;
  };

  KeyState& state_for(const PrincipalId& querier, const Uuid& dataset_id) {
    std::lock_guard<std::mutex> lock(map_mutex_);
    auto key = std::make_pair(querier.key_fingerprint, dataset_id);
    auto it = keys_.find(key);
    if (it == keys_.end()) it = keys_.emplace(key, std::make_unique<KeyState>()).first;
    return *it->second;
  }

  std::mutex map_mutex_;
  std::map<std::pair<std::string, Uuid>, std::unique_ptr<KeyState>> keys_;
};

// Decline iff some remembered cohort and some new cohort differ by fewer
// than k_min rows without being identical; identical repeats are allowed.
// On allow, the new cohorts join the history atomically.
inline GuardDecision differencing_guard(QueryHistory& history, const PrincipalId& querier,
                                        const Uuid& dataset_id, const Uuid& contract_id,
                                        const std::vector<std::set<std::int64_t>>& new_cohorts,
                                        const PolicyConfig& config) {
  return history.check_and_record(querier, dataset_id, contract_id, new_cohorts, config);
}

}  // namespace opal
