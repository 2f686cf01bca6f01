#pragma once

// The releasable form of an aggregate answer. Cells hold either a numeric
// value or the suppression marker; the internal row-id bookkeeping that
// drives suppression never reaches this type, so a SafeTable is safe to
// serialize by construction.

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/decimal.hpp"
#include "opal/error.hpp"

namespace opal {

inline constexpr std::string_view kSuppressionMarker = "SUPPRESSED";

// Monostate-free: a suppressed cell is represented by the marker type so it
// cannot be confused with any legitimate numeric.
struct Suppressed {
  bool operator==(const Suppressed&) const = default;
};

using SafeCell = std::variant<std::int64_t, Decimal, Suppressed>;

inline nlohmann::json safe_cell_to_json(const SafeCell& c) {
  if (std::holds_alternative<Suppressed>(c)) return std::string(kSuppressionMarker);
  if (std::holds_alternative<std::int64_t>(c)) return std::get<std::int64_t>(c);
  return std::get<Decimal>(c).to_double();
}

inline SafeCell safe_cell_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get_ref<const std::string&>() != kSuppressionMarker)
      throw ProtocolError("cell string must be the suppression marker");
    return Suppressed{};
  }
  // is_number_unsigned first: is_number_integer is true for unsigned too.
  if (j.is_number_unsigned()) {
    auto u = j.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) throw ProtocolError("cell count out of range");
    return static_cast<std::int64_t>(u);
  }
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return Decimal::from_double(j.get<double>());
  throw ProtocolError("cell must be numeric or the suppression marker");
}

struct SafeRow {
  std::vector<std::string> group_key;
  std::map<std::string, SafeCell> values;  // output_name -> cell
  SafeCell cohort_size_disclosed{Suppressed{}};

  bool operator==(const SafeRow&) const = default;
};

struct SafeTable {
  std::vector<std::string> group_key_columns;
  std::vector<SafeRow> rows;  // sorted by group key

  bool operator==(const SafeTable&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json out;
    out["group_key_columns"] = group_key_columns;
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json vals = nlohmann::json::object();
      for (const auto& [name, cell] : r.values) vals[name] = safe_cell_to_json(cell);
      rows_json.push_back({{"group_key", r.group_key},
                           {"values", vals},
                           {"cohort_size", safe_cell_to_json(r.cohort_size_disclosed)}});
    }
    out["rows"] = rows_json;
    return out;
  }

  static SafeTable from_json(const nlohmann::json& j) {
    SafeTable t;
    t.group_key_columns = j.at("group_key_columns").get<std::vector<std::string>>();
    for (const auto& rj : j.at("rows")) {
      SafeRow r;
      r.group_key = rj.at("group_key").get<std::vector<std::string>>();
      for (auto it = rj.at("values").begin(); it != rj.at("values").end(); ++it)
        r.values[it.key()] = safe_cell_from_json(it.value());
      r.cohort_size_disclosed = safe_cell_from_json(rj.at("cohort_size"));
      if (r.group_key.size() != t.group_key_columns.size())
        throw ProtocolError("row group key width does not match group key columns");
      t.rows.push_back(std::move(r));
    }
    return t;
  }
};

}  // namespace opal
