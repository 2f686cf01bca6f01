#pragma once

// Column schemas. A schema is an ordered list of (name, semantic type); two
// schemas are the same schema only if names, types, and order all agree.
// Exactly one column must carry the subject-id type: it identifies the data
// subject for consent purposes and is barred from every algorithm clause.

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/error.hpp"

namespace opal {

enum class SemanticType { integer, decimal, categorical, subject_id };

inline std::string_view semantic_type_label(SemanticType t) {
  switch (t) {
    case SemanticType::integer: return "integer";
    case SemanticType::decimal: return "decimal";
    case SemanticType::categorical: return "categorical";
    case SemanticType::subject_id: return "subject-id";
  }
  throw ProtocolError("unknown semantic type");
}

inline SemanticType semantic_type_from_label(std::string_view s) {
  if (s == "integer") return SemanticType::integer;
  if (s == "decimal") return SemanticType::decimal;
  if (s == "categorical") return SemanticType::categorical;
  if (s == "subject-id") return SemanticType::subject_id;
  throw ProtocolError("unknown semantic type label");
}

inline bool is_numeric(SemanticType t) {
  return t == SemanticType::integer || t == SemanticType::decimal;
}

struct ColumnSpec {
  std::string name;
  SemanticType type{SemanticType::integer};

  bool operator==(const ColumnSpec&) const = default;
};

struct DataSchema {
  std::vector<ColumnSpec> columns;

  bool operator==(const DataSchema&) const = default;

  // Enforces: non-empty unique names, exactly one subject-id column.
  void validate() const {
    std::size_t subject_count = 0;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].name.empty()) throw ProtocolError("schema column name is empty");
      for (std::size_t k = 0; k < i; ++k)
        if (columns[k].name == columns[i].name)
          throw ProtocolError("schema column name repeats: " + columns[i].name);
      if (columns[i].type == SemanticType::subject_id) ++subject_count;
    }
    if (subject_count != 1)
      throw ProtocolError("schema must have exactly one subject-id column");
  }

  const ColumnSpec* find(std::string_view name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    throw ProtocolError("schema has no column named " + std::string(name));
  }

  const std::string& subject_column() const {
    for (const auto& c : columns)
      if (c.type == SemanticType::subject_id) return c.name;
    throw ProtocolError("schema has no subject-id column");
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : columns)
      arr.push_back({{"name", c.name}, {"type", std::string(semantic_type_label(c.type))}});
    return arr;
  }

  static DataSchema from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ProtocolError("schema must be an array");
    DataSchema s;
    for (const auto& el : j)
      s.columns.push_back({el.at("name").get<std::string>(),
                           semantic_type_from_label(el.at("type").get<std::string>())});
    s.validate();
    return s;
  }
};

}  // namespace opal
