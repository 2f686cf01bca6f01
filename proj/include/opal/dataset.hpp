#pragma once

// Immutable columnar dataset snapshots and strict CSV ingestion. A malformed
// cell rejects the whole file; there is no partial ingest. Error text names
// positions only, never cell contents: raw values must not leak through
// diagnostics.

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "opal/decimal.hpp"
#include "opal/error.hpp"
#include "opal/schema.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

using ColumnData =
    std::variant<std::vector<std::int64_t>, std::vector<Decimal>, std::vector<std::string>>;

struct DatasetSnapshot {
  Uuid dataset_id;
  DataSchema schema;
  std::vector<ColumnData> columns;  // parallel to schema.columns
  Timestamp ingested_at;

  std::size_t row_count() const {
    if (columns.empty()) return 0;
    return std::visit([](const auto& v) { return v.size(); }, columns.front());
  }

  const std::vector<std::int64_t>& int_column(std::size_t i) const {
    return std::get<std::vector<std::int64_t>>(columns.at(i));
  }
  const std::vector<Decimal>& decimal_column(std::size_t i) const {
    return std::get<std::vector<Decimal>>(columns.at(i));
  }
  const std::vector<std::string>& string_column(std::size_t i) const {
    return std::get<std::vector<std::string>>(columns.at(i));
  }

  // The subject identifier of every row, in row order.
  const std::vector<std::string>& subject_values() const {
    return string_column(schema.index_of(schema.subject_column()));
  }
};

namespace csv_detail {

// One record of comma-separated fields. Supports quoted fields with doubled
// quotes; accepts LF and CRLF endings. Returns false at end of input.
inline bool next_record(std::string_view text, std::size_t& pos, std::vector<std::string>& fields,
                        std::int64_t row_for_errors) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  while (pos < text.size()) {
    char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
        } else {
          in_quotes = false;
          ++pos;
        }
      } else {
        field.push_back(c);
        ++pos;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty())
        throw IngestError("quote inside unquoted field", row_for_errors, "");
      in_quotes = true;
      saw_any = true;
      ++pos;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      saw_any = true;
      ++pos;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r') {
        if (pos + 1 >= text.size() || text[pos + 1] != '\n')
          throw IngestError("bare carriage return", row_for_errors, "");
        ++pos;
      }
      ++pos;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
      saw_any = true;
      ++pos;
    }
  }
  if (in_quotes) throw IngestError("unterminated quoted field", row_for_errors, "");
  if (!saw_any && fields.empty()) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::int64_t parse_int_cell(const std::string& s, std::int64_t row, const std::string& col) {
  if (s.empty()) throw IngestError("empty integer cell", row, col);
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) throw IngestError("malformed integer cell", row, col);
  for (std::size_t k = i; k < s.size(); ++k)
    if (s[k] < '0' || s[k] > '9') throw IngestError("malformed integer cell", row, col);
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno == ERANGE || end != s.c_str() + s.size())
    throw IngestError("integer cell out of range", row, col);
  return v;
}

}  // namespace csv_detail

// Parses CSV text whose header must equal the schema's column names in
// declared order. Data rows are numbered from 1 in diagnostics.
inline DatasetSnapshot ingest_dataset(std::string_view csv_text, const DataSchema& schema,
                                      const Uuid& dataset_id, Timestamp ingested_at) {
  schema.validate();

  std::size_t pos = 0;
  std::vector<std::string> fields;
  if (!csv_detail::next_record(csv_text, pos, fields, 0))
    throw IngestError("missing header row", 0, "");
  if (fields.size() != schema.columns.size())
    throw IngestError("header column count does not match schema", 0, "");
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i] != schema.columns[i].name)
      throw IngestError("header does not match schema", 0, schema.columns[i].name);

  DatasetSnapshot snap;
  snap.dataset_id = dataset_id;
  snap.schema = schema;
  snap.ingested_at = ingested_at;
  for (const auto& col : schema.columns) {
    switch (col.type) {
      case SemanticType::integer:
        snap.columns.emplace_back(std::vector<std::int64_t>{});
        break;
      case SemanticType::decimal:
        snap.columns.emplace_back(std::vector<Decimal>{});
        break;
      default:
        snap.columns.emplace_back(std::vector<std::string>{});
    }
  }

  std::int64_t row = 0;
  while (csv_detail::next_record(csv_text, pos, fields, row + 1)) {
    ++row;
    if (fields.size() != schema.columns.size())
      throw IngestError("field count does not match schema", row, "");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& col = schema.columns[i];
      switch (col.type) {
        case SemanticType::integer:
          std::get<std::vector<std::int64_t>>(snap.columns[i])
              .push_back(csv_detail::parse_int_cell(fields[i], row, col.name));
          break;
        case SemanticType::decimal:
          try {
            std::get<std::vector<Decimal>>(snap.columns[i]).push_back(Decimal::parse(fields[i]));
          } catch (const ProtocolError&) {
            throw IngestError("malformed decimal cell", row, col.name);
          }
          break;
        case SemanticType::subject_id:
          if (fields[i].empty()) throw IngestError("empty subject identifier", row, col.name);
          std::get<std::vector<std::string>>(snap.columns[i]).push_back(fields[i]);
          break;
        case SemanticType::categorical:
          std::get<std::vector<std::string>>(snap.columns[i]).push_back(fields[i]);
          break;
      }
    }
  }
  return snap;
}

}  // namespace opal
