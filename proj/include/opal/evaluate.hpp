#pragma once

// Aggregate evaluation. Consumes an AST bound to a schema, a snapshot, a
// consent mask, and typed parameter bindings; produces per-group aggregates
// plus the internal cohort row-id sets the policy layer needs. The result
// type deliberately has no wire serialization: only a SafeTable derived from
// it may leave the process.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/decimal.hpp"
#include "opal/dsl.hpp"
#include "opal/error.hpp"

namespace opal {

struct AggregateRow {
  std::vector<std::string> group_key;
  std::map<std::string, NumericValue> values;
  std::int64_t cohort_size{0};
  std::set<std::int64_t> cohort_row_ids;  // internal only, never serialized
};

struct AggregateTable {
  std::vector<std::string> group_key_columns;
  std::vector<AggregateRow> rows;  // sorted by group key
};

namespace eval_detail {

// Predicate tree with parameters already substituted, so the row loop does
// no per-row binding lookups.
struct EvalNode {
  Predicate::Kind kind{Predicate::Kind::comparison};
  SemanticType type{SemanticType::integer};
  std::size_t column_index{0};
  CmpOp op{CmpOp::eq};
  std::int64_t int_operand{0};
  Decimal dec_operand{};
  std::string str_operand;
  std::vector<EvalNode> children;
};

inline EvalNode resolve(const Predicate& p, const TypedBindings& bindings) {
  EvalNode n;
  n.kind = p.kind;
  if (p.kind == Predicate::Kind::comparison) {
    const Comparison& c = p.cmp;
    n.type = c.column_type;
    n.column_index = c.column_index;
    n.op = c.op;
    BoundValue operand;
    if (c.is_param) {
      auto it = bindings.find(c.param_name);
      if (it == bindings.end()) throw EvalError("parameter not bound: " + c.param_name);
      operand = it->second;
    } else {
      operand = c.literal;
    }
    switch (c.column_type) {
      case SemanticType::integer:
        if (!std::holds_alternative<std::int64_t>(operand))
          throw EvalError("integer column requires integer operand");
        n.int_operand = std::get<std::int64_t>(operand);
        break;
      case SemanticType::decimal:
        if (std::holds_alternative<Decimal>(operand))
          n.dec_operand = std::get<Decimal>(operand);
        else if (std::holds_alternative<std::int64_t>(operand))
          n.dec_operand = Decimal::from_units(std::get<std::int64_t>(operand));
        else
          throw EvalError("decimal column requires numeric operand");
        break;
      case SemanticType::categorical:
        if (!std::holds_alternative<std::string>(operand))
          throw EvalError("categorical column requires string operand");
        n.str_operand = std::get<std::string>(operand);
        break;
      default:
        throw EvalError("comparison against subject column");
    }
  }
  for (const auto& child : p.children) n.children.push_back(resolve(child, bindings));
  return n;
}

template <typename T>
inline bool apply_op(CmpOp op, const T& a, const T& b) {
  switch (op) {
    case CmpOp::eq: return a == b;
    case CmpOp::ne: return a != b;
    case CmpOp::lt: return a < b;
    case CmpOp::le: return a <= b;
    case CmpOp::gt: return a > b;
    case CmpOp::ge: return a >= b;
  }
  throw EvalError("bad comparison operator");
}

inline bool holds(const EvalNode& n, const DatasetSnapshot& snap, std::size_t row) {
  switch (n.kind) {
    case Predicate::Kind::comparison:
      switch (n.type) {
        case SemanticType::integer:
          return apply_op(n.op, snap.int_column(n.column_index)[row], n.int_operand);
        case SemanticType::decimal:
          return apply_op(n.op, snap.decimal_column(n.column_index)[row].micros,
                          n.dec_operand.micros);
        default:
          return apply_op(n.op, snap.string_column(n.column_index)[row], n.str_operand);
      }
    case Predicate::Kind::negation:
      return !holds(n.children[0], snap, row);
    case Predicate::Kind::conj:
      for (const auto& c : n.children)
        if (!holds(c, snap, row)) return false;
      return true;
    case Predicate::Kind::disj:
      for (const auto& c : n.children)
        if (holds(c, snap, row)) return true;
      return false;
  }
  throw EvalError("bad predicate kind");
}

// Running state for one aggregate within one group.
struct AggState {
  std::int64_t int_acc{0};       // integer sum
  __int128 wide_acc{0};          // decimal sum / mean numerator
  std::int64_t int_best{0};      // integer min/max
  Decimal dec_best{};            // decimal min/max
  bool initialized{false};
  std::map<std::string, std::int64_t> histogram;
};

struct GroupAccum {
  std::int64_t count{0};
  std::set<std::int64_t> row_ids;
  std::vector<AggState> per_agg;
};

inline std::int64_t finalize_micros(__int128 micros) {
  if (micros >= static_cast<__int128>(Decimal::kMicrosLimit) ||
      micros <= -static_cast<__int128>(Decimal::kMicrosLimit))
    throw EvalError("decimal aggregate out of range");
  return static_cast<std::int64_t>(micros);
}

}  // namespace eval_detail

inline AggregateTable evaluate(const AlgorithmAst& ast, const DatasetSnapshot& snap,
                               const std::vector<bool>& mask, const TypedBindings& bindings) {
  if (mask.size() != snap.row_count()) throw EvalError("consent mask length mismatch");
  for (const auto& p : ast.parameters)
    if (bindings.find(p.name) == bindings.end())
      throw EvalError("parameter not bound: " + p.name);

  std::optional<eval_detail::EvalNode> filter;
  if (ast.filter) filter = eval_detail::resolve(*ast.filter, bindings);

  std::map<std::vector<std::string>, eval_detail::GroupAccum> groups;
  std::vector<std::string> key(ast.group_by_indices.size());

  for (std::size_t row = 0; row < snap.row_count(); ++row) {
    if (!mask[row]) continue;
    if (filter && !eval_detail::holds(*filter, snap, row)) continue;

    for (std::size_t g = 0; g < ast.group_by_indices.size(); ++g)
      key[g] = snap.string_column(ast.group_by_indices[g])[row];
    auto [it, fresh] = groups.try_emplace(key);
    eval_detail::GroupAccum& acc = it->second;
    if (fresh) acc.per_agg.resize(ast.aggregates.size());

    ++acc.count;
    acc.row_ids.insert(static_cast<std::int64_t>(row));

    for (std::size_t a = 0; a < ast.aggregates.size(); ++a) {
      const AggregateSpec& spec = ast.aggregates[a];
      eval_detail::AggState& st = acc.per_agg[a];
      switch (spec.fn) {
        case AggFn::count:
          break;  // group count suffices
        case AggFn::sum:
          if (spec.column_type == SemanticType::integer) {
            if (!add_checked(st.int_acc, snap.int_column(spec.column_index)[row], st.int_acc))
              throw EvalError("integer sum overflow");
          } else {
            st.wide_acc += snap.decimal_column(spec.column_index)[row].micros;
          }
          break;
        case AggFn::mean:
          if (spec.column_type == SemanticType::integer)
            st.wide_acc += snap.int_column(spec.column_index)[row];
          else
            st.wide_acc += snap.decimal_column(spec.column_index)[row].micros;
          break;
        case AggFn::min:
        case AggFn::max: {
          bool want_min = spec.fn == AggFn::min;
          if (spec.column_type == SemanticType::integer) {
            std::int64_t v = snap.int_column(spec.column_index)[row];
            if (!st.initialized || (want_min ? v < st.int_best : v > st.int_best))
              st.int_best = v;
          } else {
            Decimal v = snap.decimal_column(spec.column_index)[row];
            if (!st.initialized || (want_min ? v < st.dec_best : v > st.dec_best))
              st.dec_best = v;
          }
          st.initialized = true;
          break;
        }
        case AggFn::histogram:
          ++st.histogram[snap.string_column(spec.column_index)[row]];
          break;
      }
    }
  }

  AggregateTable table;
  table.group_key_columns = ast.group_by;
  for (auto& [group_key, acc] : groups) {
    AggregateRow out;
    out.group_key = group_key;
    out.cohort_size = acc.count;
    out.cohort_row_ids = std::move(acc.row_ids);
    for (std::size_t a = 0; a < ast.aggregates.size(); ++a) {
      const AggregateSpec& spec = ast.aggregates[a];
      eval_detail::AggState& st = acc.per_agg[a];
      switch (spec.fn) {
        case AggFn::count:
          out.values[spec.output_name] = acc.count;
          break;
        case AggFn::sum:
          if (spec.column_type == SemanticType::integer)
            out.values[spec.output_name] = st.int_acc;
          else
            out.values[spec.output_name] = Decimal{eval_detail::finalize_micros(st.wide_acc)};
          break;
        case AggFn::mean: {
          __int128 numerator = st.wide_acc;
          if (spec.column_type == SemanticType::integer) numerator *= Decimal::kScale;
          std::int64_t micros = div_round_half_even(numerator, acc.count);
          out.values[spec.output_name] =
              Decimal{eval_detail::finalize_micros(static_cast<__int128>(micros))};
          break;
        }
        case AggFn::min:
        case AggFn::max:
          if (spec.column_type == SemanticType::integer)
            out.values[spec.output_name] = st.int_best;
          else
            out.values[spec.output_name] = st.dec_best;
          break;
        case AggFn::histogram:
          for (const auto& [category, n] : st.histogram)
            out.values[spec.output_name + "[" + category + "]"] = n;
          break;
      }
    }
    table.rows.push_back(std::move(out));
  }
  return table;
}

}  // namespace opal
