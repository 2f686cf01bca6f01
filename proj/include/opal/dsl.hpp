#pragma once

// The restricted aggregate language. Programs declare parameters, optionally
// filter rows, optionally group by categorical columns, and emit one or more
// aggregates. There is deliberately no construct that projects a raw column
// value: the only non-aggregate values that can reach an output are
// categorical group keys and histogram categories. Subject-id columns cannot
// be referenced in any clause.
//
//   program     = { param } [ filter ] [ group ] agg { agg } ;
//   param       = "PARAM" ident type ;            type = "integer" | "decimal" | "categorical"
//   filter      = "FILTER" or_expr ;
//   or_expr     = and_expr { "OR" and_expr } ;
//   and_expr    = unary { "AND" unary } ;
//   unary       = "NOT" unary | "(" or_expr ")" | comparison ;
//   comparison  = ident op operand ;               op = "=" "!=" "<" "<=" ">" ">="
//   operand     = integer | decimal | string | "$" ident ;
//   group       = "GROUP" "BY" ident { "," ident } ;
//   agg         = "AGG" fn "(" [ ident ] ")" "AS" ident ;
//                 fn = "count" | "sum" | "mean" | "min" | "max" | "histogram"
//
// Keywords are case-insensitive. Categorical columns admit only = and !=.
// Numeric literals follow the fixed-point decimal rules (at most six
// fractional digits, no exponent).

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/decimal.hpp"
#include "opal/error.hpp"
#include "opal/schema.hpp"

namespace opal {

enum class CmpOp { eq, ne, lt, le, gt, ge };

enum class AggFn { count, sum, mean, min, max, histogram };

inline std::string_view agg_fn_label(AggFn f) {
  switch (f) {
    case AggFn::count: return "count";
    case AggFn::sum: return "sum";
    case AggFn::mean: return "mean";
    case AggFn::min: return "min";
    case AggFn::max: return "max";
    case AggFn::histogram: return "histogram";
  }
  throw ProtocolError("unknown aggregate function");
}

// A literal already coerced to the compared column's type.
using LiteralValue = std::variant<std::int64_t, Decimal, std::string>;

struct Comparison {
  std::string column;
  std::size_t column_index{0};
  SemanticType column_type{SemanticType::integer};
  CmpOp op{CmpOp::eq};
  bool is_param{false};
  LiteralValue literal;     // when !is_param
  std::string param_name;   // when is_param
};

struct Predicate {
  enum class Kind { comparison, conj, disj, negation };
  Kind kind{Kind::comparison};
  Comparison cmp;                   // kind == comparison
  std::vector<Predicate> children;  // conj/disj: >= 2, negation: 1
};

struct ParamSpec {
  std::string name;
  SemanticType type{SemanticType::integer};  // integer, decimal, or categorical
};

struct AggregateSpec {
  std::string output_name;
  AggFn fn{AggFn::count};
  std::string column;        // empty for count
  std::size_t column_index{0};
  SemanticType column_type{SemanticType::integer};
};

struct AlgorithmAst {
  std::vector<ParamSpec> parameters;
  std::optional<Predicate> filter;
  std::vector<std::string> group_by;
  std::vector<std::size_t> group_by_indices;
  std::vector<AggregateSpec> aggregates;

  std::set<std::string> referenced_columns() const {
    std::set<std::string> cols;
    if (filter) collect_columns(*filter, cols);
    for (const auto& g : group_by) cols.insert(g);
    for (const auto& a : aggregates)
      if (a.fn != AggFn::count) cols.insert(a.column);
    return cols;
  }

 private:
  static void collect_columns(const Predicate& p, std::set<std::string>& cols) {
    if (p.kind == Predicate::Kind::comparison) cols.insert(p.cmp.column);
    for (const auto& c : p.children) collect_columns(c, cols);
  }
};

namespace dsl_detail {

struct Token {
  enum class Kind { identifier, integer_lit, decimal_lit, string_lit, symbol, end };
  Kind kind{Kind::end};
  std::string text;
  int line{1};
  int column{1};
};

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        t.kind = Token::Kind::end;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (is_ident_start(c)) {
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) t.text.push_back(take());
        t.kind = Token::Kind::identifier;
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        if (c == '-') t.text.push_back(take());
        bool seen_dot = false;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                (src_[pos_] == '.' && !seen_dot))) {
          if (src_[pos_] == '.') seen_dot = true;
          t.text.push_back(take());
        }
        t.kind = seen_dot ? Token::Kind::decimal_lit : Token::Kind::integer_lit;
      } else if (c == '"') {
        take();
        while (true) {
          if (pos_ >= src_.size())
            throw DslParseError("unterminated string literal", t.line, t.column);
          char d = take();
          if (d == '"') break;
          if (d == '\\') {
            if (pos_ >= src_.size())
              throw DslParseError("unterminated string literal", t.line, t.column);
            char e = take();
            if (e != '"' && e != '\\')
              throw DslParseError("unsupported string escape", line_, column_ - 1);
            t.text.push_back(e);
          } else if (d == '\n') {
            throw DslParseError("newline inside string literal", t.line, t.column);
          } else {
            t.text.push_back(d);
          }
        }
        t.kind = Token::Kind::string_lit;
      } else {
        t.kind = Token::Kind::symbol;
        switch (c) {
          case '(': case ')': case ',': case '=': case '$':
            t.text.push_back(take());
            break;
          case '!':
            t.text.push_back(take());
            if (pos_ >= src_.size() || src_[pos_] != '=')
              throw DslParseError("expected '=' after '!'", t.line, t.column);
            t.text.push_back(take());
            break;
          case '<': case '>':
            t.text.push_back(take());
            if (pos_ < src_.size() && src_[pos_] == '=') t.text.push_back(take());
            break;
          default:
            throw DslParseError("unexpected character", t.line, t.column);
        }
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char take() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_])))
      take();
  }

  std::string_view src_;
  std::size_t pos_{0};
  int line_{1};
  int column_{1};
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, const DataSchema& schema)
      : tokens_(std::move(tokens)), schema_(schema) {}

  AlgorithmAst run() {
    AlgorithmAst ast;
    while (at_keyword("PARAM")) parse_param(ast);
    if (at_keyword("FILTER")) {
      advance();
      ast.filter = parse_or(ast);
    }
    if (at_keyword("GROUP")) parse_group(ast);
    while (at_keyword("AGG")) parse_agg(ast);
    if (ast.aggregates.empty())
      throw DslParseError("program must declare at least one aggregate", peek().line,
                          peek().column);
    if (peek().kind != Token::Kind::end)
      throw DslParseError("unexpected trailing input", peek().line, peek().column);
    return ast;
  }

 private:
  static constexpr const char* kKeywords[] = {"PARAM", "FILTER", "GROUP", "BY", "AGG",
                                              "AS",    "AND",    "OR",    "NOT"};

  const Token& peek() const { return tokens_[index_]; }
  const Token& advance() { return tokens_[index_++]; }

  bool at_keyword(std::string_view kw) const {
    return peek().kind == Token::Kind::identifier && upper(peek().text) == kw;
  }

  [[noreturn]] static void fail(const std::string& what, const Token& t) {
    throw DslParseError(what, t.line, t.column);
  }

  void expect_keyword(std::string_view kw) {
    if (!at_keyword(kw)) fail("expected keyword " + std::string(kw), peek());
    advance();
  }

  const Token& expect_symbol(std::string_view sym) {
    if (peek().kind != Token::Kind::symbol || peek().text != sym)
      fail("expected '" + std::string(sym) + "'", peek());
    return advance();
  }

  // An identifier that is not a structural keyword.
  const Token& expect_name(const char* what) {
    if (peek().kind != Token::Kind::identifier) fail(std::string("expected ") + what, peek());
    auto up = upper(peek().text);
    for (const char* kw : kKeywords)
      if (up == kw) fail(std::string("keyword cannot be used as ") + what, peek());
    return advance();
  }

  const ColumnSpec& column_for(const Token& t) {
    const ColumnSpec* col = schema_.find(t.text);
    if (col == nullptr) fail("unknown column " + t.text, t);
    if (col->type == SemanticType::subject_id)
      fail("subject identifier column cannot be referenced", t);
    return *col;
  }

  void parse_param(AlgorithmAst& ast) {
    advance();  // PARAM
    const Token& name = expect_name("parameter name");
    for (const auto& p : ast.parameters)
      if (p.name == name.text) fail("parameter declared twice: " + name.text, name);
    const Token& type = expect_name("parameter type");
    SemanticType t;
    const std::string label = upper(type.text);  // type names fold case like keywords
    if (label == "INTEGER")
      t = SemanticType::integer;
    else if (label == "DECIMAL")
      t = SemanticType::decimal;
    else if (label == "CATEGORICAL")
      t = SemanticType::categorical;
    else
      fail("parameter type must be integer, decimal, or categorical", type);
    ast.parameters.push_back({name.text, t});
  }

  Predicate parse_or(AlgorithmAst& ast) {
    Predicate left = parse_and(ast);
    if (!at_keyword("OR")) return left;
    Predicate node;
    node.kind = Predicate::Kind::disj;
    node.children.push_back(std::move(left));
    while (at_keyword("OR")) {
      advance();
      node.children.push_back(parse_and(ast));
    }
    return node;
  }

  Predicate parse_and(AlgorithmAst& ast) {
    Predicate left = parse_unary(ast);
    if (!at_keyword("AND")) return left;
    Predicate node;
    node.kind = Predicate::Kind::conj;
    node.children.push_back(std::move(left));
    while (at_keyword("AND")) {
      advance();
      node.children.push_back(parse_unary(ast));
    }
    return node;
  }

  Predicate parse_unary(AlgorithmAst& ast) {
    if (at_keyword("NOT")) {
      advance();
      Predicate node;
      node.kind = Predicate::Kind::negation;
      node.children.push_back(parse_unary(ast));
      return node;
    }
    if (peek().kind == Token::Kind::symbol && peek().text == "(") {
      advance();
      Predicate inner = parse_or(ast);
      expect_symbol(")");
      return inner;
    }
    return parse_comparison(ast);
  }

  Predicate parse_comparison(AlgorithmAst& ast) {
    const Token& col_tok = expect_name("column name");
    const ColumnSpec& col = column_for(col_tok);

    const Token& op_tok = peek();
    if (op_tok.kind != Token::Kind::symbol) fail("expected comparison operator", op_tok);
    CmpOp op;
    if (op_tok.text == "=")
      op = CmpOp::eq;
    else if (op_tok.text == "!=")
      op = CmpOp::ne;
    else if (op_tok.text == "<")
      op = CmpOp::lt;
    else if (op_tok.text == "<=")
      op = CmpOp::le;
    else if (op_tok.text == ">")
      op = CmpOp::gt;
    else if (op_tok.text == ">=")
      op = CmpOp::ge;
    else
      fail("expected comparison operator", op_tok);
    advance();

    if (col.type == SemanticType::categorical && op != CmpOp::eq && op != CmpOp::ne)
      fail("categorical columns admit only = and !=", op_tok);

    Predicate node;
    node.kind = Predicate::Kind::comparison;
    Comparison& cmp = node.cmp;
    cmp.column = col.name;
    cmp.column_index = schema_.index_of(col.name);
    cmp.column_type = col.type;
    cmp.op = op;

    const Token& operand = peek();
    if (operand.kind == Token::Kind::symbol && operand.text == "$") {
      advance();
      const Token& pname = expect_name("parameter name");
      const ParamSpec* param = nullptr;
      for (const auto& p : ast.parameters)
        if (p.name == pname.text) param = &p;
      if (param == nullptr) fail("undeclared parameter " + pname.text, pname);
      if (!param_compatible(col.type, param->type))
        fail("parameter type does not match column type", pname);
      cmp.is_param = true;
      cmp.param_name = pname.text;
      return node;
    }

    switch (operand.kind) {
      case Token::Kind::integer_lit: {
        advance();
        std::int64_t v = parse_int(operand);
        if (col.type == SemanticType::integer) {
          cmp.literal = v;
        } else if (col.type == SemanticType::decimal) {
          try {
            cmp.literal = Decimal::from_units(v);
          } catch (const EvalError&) {
            fail("literal out of decimal range", operand);
          }
        } else {
          fail("numeric literal compared against categorical column", operand);
        }
        return node;
      }
      case Token::Kind::decimal_lit: {
        advance();
        if (col.type != SemanticType::decimal)
          fail("decimal literal requires a decimal column", operand);
        try {
          cmp.literal = Decimal::parse(operand.text);
        } catch (const ProtocolError&) {
          fail("invalid decimal literal", operand);
        }
        return node;
      }
      case Token::Kind::string_lit: {
        advance();
        if (col.type != SemanticType::categorical)
          fail("string literal requires a categorical column", operand);
        cmp.literal = operand.text;
        return node;
      }
      default:
        fail("expected literal or $parameter", operand);
    }
  }

  static bool param_compatible(SemanticType column, SemanticType param) {
    if (column == SemanticType::integer) return param == SemanticType::integer;
    if (column == SemanticType::decimal)
      return param == SemanticType::decimal || param == SemanticType::integer;
    if (column == SemanticType::categorical) return param == SemanticType::categorical;
    return false;
  }

  static std::int64_t parse_int(const Token& t) {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(t.text.c_str(), &end, 10);
    if (errno == ERANGE || end != t.text.c_str() + t.text.size())
      fail("integer literal out of range", t);
    return v;
  }

  void parse_group(AlgorithmAst& ast) {
    advance();  // GROUP
    expect_keyword("BY");
    while (true) {
      const Token& col_tok = expect_name("group column");
      const ColumnSpec& col = column_for(col_tok);
      if (col.type != SemanticType::categorical)
        fail("group-by columns must be categorical", col_tok);
      for (const auto& g : ast.group_by)
        if (g == col.name) fail("column grouped twice: " + col.name, col_tok);
      ast.group_by.push_back(col.name);
      ast.group_by_indices.push_back(schema_.index_of(col.name));
      if (peek().kind == Token::Kind::symbol && peek().text == ",")
        advance();
      else
        break;
    }
  }

  void parse_agg(AlgorithmAst& ast) {
    advance();  // AGG
    const Token& fn_tok = expect_name("aggregate function");
    AggFn fn;
    // Function names are grammar keywords, so they fold case like the rest.
    const std::string f = upper(fn_tok.text);
    if (f == "COUNT")
      fn = AggFn::count;
    else if (f == "SUM")
      fn = AggFn::sum;
    else if (f == "MEAN")
      fn = AggFn::mean;
    else if (f == "MIN")
      fn = AggFn::min;
    else if (f == "MAX")
      fn = AggFn::max;
    else if (f == "HISTOGRAM")
      fn = AggFn::histogram;
    else
      fail("unknown aggregate function " + fn_tok.text, fn_tok);

    expect_symbol("(");
    AggregateSpec spec;
    spec.fn = fn;
    if (fn == AggFn::count) {
      expect_symbol(")");
    } else {
      const Token& col_tok = expect_name("aggregate column");
      const ColumnSpec& col = column_for(col_tok);
      if (fn == AggFn::histogram) {
        if (col.type != SemanticType::categorical)
          fail("histogram requires a categorical column", col_tok);
      } else if (!is_numeric(col.type)) {
        fail("numeric aggregate requires a numeric column", col_tok);
      }
      spec.column = col.name;
      spec.column_index = schema_.index_of(col.name);
      spec.column_type = col.type;
      expect_symbol(")");
    }
    expect_keyword("AS");
    const Token& out_tok = expect_name("output name");
    for (const auto& a : ast.aggregates)
      if (a.output_name == out_tok.text)
        fail("output name declared twice: " + out_tok.text, out_tok);
    spec.output_name = out_tok.text;
    ast.aggregates.push_back(std::move(spec));
  }

  std::vector<Token> tokens_;
  const DataSchema& schema_;
  std::size_t index_{0};
};

}  // namespace dsl_detail

// Parses and validates `source` against `schema`. The returned AST satisfies
// every language invariant or a DslParseError carries the offending position.
inline AlgorithmAst parse_algorithm(std::string_view source, const DataSchema& schema) {
  schema.validate();
  dsl_detail::Lexer lexer(source);
  dsl_detail::Parser parser(lexer.run(), schema);
  return parser.run();
}

// ── parameter binding ──

using BoundValue = std::variant<std::int64_t, Decimal, std::string>;
using TypedBindings = std::map<std::string, BoundValue>;

struct BindResult {
  std::optional<TypedBindings> bindings;  // set on success
  std::string error;                      // set on failure
};

// Type-checks a contract's literal bindings against the declared parameters.
// Every declared parameter must be bound; unknown names are rejected.
inline BindResult bind_parameters(const AlgorithmAst& ast, const nlohmann::json& raw) {
  if (!raw.is_object()) return {std::nullopt, "parameter bindings must be a map"};
  TypedBindings out;
  for (const auto& p : ast.parameters) {
    if (!raw.contains(p.name)) return {std::nullopt, "missing binding for parameter " + p.name};
    const auto& v = raw.at(p.name);
    switch (p.type) {
      // is_number_unsigned checked first: is_number_integer is true for
      // unsigned too, and get<int64> would wrap values above INT64_MAX.
      case SemanticType::integer:
        if (v.is_number_unsigned() &&
            v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
          return {std::nullopt, "binding for " + p.name + " is out of integer range"};
        if (v.is_number_integer())
          out[p.name] = v.get<std::int64_t>();
        else
          return {std::nullopt, "binding for " + p.name + " must be an integer"};
        break;
      case SemanticType::decimal:
        try {
          if (v.is_number_unsigned() &&
              v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
            return {std::nullopt, "binding for " + p.name + " is out of decimal range"};
          if (v.is_number_float())
            out[p.name] = Decimal::from_double(v.get<double>());
          else if (v.is_number_integer())
            out[p.name] = Decimal::from_units(v.get<std::int64_t>());
          else
            return {std::nullopt, "binding for " + p.name + " must be a number"};
        } catch (const Error&) {
          return {std::nullopt, "binding for " + p.name + " is out of decimal range"};
        }
        break;
      case SemanticType::categorical:
        if (!v.is_string()) return {std::nullopt, "binding for " + p.name + " must be a string"};
        out[p.name] = v.get<std::string>();
        break;
      default:
        return {std::nullopt, "parameter " + p.name + " has unsupported type"};
    }
  }
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    bool declared = false;
    for (const auto& p : ast.parameters)
      if (p.name == it.key()) declared = true;
    if (!declared) return {std::nullopt, "binding names undeclared parameter " + it.key()};
  }
  return {std::move(out), ""};
}

}  // namespace opal
