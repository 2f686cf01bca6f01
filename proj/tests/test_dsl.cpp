// Algorithm language: grammar acceptance, structural rejections (the
// properties that make raw-row egress impossible), column-reference
// agreement with an independent token-scan oracle, and parameter binding.

#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "opal/dsl.hpp"
#include "opal/error.hpp"
#include "opal/schema.hpp"
#include "oracles/tokenscan_columns.hpp"

using namespace opal;

namespace {

DataSchema wide_schema() {
  DataSchema s;
  s.columns = {{"person", SemanticType::subject_id}, {"age", SemanticType::integer},
               {"income", SemanticType::decimal},    {"region", SemanticType::categorical},
               {"plan", SemanticType::categorical},  {"visits", SemanticType::integer}};
  s.validate();
  return s;
}

AlgorithmAst parse(const std::string& src) { return parse_algorithm(src, wide_schema()); }

}  // namespace

// ── acceptance ──

TEST_CASE("dsl: minimal program is one aggregate", "[dsl]") {
  const AlgorithmAst ast = parse("AGG count() AS n");
  REQUIRE(ast.parameters.empty());
  REQUIRE_FALSE(ast.filter.has_value());
  REQUIRE(ast.group_by.empty());
  REQUIRE(ast.aggregates.size() == 1);
  REQUIRE(ast.aggregates[0].fn == AggFn::count);
  REQUIRE(ast.aggregates[0].output_name == "n");
}

TEST_CASE("dsl: full clause set parses into the expected shape", "[dsl]") {
  const AlgorithmAst ast = parse(
      "PARAM min_age integer PARAM target_plan categorical "
      "FILTER (age >= $min_age AND NOT plan = $target_plan) OR income < 1250.50 "
      "GROUP BY region, plan "
      "AGG mean(income) AS avg_income AGG count() AS n AGG histogram(plan) AS plans");
  REQUIRE(ast.parameters.size() == 2);
  REQUIRE(ast.parameters[0].type == SemanticType::integer);
  REQUIRE(ast.parameters[1].type == SemanticType::categorical);
  REQUIRE(ast.filter->kind == Predicate::Kind::disj);
  REQUIRE(ast.group_by == std::vector<std::string>{"region", "plan"});
  REQUIRE(ast.aggregates.size() == 3);
  REQUIRE(ast.aggregates[0].fn == AggFn::mean);
  REQUIRE(ast.aggregates[2].fn == AggFn::histogram);
}

TEST_CASE("dsl: keywords are case-insensitive, identifiers are not", "[dsl]") {
  REQUIRE_NOTHROW(parse("agg COUNT() as n"));
  REQUIRE_NOTHROW(parse("filter age > 1 Agg Sum(visits) As total"));
  REQUIRE_NOTHROW(parse("AGG count() AS n AGG sum(age) AS N"));  // outputs differ by case
  REQUIRE_THROWS_AS(parse("FILTER AGE > 1 AGG count() AS n"), DslParseError);  // no column AGE
}

TEST_CASE("dsl: decimal columns accept integer literals by promotion", "[dsl]") {
  const AlgorithmAst ast = parse("FILTER income >= 1000 AGG count() AS n");
  const Comparison& cmp = ast.filter->cmp;
  REQUIRE_FALSE(cmp.is_param);
  REQUIRE(std::get<Decimal>(cmp.literal) == Decimal::from_units(1000));
}

TEST_CASE("dsl: negative literals are single tokens", "[dsl]") {
  const AlgorithmAst ast = parse("FILTER age > -3 AGG count() AS n");
  REQUIRE(std::get<std::int64_t>(ast.filter->cmp.literal) == -3);
}

// ── rejections that enforce the no-egress shape ──

TEST_CASE("dsl: a program cannot project a raw column", "[dsl]") {
  // There is no SELECT-like form; a bare column mention is a syntax error.
  REQUIRE_THROWS_AS(parse("AGG select(age) AS rows"), DslParseError);  // unknown function
  REQUIRE_THROWS_AS(parse("age"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG identity(income) AS raw"), DslParseError);
}

TEST_CASE("dsl: subject-id columns are unreferencable anywhere", "[dsl]") {
  REQUIRE_THROWS_AS(parse("FILTER person = \"x\" AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("GROUP BY person AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG histogram(person) AS who"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG count(person) AS n"), DslParseError);
}

TEST_CASE("dsl: aggregate argument typing is enforced", "[dsl]") {
  REQUIRE_THROWS_AS(parse("AGG sum(region) AS total"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG mean(plan) AS avg"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG histogram(age) AS h"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG count(age) AS n"), DslParseError);  // count takes no argument
  REQUIRE_THROWS_AS(parse("AGG sum() AS total"), DslParseError);
}

TEST_CASE("dsl: grouping is categorical-only and duplicate-free", "[dsl]") {
  REQUIRE_THROWS_AS(parse("GROUP BY age AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("GROUP BY region, region AGG count() AS n"), DslParseError);
}

TEST_CASE("dsl: categorical comparisons admit only equality forms", "[dsl]") {
  REQUIRE_NOTHROW(parse("FILTER region != \"east\" AGG count() AS n"));
  REQUIRE_THROWS_AS(parse("FILTER region < \"east\" AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("FILTER age = \"ten\" AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("FILTER region = 3 AGG count() AS n"), DslParseError);
}

TEST_CASE("dsl: declarations must be coherent", "[dsl]") {
  REQUIRE_THROWS_AS(parse("PARAM x integer PARAM x integer AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("PARAM x furlongs AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("FILTER age > $missing AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("PARAM p categorical FILTER age > $p AGG count() AS n"), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG count() AS n AGG sum(age) AS n"), DslParseError);  // dup output
  REQUIRE_THROWS_AS(parse("PARAM x integer"), DslParseError);  // no aggregate
  REQUIRE_THROWS_AS(parse(""), DslParseError);
  REQUIRE_THROWS_AS(parse("AGG count() AS n trailing"), DslParseError);
}

TEST_CASE("dsl: errors carry line and column", "[dsl]") {
  try {
    parse("AGG count() AS n\nAGG bogus(age) AS m");
    FAIL("expected parse error");
  } catch (const DslParseError& e) {
    REQUIRE(e.line == 2);
    REQUIRE(e.column > 1);
  }
}

TEST_CASE("dsl: structural keywords are reserved as identifiers", "[dsl]") {
  REQUIRE_THROWS_AS(parse("AGG count() AS filter"), DslParseError);
  REQUIRE_THROWS_AS(parse("PARAM group integer AGG count() AS n"), DslParseError);
}

// ── token-scan oracle agreement ──

TEST_CASE("dsl: referenced columns equal the token-scan oracle on fixed programs", "[dsl]") {
  const std::vector<std::string> programs = {
      "AGG count() AS n",
      "FILTER age >= 18 AGG count() AS n",
      "PARAM lo integer FILTER age >= $lo AND income < 9.5 AGG sum(visits) AS total",
      "GROUP BY region AGG mean(income) AS avg AGG histogram(plan) AS plans",
      "PARAM which categorical FILTER plan = $which OR NOT region = \"age\" "
      "GROUP BY region, plan AGG count() AS n AGG max(age) AS oldest",
  };
  for (const auto& src : programs) {
    INFO(src);
    REQUIRE(parse(src).referenced_columns() == oracle::tokenscan_columns(src));
  }
}

TEST_CASE("dsl: referenced columns equal the token-scan oracle on random programs", "[dsl]") {
  std::mt19937_64 rng(20260814);
  const std::vector<std::string> numeric = {"age", "income", "visits"};
  const std::vector<std::string> cats = {"region", "plan"};
  auto pick = [&](const std::vector<std::string>& v) -> std::string {
    return v[rng() % v.size()];
  };
  for (int iter = 0; iter < 300; ++iter) {
    std::string src;
    const bool with_param = rng() % 2 == 0;
    if (with_param) src += "PARAM cutoff integer ";
    if (rng() % 2 == 0) {
      src += "FILTER ";
      const std::string col = pick(numeric);
      src += col + (rng() % 2 == 0 ? " >= " : " < ");
      src += with_param && rng() % 2 == 0 ? std::string("$cutoff")
                                          : std::to_string(static_cast<int>(rng() % 100));
      if (rng() % 2 == 0) src += " AND " + pick(cats) + " = \"east\"";
      src += " ";
    }
    if (rng() % 2 == 0) src += "GROUP BY " + pick(cats) + " ";
    src += "AGG count() AS n";
    if (rng() % 2 == 0) src += " AGG sum(" + pick(numeric) + ") AS total";
    if (with_param && src.find('$') == std::string::npos)
      src = src.substr(std::string("PARAM cutoff integer ").size());  // avoid unused-param noise

    INFO(src);
    const AlgorithmAst ast = parse_algorithm(src, wide_schema());
    REQUIRE(ast.referenced_columns() == oracle::tokenscan_columns(src));
  }
}

// ── parameter binding ──

TEST_CASE("dsl: bindings type-check against declarations", "[dsl]") {
  const AlgorithmAst ast = parse(
      "PARAM lo integer PARAM cap decimal PARAM which categorical "
      "FILTER age >= $lo AND income <= $cap AND plan = $which AGG count() AS n");

  BindResult good = bind_parameters(
      ast, nlohmann::json{{"lo", 21}, {"cap", 1999.25}, {"which", "basic"}});
  REQUIRE(good.bindings.has_value());
  REQUIRE(std::get<std::int64_t>(good.bindings->at("lo")) == 21);
  REQUIRE(std::get<Decimal>(good.bindings->at("cap")) == Decimal::parse("1999.25"));

  // Integers promote into decimal parameters.
  REQUIRE(bind_parameters(ast, {{"lo", 21}, {"cap", 2000}, {"which", "basic"}})
              .bindings.has_value());

  REQUIRE_FALSE(bind_parameters(ast, {{"lo", "21"}, {"cap", 1.0}, {"which", "basic"}})
                    .bindings.has_value());
  REQUIRE_FALSE(bind_parameters(ast, {{"lo", 21}, {"cap", 1.0}}).bindings.has_value());
  REQUIRE_FALSE(
      bind_parameters(ast, {{"lo", 21}, {"cap", 1.0}, {"which", "basic"}, {"extra", 1}})
          .bindings.has_value());
  REQUIRE_FALSE(bind_parameters(ast, {{"lo", 2.5}, {"cap", 1.0}, {"which", "basic"}})
                    .bindings.has_value());
}

TEST_CASE("dsl: binding rejects out-of-range numerics", "[dsl]") {
  const AlgorithmAst ast = parse("PARAM cap decimal FILTER income <= $cap AGG count() AS n");
  // 2^50 micros is the representable bound; 2^40 units exceeds it.
  REQUIRE_FALSE(
      bind_parameters(ast, {{"cap", std::int64_t{1} << 40}}).bindings.has_value());
  REQUIRE_FALSE(bind_parameters(ast, {{"cap", 1e300}}).bindings.has_value());
}
