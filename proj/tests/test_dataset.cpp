// Strict CSV ingestion into immutable snapshots: whole-file rejection on any
// malformed cell, position-only diagnostics, and exact agreement with the
// generator's manifest on large random files.

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include "opal/dataset.hpp"
#include "support/generators.hpp"

using namespace opal;

namespace {

DataSchema people_schema() {
  DataSchema s{{{"person", SemanticType::subject_id},
                {"age", SemanticType::integer},
                {"income", SemanticType::decimal},
                {"region", SemanticType::categorical}}};
  s.validate();
  return s;
}

DatasetSnapshot ingest(const std::string& csv, const DataSchema& schema = people_schema()) {
  return ingest_dataset(csv, schema, Uuid::random(), Timestamp{1'700'000'000});
}

}  // namespace

TEST_CASE("dataset: well-typed csv ingests every row", "[dataset]") {
  auto snap = ingest(
      "person,age,income,region\n"
      "p1,34,1200.50,north\n"
      "p2,41,-3.25,south\n"
      "p3,19,0,north\n");
  REQUIRE(snap.row_count() == 3);
  CHECK(snap.subject_values() == std::vector<std::string>{"p1", "p2", "p3"});
  CHECK(snap.int_column(1) == std::vector<std::int64_t>{34, 41, 19});
  CHECK(snap.decimal_column(2)[0] == Decimal{1'200'500'000});
  CHECK(snap.decimal_column(2)[1] == Decimal{-3'250'000});
  CHECK(snap.string_column(3)[2] == "north");
  CHECK(snap.ingested_at == Timestamp{1'700'000'000});
}

TEST_CASE("dataset: quoting, CRLF endings, and embedded delimiters", "[dataset]") {
  auto snap = ingest(
      "person,age,income,region\r\n"
      "\"p,1\",34,1.5,\"no\"\"rth\"\r\n"
      "p2,41,2.5,plain\r\n");
  REQUIRE(snap.row_count() == 2);
  CHECK(snap.subject_values()[0] == "p,1");
  CHECK(snap.string_column(3)[0] == "no\"rth");
}

TEST_CASE("dataset: missing trailing newline still ingests the last row", "[dataset]") {
  auto snap = ingest("person,age,income,region\np1,1,1,north");
  REQUIRE(snap.row_count() == 1);
}

TEST_CASE("dataset: malformed integer cell rejects the whole file", "[dataset]") {
  const std::string csv =
      "person,age,income,region\n"
      "p1,34,1.0,north\n"
      "p2,not_a_number,2.0,south\n";
  try {
    ingest(csv);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.row == 2);
    CHECK(e.column == "age");
    // Positions only: the offending value never travels through error text.
    CHECK(std::string(e.what()).find("not_a_number") == std::string::npos);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("age") != std::string::npos);
  }
}

TEST_CASE("dataset: malformed decimal cell names position, not contents", "[dataset]") {
  const std::string csv =
      "person,age,income,region\n"
      "p1,34,12.3456789,north\n";  // seven fractional digits
  try {
    ingest(csv);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.row == 1);
    CHECK(e.column == "income");
    CHECK(std::string(e.what()).find("12.3456789") == std::string::npos);
  }
}

TEST_CASE("dataset: integer cell beyond int64 rejected", "[dataset]") {
  REQUIRE_THROWS_AS(ingest("person,age,income,region\np1,99999999999999999999,1,north\n"),
                    IngestError);
}

TEST_CASE("dataset: exponent notation is not a decimal", "[dataset]") {
  REQUIRE_THROWS_AS(ingest("person,age,income,region\np1,1,1e3,north\n"), IngestError);
}

TEST_CASE("dataset: empty subject identifier rejected", "[dataset]") {
  REQUIRE_THROWS_AS(ingest("person,age,income,region\n,1,1,north\n"), IngestError);
}

TEST_CASE("dataset: header must match the schema in declared order", "[dataset]") {
  REQUIRE_THROWS_AS(ingest("person,income,age,region\np1,1,1,north\n"), IngestError);
  REQUIRE_THROWS_AS(ingest("person,age,income\np1,1,1\n"), IngestError);
  REQUIRE_THROWS_AS(ingest(""), IngestError);
}

TEST_CASE("dataset: row width must match the schema", "[dataset]") {
  REQUIRE_THROWS_AS(ingest("person,age,income,region\np1,1,1\n"), IngestError);
  REQUIRE_THROWS_AS(ingest("person,age,income,region\np1,1,1,north,extra\n"), IngestError);
}

TEST_CASE("dataset: csv structural damage rejects the file", "[dataset]") {
  // Unterminated quote.
  REQUIRE_THROWS_AS(ingest("person,age,income,region\n\"p1,1,1,north\n"), IngestError);
  // Quote opening mid-field.
  REQUIRE_THROWS_AS(ingest("person,age,income,region\npx\"y\",1,1,north\n"), IngestError);
  // Bare carriage return.
  REQUIRE_THROWS_AS(ingest("person,age,income,region\rp1,1,1,north\n"), IngestError);
}

TEST_CASE("dataset: re-ingestion produces a fresh snapshot, old one untouched", "[dataset]") {
  const std::string csv = "person,age,income,region\np1,10,1,north\n";
  auto schema = people_schema();
  auto first = ingest_dataset(csv, schema, Uuid::random(), Timestamp{100});
  auto second =
      ingest_dataset("person,age,income,region\np1,99,1,north\n", schema, Uuid::random(),
                     Timestamp{200});
  CHECK(first.int_column(1)[0] == 10);
  CHECK(second.int_column(1)[0] == 99);
  CHECK(first.ingested_at < second.ingested_at);
}

TEST_CASE("dataset: 10,000-row generated csv matches the generator manifest", "[dataset]") {
  gen::Rng rng(20260814);
  auto schema = gen::random_schema(rng);
  gen::DatasetOptions opts;
  opts.min_rows = opts.max_rows = 10'000;
  auto data = gen::random_dataset(rng, schema, opts);

  auto snap = gen::make_snapshot(schema, data);
  REQUIRE(snap.row_count() == 10'000);

  // Every ingested cell must reproduce the exact text the generator wrote.
  for (std::size_t r = 0; r < snap.row_count(); ++r) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const std::string& written = data.cells[r][c];
      switch (schema.columns[c].type) {
        case SemanticType::integer:
          REQUIRE(std::to_string(snap.int_column(c)[r]) == written);
          break;
        case SemanticType::decimal:
          REQUIRE(snap.decimal_column(c)[r].str() == written);
          break;
        default:
          REQUIRE(snap.string_column(c)[r] == written);
          break;
      }
    }
  }
}
