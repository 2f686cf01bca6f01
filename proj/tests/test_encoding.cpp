#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

#include "opal/encoding.hpp"
#include "opal/error.hpp"
#include "opal/uuid.hpp"

using namespace opal;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) {
  return {s.begin(), s.end()};
}

}  // namespace

// ── hex ──

TEST_CASE("hex: encodes lowercase and round-trips", "[encoding]") {
  std::vector<std::uint8_t> data{0x00, 0x0f, 0xa5, 0xff};
  REQUIRE(to_hex(data) == "000fa5ff");
  REQUIRE(from_hex("000fa5ff") == data);
  REQUIRE(from_hex("") == std::vector<std::uint8_t>{});
}

TEST_CASE("hex: rejects odd length, bad digits, and uppercase", "[encoding]") {
  REQUIRE_THROWS_AS(from_hex("abc"), ProtocolError);
  REQUIRE_THROWS_AS(from_hex("zz"), ProtocolError);
  REQUIRE_THROWS_AS(from_hex("AB"), ProtocolError);
  REQUIRE(is_lower_hex("00deadbeef"));
  REQUIRE_FALSE(is_lower_hex("DEADBEEF"));
  REQUIRE_FALSE(is_lower_hex("12g4"));
}

// ── base64 ──

TEST_CASE("base64: matches the published vectors", "[encoding]") {
  // RFC 4648 section 10.
  REQUIRE(to_base64(bytes_of("")) == "");
  REQUIRE(to_base64(bytes_of("f")) == "Zg==");
  REQUIRE(to_base64(bytes_of("fo")) == "Zm8=");
  REQUIRE(to_base64(bytes_of("foo")) == "Zm9v");
  REQUIRE(to_base64(bytes_of("foob")) == "Zm9vYg==");
  REQUIRE(to_base64(bytes_of("fooba")) == "Zm9vYmE=");
  REQUIRE(to_base64(bytes_of("foobar")) == "Zm9vYmFy");

  REQUIRE(from_base64("Zm9vYmFy") == bytes_of("foobar"));
  REQUIRE(from_base64("Zg==") == bytes_of("f"));
  REQUIRE(from_base64("") == std::vector<std::uint8_t>{});
}

TEST_CASE("base64: rejects malformed input", "[encoding]") {
  REQUIRE_THROWS_AS(from_base64("Zg="), ProtocolError);    // not a multiple of 4
  REQUIRE_THROWS_AS(from_base64("Zg=f"), ProtocolError);   // data after padding
  REQUIRE_THROWS_AS(from_base64("=AAA"), ProtocolError);   // padding too early
  REQUIRE_THROWS_AS(from_base64("Zg==Zg=="), ProtocolError);  // padding mid-stream
  REQUIRE_THROWS_AS(from_base64("Zm9!"), ProtocolError);   // alphabet violation
}

TEST_CASE("base64 and hex: random buffers round-trip", "[encoding]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t len = rng() % 64;
    std::vector<std::uint8_t> data(len);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    REQUIRE(from_base64(to_base64(data)) == data);
    REQUIRE(from_hex(to_hex(data)) == data);
  }
}

// ── uuid ──

TEST_CASE("uuid: parse and print round-trip in lowercase hyphenated form", "[encoding]") {
  const std::string text = "f81d4fae-7dec-41d0-a765-00a0c91e6bf6";
  Uuid u = Uuid::parse(text);
  REQUIRE(u.str() == text);
  REQUIRE_FALSE(u.is_nil());
  REQUIRE(Uuid{}.is_nil());
  REQUIRE(Uuid{}.str() == "00000000-0000-0000-0000-000000000000");
}

TEST_CASE("uuid: malformed strings are rejected", "[encoding]") {
  REQUIRE_THROWS_AS(Uuid::parse("f81d4fae7dec41d0a76500a0c91e6bf6"), ProtocolError);
  REQUIRE_THROWS_AS(Uuid::parse("F81D4FAE-7DEC-41D0-A765-00A0C91E6BF6"), ProtocolError);
  REQUIRE_THROWS_AS(Uuid::parse("f81d4fae-7dec-41d0-a765-00a0c91e6bf"), ProtocolError);
  REQUIRE_THROWS_AS(Uuid::parse("f81d4fae-7dec-41d0-a765-00a0c91e6bfg"), ProtocolError);
  REQUIRE_THROWS_AS(Uuid::parse(""), ProtocolError);
}

TEST_CASE("uuid: generated ids carry version-4 bits and round-trip", "[encoding]") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    Uuid u = Uuid::random(rng);
    REQUIRE((u.bytes[6] & 0xf0) == 0x40);
    REQUIRE((u.bytes[8] & 0xc0) == 0x80);
    REQUIRE(Uuid::parse(u.str()) == u);
  }
  REQUIRE(Uuid::random(rng) != Uuid::random(rng));
}
