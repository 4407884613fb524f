#include <doctest.h>

#include <cstdlib>

#include "hiertrade/errors.hpp"
#include "hiertrade/util.hpp"

using namespace hiertrade;

TEST_CASE("fmt_double round-trips exactly") {
  const double cases[] = {0.0,       -0.0,     1.0 / 3.0, 1e-300,        -2.5e17,
                          3.3777,    1.7496,   0.1,       123456.789012, 1e308,
                          -1e-308};
  for (double x : cases) {
    std::string s = fmt_double(x);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == x);
  }
}

TEST_CASE("iso8601 parse and format invert each other") {
  CHECK(parse_iso8601_utc("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601_utc("1970-01-02T00:00:00Z") == 86400);
  CHECK(parse_iso8601_utc("2019-01-01T00:00:00Z") == 1546300800);
  CHECK(parse_iso8601_utc("2019-01-01 00:00:00") == 1546300800);
  CHECK(format_iso8601_utc(1546300800) == "2019-01-01T00:00:00Z");

  for (std::int64_t t : {0L, 1546300800L, 1583020800L, 4102444800L}) {
    CHECK(parse_iso8601_utc(format_iso8601_utc(t)) == t);
  }
}

TEST_CASE("iso8601 rejects malformed input") {
  CHECK_THROWS_AS(parse_iso8601_utc(""), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-01-01"), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-13-01T00:00:00Z"), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-02-30T00:00:00Z"), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-01-01T25:00:00Z"), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-01-01X00:00:00Z"), DataError);
  CHECK_THROWS_AS(parse_iso8601_utc("2019-01-01T00:00:0aZ"), DataError);
}

TEST_CASE("fnv1a64 matches reference vectors") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("derive_seed separates purposes and masters") {
  CHECK(derive_seed(42, "synth") != derive_seed(42, "train"));
  CHECK(derive_seed(42, "synth") != derive_seed(43, "synth"));
  CHECK(derive_seed(42, "synth") == derive_seed(42, "synth"));
}

TEST_CASE("positive part and its subgradient") {
  CHECK(pos(2.5) == 2.5);
  CHECK(pos(-2.5) == 0.0);
  CHECK(pos(0.0) == 0.0);
  CHECK(pos_grad(1.0) == 1.0);
  CHECK(pos_grad(-1.0) == 0.0);
  CHECK(pos_grad(0.0) == 0.0);
}
