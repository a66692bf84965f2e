#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "pcgain/csv.hpp"
#include "pcgain/errors.hpp"

using namespace pcgain;

TEST_CASE("parses plain rows") {
  CsvTable t = parse_csv("a,b,c\n1,2,3\n4,5,6\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.n_rows() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "2", "3"});
  CHECK(t.rows[1] == std::vector<std::string>{"4", "5", "6"});
}

TEST_CASE("quoted fields, embedded separators, doubled quotes") {
  CsvTable t = parse_csv("name,note\n\"Smith, J\",\"said \"\"hi\"\"\"\nplain,\"multi\nline\"\n");
  REQUIRE(t.n_rows() == 2);
  CHECK(t.rows[0][0] == "Smith, J");
  CHECK(t.rows[0][1] == "said \"hi\"");
  CHECK(t.rows[1][1] == "multi\nline");
}

TEST_CASE("line ending variants") {
  CsvTable crlf = parse_csv("a,b\r\n1,2\r\n");
  CHECK(crlf.rows[0] == std::vector<std::string>{"1", "2"});
  CsvTable nofinal = parse_csv("a,b\n1,2");
  CHECK(nofinal.rows[0] == std::vector<std::string>{"1", "2"});
}

TEST_CASE("empty trailing field is kept") {
  CsvTable t = parse_csv("a,b\n1,\n");
  REQUIRE(t.n_rows() == 1);
  CHECK(t.rows[0][1] == "");
}

TEST_CASE("ragged and malformed input is rejected") {
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), DataError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse_csv(""), DataError);
  CHECK_THROWS_AS(parse_csv("a,b\n\"open,2\n"), DataError);
}

TEST_CASE("round trip through string preserves fields") {
  CsvTable t;
  t.header = {"x", "weird"};
  t.rows = {{"1.5", "a,b"}, {"-0.25", "with \"quotes\""}, {"0", "line\nbreak"}};
  CsvTable back = parse_csv(csv_to_string(t));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}

TEST_CASE("round trip through a file") {
  const std::string path = "csv_test_tmp.csv";
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"1", "2"}, {"3", "4"}};
  write_csv(t, path);
  CsvTable back = read_csv(path);
  CHECK(back.rows == t.rows);
  std::remove(path.c_str());
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789, 0.0, -0.0, 1e300}) {
    double back = 0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
}

TEST_CASE("parse_double rejects junk and partial numbers") {
  double out;
  CHECK(parse_double("1.25", out));
  CHECK(out == 1.25);
  CHECK(parse_double("  2.5", out));  // leading whitespace is strtod-accepted
  CHECK_FALSE(parse_double("1.25x", out));
  CHECK_FALSE(parse_double("", out));
  CHECK_FALSE(parse_double("na", out));
  CHECK_FALSE(parse_double("1e999", out));  // overflow
}
