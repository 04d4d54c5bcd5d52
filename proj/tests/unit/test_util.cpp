#include "doctest.h"
#include "helpers.hpp"

#include "sofa/util.hpp"

using namespace sofa;

TEST_SUITE("util") {

TEST_CASE("sha256 of known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("nfc composes combining sequences") {
    // "e" + combining acute -> precomposed U+00E9
    CHECK(nfc("caf\x65\xcc\x81") == "caf\xc3\xa9");
    CHECK(nfc("plain ascii") == "plain ascii");
}

TEST_CASE("to_lower handles non-ASCII") {
    CHECK(to_lower("ÉCOLE Korean") == "école korean");
}

TEST_CASE("collapse_whitespace trims and collapses") {
    CHECK(collapse_whitespace("  are \t  lazy \n") == "are lazy");
    CHECK(collapse_whitespace("\xc2\xa0x\xc2\xa0 y") == "x y");  // no-break spaces
    CHECK(collapse_whitespace("   ").empty());
}

TEST_CASE("split helpers") {
    CHECK(split_whitespace(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
    auto lines = split_lines("one\r\ntwo\n\nthree\n");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "one");
    CHECK(lines[2].empty());
    CHECK(lines[3] == "three");
    CHECK(split_lines("").empty());
}

TEST_CASE("slugify") {
    CHECK(slugify("Korean people") == "korean-people");
    CHECK(slugify("  Native-American  ") == "native-american");
    CHECK(slugify("wheelchair user's") == "wheelchair-user-s");
}

TEST_CASE("delimited parsing follows RFC 4180") {
    auto rows = parse_delimited("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\"multi\nline\",z\n", ',');
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "x, y");
    CHECK(rows[1][1] == "he said \"hi\"");
    CHECK(rows[2][0] == "multi\nline");
    CHECK(testing::kind_of([] { parse_delimited("a,\"open\n", ','); }) == error_kind::format);
}

TEST_CASE("csv_field round-trips through the parser") {
    for (std::string s : {"plain", "with,comma", "with \"quote\"", "new\nline", ""}) {
        auto rows = parse_delimited(csv_field(s) + ",end\n", ',');
        REQUIRE(rows.size() == 1);
        CHECK(rows[0][0] == s);
    }
}

TEST_CASE("write_file creates parents and read_file reads back") {
    testing::temp_dir dir;
    auto              p = dir / "a/b/c.txt";
    write_file(p, "hello");
    CHECK(read_file(p) == "hello");
    CHECK(sha256_file(p) == sha256_hex("hello"));
    CHECK(testing::kind_of([&] { read_file(dir / "missing"); }) == error_kind::io);
}

}
