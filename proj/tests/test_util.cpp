#include <doctest.h>

#include <cmath>
#include <set>

#include "crux/error.hpp"
#include "crux/util.hpp"
#include "test_support.hpp"

using namespace crux;

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(stable_hash64("abc") == 0xba7816bf8f01cfeaULL);
}

TEST_CASE("derive_seed separates labels and parents") {
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("rng is reproducible and uniform stays in [0,1)") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform();
        CHECK(x == b.uniform());
        differs = differs || x != c.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(differs);
}

TEST_CASE("rng moments") {
    Rng r(7);
    const int n = 200000;
    double s = 0, s2 = 0, ns = 0, ns2 = 0;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        s += u;
        s2 += u * u;
        double z = r.normal();
        ns += z;
        ns2 += z * z;
    }
    // mean of U(0,1) has sd sqrt(1/12/n); allow 5 sd
    CHECK(std::abs(s / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(s2 / n - 1.0 / 3) < 0.005);
    CHECK(std::abs(ns / n) < 5 / std::sqrt(double(n)));
    CHECK(std::abs(ns2 / n - 1.0) < 0.02);
}

TEST_CASE("rng index covers range") {
    Rng r(3);
    std::set<std::size_t> seen;
    for (int i = 0; i < 500; ++i) {
        auto k = r.index(7);
        CHECK(k < 7);
        seen.insert(k);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(r.index(0), Error);
}

TEST_CASE("bernoulli edge probabilities") {
    Rng r(11);
    for (int i = 0; i < 100; ++i) {
        CHECK_FALSE(r.bernoulli(0.0));
        CHECK(r.bernoulli(1.0));
    }
}

TEST_CASE("string helpers") {
    CHECK(to_lower("AbC-9") == "abc-9");
    CHECK(trim("  x y \n") == "x y");
    CHECK(trim("   ").empty());
    auto lines = split_lines("a\r\nb\n\nc");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "a");
    CHECK(lines[2].empty());
    CHECK(lines[3] == "c");
    CHECK(split_lines("x\n").size() == 1);
}

TEST_CASE("jsonl round trip and errors") {
    testing_support::TempDir tmp;
    auto p = tmp.path() / "rows.jsonl";
    write_jsonl(p, {json{{"a", 1}}, json{{"b", "two"}}});
    auto rows = read_jsonl(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1]["b"] == "two");

    write_text_file(p, "{\"a\":1}\n\n{bad\n");
    try {
        read_jsonl(p);
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    try {
        read_jsonl(tmp.path() / "missing.jsonl");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

TEST_CASE("error message carries the code name") {
    Error e(ErrorCode::DomainError, "k > n");
    CHECK(std::string(e.what()) == "DomainError: k > n");
}
