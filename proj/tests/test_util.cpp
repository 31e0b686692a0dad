// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "neoword/errors.hpp"
#include "neoword/util.hpp"

using namespace neoword;

TEST_CASE("rng is reproducible and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    if (i == 0) CHECK(va != c.next_u64());
  }

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }

  Rng n(7);
  double sum = 0, sq = 0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    double x = n.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / draws) < 0.08);
  CHECK(std::abs(sq / draws - 1.0) < 0.1);

  CHECK(Rng::mix(1, 2) != Rng::mix(2, 1));
  CHECK(Rng::mix(1, 2) == Rng::mix(1, 2));
}

TEST_CASE("rng uniform_int stays in range") {
  Rng r(11);
  std::set<uint64_t> seen;
  for (int i = 0; i < 300; ++i) {
    uint64_t v = r.uniform_int(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1, sorted = v1;
  Rng a(5), b(5);
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  std::sort(v1.begin(), v1.end());
  CHECK(v1 == sorted);
}

TEST_CASE("fnv1a offset basis") {
  Fnv1a empty;
  CHECK(empty.digest() == 0xcbf29ce484222325ull);
}

TEST_CASE("fnv1a known digests") {
  Fnv1a h;
  h.update(std::string_view("a"));
  CHECK(h.digest() == 0xaf63dc4c8601ec8cull);

  Fnv1a fb;
  fb.update(std::string_view("foobar"));
  CHECK(fb.digest() == 0x85944171f73967e8ull);

  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");

  // update in pieces equals update at once
  Fnv1a parts;
  parts.update(std::string_view("foo"));
  parts.update(std::string_view("bar"));
  CHECK(parts.digest() == fb.digest());
}

TEST_CASE("file_checksum hashes contents and rejects missing files") {
  auto dir = testing::temp_dir("util-checksum");
  write_text_file(dir / "x.txt", "foobar");
  CHECK(file_checksum(dir / "x.txt") == fnv1a_hex("foobar"));
  CHECK_THROWS_AS(file_checksum(dir / "missing.txt"), Error);
  try {
    file_checksum(dir / "missing.txt");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io_error);
  }
}

TEST_CASE("string helpers") {
  CHECK(to_lower("AbC") == "abc");
  CHECK(trim("  x y\t\n") == "x y");
  CHECK(trim("") == "");
  CHECK(starts_with("abcdef", "abc"));
  CHECK(!starts_with("ab", "abc"));
  CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(split("", ',') == std::vector<std::string>{""});
  CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
  CHECK(join({}, ", ") == "");
  CHECK(replace_all("aaa", "a", "bb") == "bbbbbb");
  CHECK(replace_all("one two one", "one", "1") == "1 two 1");
  CHECK(replace_all("abc", "x", "y") == "abc");
  CHECK(contains_whitespace("a b"));
  CHECK(!contains_whitespace("ab"));
}

TEST_CASE("kv config parses, serializes, and checksums stably") {
  KvConfig kv = KvConfig::parse(
      "# comment\n"
      "alpha = 1\n"
      "\n"
      "name = tilde word \n"
      "flag=true\n");
  CHECK(kv.has("alpha"));
  CHECK(kv.get("alpha") == "1");
  CHECK(kv.get("name") == "tilde word");
  CHECK(kv.get_int("alpha", 0) == 1);
  CHECK(kv.get_int("missing", 9) == 9);
  CHECK(kv.get_double("alpha", 0.0) == 1.0);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_or("missing", "d") == "d");
  CHECK_THROWS_AS(kv.get("missing"), Error);

  // serialization is key-sorted, so insertion order cannot change the checksum
  KvConfig a, b;
  a.set("x", "1");
  a.set("y", "2");
  b.set("y", "2");
  b.set("x", "1");
  CHECK(a.serialize() == b.serialize());
  CHECK(a.checksum() == b.checksum());

  KvConfig round = KvConfig::parse(a.serialize());
  CHECK(round.entries() == a.entries());
}

TEST_CASE("text file round trip") {
  auto dir = testing::temp_dir("util-io");
  std::string body = "line one\nline two\n";
  write_text_file(dir / "f.txt", body);
  CHECK(read_text_file(dir / "f.txt") == body);
  CHECK_THROWS_AS(read_text_file(dir / "nope.txt"), Error);
}
