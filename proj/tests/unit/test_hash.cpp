#include <doctest.h>

#include "triage/hash.hpp"
#include "triage/random.hpp"

using namespace triage;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("field separators keep boundaries distinct") {
  CHECK(StableHasher{}.field("ab").field("c").digest() != StableHasher{}.field("a").field("bc").digest());
  CHECK(StableHasher{}.field(std::int64_t{12}).digest() == StableHasher{}.field("12").digest());
}

TEST_CASE("hex round trip") {
  CHECK(to_hex(0) == "0000000000000000");
  CHECK(to_hex(0xdeadbeefULL) == "00000000deadbeef");
  for (std::uint64_t v : {0ULL, 1ULL, 0xffffffffffffffffULL, 0x0123456789abcdefULL}) {
    CHECK(parse_hex(to_hex(v)) == v);
  }
  CHECK_FALSE(parse_hex("xyz").has_value());
  CHECK_FALSE(parse_hex("").has_value());
  CHECK_FALSE(parse_hex("00000000000000000").has_value());
}

TEST_CASE("combine_seed separates streams") {
  CHECK(combine_seed(1, 2) != combine_seed(2, 1));
  CHECK(combine_seed(7, 0) == combine_seed(7, 0));
}

TEST_CASE("rng helpers stay in range and are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
    const auto k = a.below(7);
    CHECK(k < 7);
    CHECK(k == b.below(7));
  }
  std::vector<int> v{1, 2, 3, 4, 5, 6};
  Rng c(3);
  c.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6});
}
