#include "doctest.h"
#include "oracles.hpp"
#include "tseg/postprocess.hpp"

using namespace tseg;

namespace {

bool subset(const BinaryMask& a, const BinaryMask& b) {
  return ((a.data() != 0) <= (b.data() != 0)).all();
}

BinaryMask transpose(const BinaryMask& m) { return BinaryMask(Plane<std::uint8_t>(m.data().transpose())); }

BinaryMask square_with_hole(int size, int hole) {
  Plane<std::uint8_t> d = Plane<std::uint8_t>::Zero(size + 4, size + 4);
  d.block(2, 2, size, size) = 1;
  const int off = 2 + (size - hole) / 2;
  d.block(off, off, hole, hole) = 0;
  return BinaryMask(d);
}

}  // namespace

TEST_CASE("diagonal neighbours are separate components") {
  Plane<std::uint8_t> d = Plane<std::uint8_t>::Zero(2, 2);
  d(0, 0) = d(1, 1) = 1;
  const InstanceMask cc = connected_components(BinaryMask(d));
  CHECK(cc.count() == 2);
  CHECK(cc(0, 0) == 1);
  CHECK(cc(1, 1) == 2);
}

TEST_CASE("components agree with the union-find oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const long h = uniform_int(rng, 1, 32), w = uniform_int(rng, 1, 32);
    const BinaryMask m = oracle::random_binary(rng, h, w, uniform(rng, 0.1, 0.8));
    const InstanceMask cc = connected_components(m);
    const Plane<std::int32_t> ref = oracle::components(m);
    REQUIRE(oracle::same_partition(cc.labels(), ref));
    // Same first-encounter numbering, not only the same partition.
    CHECK((cc.labels() == ref).all());
  }
}

TEST_CASE("remove_small keeps components of exactly gamma pixels") {
  Plane<std::uint8_t> d = Plane<std::uint8_t>::Zero(40, 40);
  d.block(0, 0, 10, 10) = 1;  // 100 pixels
  d.block(20, 0, 9, 11) = 1;  // 99 pixels
  d(20, 11) = 0;
  d.block(20, 20, 9, 11) = 1;
  d(28, 30) = 0;              // 98 pixels
  const InstanceMask cc = connected_components(BinaryMask(d));
  REQUIRE(cc.count() == 3);
  const InstanceMask kept = remove_small(cc, 100);
  CHECK(kept.count() == 1);
  CHECK(kept.binarize().count() == 100);
  CHECK(kept(0, 0) == 1);
  CHECK(remove_small(cc, 99).count() == 2);
  CHECK(remove_small(cc, 101).count() == 0);
}

TEST_CASE("remove_small with gamma 0 or 1 is the identity") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const InstanceMask cc = connected_components(oracle::random_binary(rng, 20, 20, 0.4));
    CHECK(remove_small(cc, 0) == cc);
    CHECK(remove_small(cc, 1) == cc);
  }
  CHECK_THROWS_AS(remove_small(InstanceMask(4, 4), -1), Error);
}

TEST_CASE("single-pixel holes fill, 2x2 holes stay") {
  const BinaryMask one = square_with_hole(7, 1);
  CHECK(fill_holes(one).count() == 49);
  const BinaryMask two = square_with_hole(8, 2);
  CHECK(fill_holes(two) == two);
  CHECK(fill_holes_flood(two).count() == 64);
}

TEST_CASE("fill_holes leaves border background alone") {
  Plane<std::uint8_t> d = Plane<std::uint8_t>::Ones(3, 3);
  d(0, 1) = 0;
  CHECK(fill_holes(BinaryMask(d)) == BinaryMask(d));
}

TEST_CASE("salt noise below gamma is removed") {
  Rng rng(3);
  Plane<std::uint8_t> d = Plane<std::uint8_t>::Zero(64, 64);
  d.block(10, 10, 20, 20) = 1;
  int salt = 0;
  while (salt < 50) {
    const long y = uniform_int(rng, 0, 31) * 2, x = uniform_int(rng, 0, 31) * 2;
    if (y >= 8 && y < 32 && x >= 8 && x < 32) continue;
    if (d(y, x)) continue;
    d(y, x) = 1;
    ++salt;
  }
  const InstanceMask out = postprocess(BinaryMask(d), PostprocessConfig{100, false});
  CHECK(out.count() == 1);
  CHECK(out.binarize().count() == 400);
}

TEST_CASE("postprocess on probabilities thresholds strictly above one half") {
  Plane<float> p = Plane<float>::Zero(4, 4);
  p.block(0, 0, 2, 2) = 0.5f;
  p.block(2, 2, 2, 2) = 0.51f;
  const InstanceMask out = postprocess(GrayImage(p), PostprocessConfig{1, false});
  CHECK(out.count() == 1);
  CHECK(out(3, 3) == 1);
  CHECK(out(0, 0) == 0);
}

TEST_CASE("fill_holes is extensive, idempotent and monotone") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const long h = uniform_int(rng, 1, 32), w = uniform_int(rng, 1, 32);
    const BinaryMask a = oracle::random_binary(rng, h, w, uniform(rng, 0.3, 0.95));
    // b is a superset of a.
    Plane<std::uint8_t> bd = a.data();
    for (long i = 0; i < bd.size(); ++i) {
      if (uniform01(rng) < 0.1) bd.data()[i] = 1;
    }
    const BinaryMask b(bd);
    const BinaryMask fa = fill_holes(a);
    REQUIRE(subset(a, fa));
    REQUIRE(fill_holes(fa) == fa);
    REQUIRE(subset(fa, fill_holes(b)));

    const BinaryMask ga = fill_holes_flood(a);
    REQUIRE(subset(fa, ga));
    REQUIRE(fill_holes_flood(ga) == ga);
    REQUIRE(subset(ga, fill_holes_flood(b)));
  }
}

TEST_CASE("postprocess is idempotent and commutes with transposition") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const long h = uniform_int(rng, 4, 32), w = uniform_int(rng, 4, 32);
    const BinaryMask m = oracle::random_binary(rng, h, w, uniform(rng, 0.4, 0.9));
    for (bool flood : {false, true}) {
      const PostprocessConfig cfg{static_cast<int>(uniform_int(rng, 0, 20)), flood};
      const InstanceMask once = postprocess(m, cfg);
      CHECK(postprocess(once.binarize(), cfg) == once);
      CHECK(postprocess(transpose(m), cfg).binarize() == transpose(once.binarize()));
    }
  }
}
