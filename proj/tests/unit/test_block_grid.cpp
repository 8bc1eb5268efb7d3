#include <doctest.h>

#include <shareprefill/block_grid.hpp>
#include <shareprefill/errors.hpp>

using namespace shareprefill;

TEST_CASE("block counts round up")
{
  CHECK(block_count(128, 64) == 2);
  CHECK(block_count(129, 64) == 3);
  CHECK(block_count(1, 64) == 1);
  CHECK(causal_block_total(4) == 10);
  CHECK(causal_block_total(1) == 1);
}

TEST_CASE("mask factories")
{
  const auto e = BlockMask::empty(256, 64);
  CHECK(e.query_blocks() == 4);
  CHECK(e.popcount() == 0);

  const auto c = BlockMask::full_causal(256, 64);
  CHECK(c.popcount() == 10);
  CHECK(c.causal_popcount() == 10);
  CHECK(c.causal_density() == doctest::Approx(1.0));
  CHECK_FALSE(c.get(0, 1));

  const auto f = BlockMask::full(256, 64);
  CHECK(f.popcount() == 16);
  CHECK(f.causal_popcount() == 10);
  CHECK(f.reachable_popcount(false) == 16);
  CHECK(f.reachable_popcount(true) == 10);
}

TEST_CASE("ragged grid")
{
  BlockMask m(200, 64);
  CHECK(m.query_blocks() == 4);
  m.set(3, 0);
  m.set(3, 3);
  CHECK(m.causal_popcount() == 2);
  CHECK(m.causal_density() == doctest::Approx(0.2));
  m.set(3, 3, false);
  CHECK(m.popcount() == 1);
}

TEST_CASE("shape checks and equality")
{
  CHECK_THROWS_AS(BlockMask(0, 64), InvalidInput);
  CHECK_THROWS_AS(BlockMask(64, 0), InvalidInput);
  CHECK_THROWS_AS(BlockScoreMap(0, 64), InvalidInput);
  const auto a = BlockMask::full_causal(128, 64);
  const auto b = BlockMask::full_causal(128, 32);
  CHECK_FALSE(a.same_shape(b));
  CHECK(a == BlockMask::full_causal(128, 64));
  CHECK_FALSE(a == BlockMask::empty(128, 64));
}

TEST_CASE("score map starts skipped")
{
  BlockScoreMap s(192, 64);
  CHECK(s.query_blocks() == 3);
  CHECK_FALSE(s.computed(0, 0));
  CHECK_FALSE(s.fully_computed(true));
  for (std::size_t i = 0; i < 3; ++i)
  {
    for (std::size_t j = 0; j <= i; ++j)
    {
      s.set(i, j, 0.5);
    }
  }
  CHECK(s.fully_computed(true));
  CHECK_FALSE(s.fully_computed(false));
  s.set(2, 1, -1e300);
  CHECK(s.computed(2, 1));
}
