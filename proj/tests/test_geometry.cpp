#include <gtest/gtest.h>

#include "support.hpp"

namespace mfcrl {
namespace {

using testing::region;

TEST(Geometry, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(2 * kPi + 0.25), 0.25, 1e-12);
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double a = (uniform01(rng) - 0.5) * 200.0;
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
    EXPECT_NEAR(std::remainder(a - w, kTwoPi), 0.0, 1e-9);
  }
}

TEST(Geometry, MembershipIsClosed) {
  const auto r = region(1, 2, 1.5, 0.3, 0.2);
  EXPECT_TRUE(r.contains({2.5, 2, 0.3}));   // on the disc boundary
  EXPECT_TRUE(r.contains({1, 2, 0.5}));     // on the heading boundary
  EXPECT_FALSE(r.contains({2.5001, 2, 0.3}));
  EXPECT_FALSE(r.contains({1, 2, 0.51}));
}

TEST(Geometry, HeadingIntervalsWrap) {
  const auto outer = region(0, 0, 2, kPi, 0.5);
  const auto inner = region(0, 0, 1, -kPi + 0.1, 0.3);
  EXPECT_TRUE(region_contains(inner, outer));
  EXPECT_FALSE(regions_disjoint(inner, outer));
  const auto away = region(0, 0, 1, 0, 0.5);
  EXPECT_TRUE(regions_disjoint(away, outer));
}

TEST(Geometry, MalformedRegionRejected) {
  EXPECT_THROW(region(0, 0, 1, 0, 0).validate(), MalformedRegion);
  EXPECT_THROW(region(0, 0, 0, 0, 1).validate(), MalformedRegion);
  EXPECT_THROW(region(0, 0, 1, 0, 4).validate(), MalformedRegion);
  EXPECT_NO_THROW(region(0, 0, 1, 0, kPi).validate());
}

}  // namespace
}  // namespace mfcrl
