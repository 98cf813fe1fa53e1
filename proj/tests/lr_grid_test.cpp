#include <gtest/gtest.h>

#include "hpprop/lr_grid.hpp"

using hpprop::LrGridPoint;

TEST(LrGrid, NeighboursRollOverDecades) {
  EXPECT_EQ(LrGridPoint::parse("9e-6").next().to_string(), "1e-5");
  EXPECT_EQ(LrGridPoint::parse("1e-5").prev().to_string(), "9e-6");
  EXPECT_EQ(LrGridPoint::parse("8e-7").next().next().next().to_string(), "2e-6");
  EXPECT_LT(LrGridPoint::parse("9e-7"), LrGridPoint::parse("1e-6"));
}

TEST(LrGrid, ParseForms) {
  EXPECT_EQ(LrGridPoint::parse("5e-06"), LrGridPoint(5, -6));
  EXPECT_EQ(LrGridPoint::parse("0.000005"), LrGridPoint(5, -6));
  EXPECT_EQ(LrGridPoint::parse("0.01").to_string(), "1e-2");
  EXPECT_THROW(LrGridPoint::parse("abc"), std::invalid_argument);
  EXPECT_THROW(LrGridPoint::parse("-1e-5"), std::invalid_argument);
  EXPECT_THROW(LrGridPoint(0, 1), std::invalid_argument);
}

TEST(LrGrid, SnapNearestTiesLower) {
  EXPECT_EQ(LrGridPoint::snap(2.5e-4).to_string(), "2e-4");
  EXPECT_EQ(LrGridPoint::snap(2.6e-4).to_string(), "3e-4");
  EXPECT_EQ(LrGridPoint::snap(9.4e-6).to_string(), "9e-6");
  EXPECT_EQ(LrGridPoint::snap(9.6e-6).to_string(), "1e-5");
  EXPECT_EQ(LrGridPoint::snap(5e-5 / 0.02).to_string(), "2e-3");
  EXPECT_EQ(LrGridPoint::snap(5e-5 * 0.2).to_string(), "1e-5");
  EXPECT_EQ(LrGridPoint::snap(5e-5 * 0.02).to_string(), "1e-6");
}

TEST(LrGrid, IndexIsDenseAndValueRoundTrips) {
  for (long i = -80; i < 10; ++i) {
    const auto p = LrGridPoint::from_index(i);
    EXPECT_EQ(p.index(), i);
    EXPECT_EQ(LrGridPoint::snap(p.value()), p);
    EXPECT_EQ(LrGridPoint::parse(p.to_string()), p);
    EXPECT_LT(p.value(), p.next().value());
  }
}
