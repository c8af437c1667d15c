#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "tconv/geo.hpp"
#include "tconv/rng.hpp"

using namespace tconv;

TEST(Haversine, IdentityIsZero) {
  const GeoPoint p{-8.6291, 41.1579};
  EXPECT_EQ(haversine(p, p), 0.0);
}

TEST(Haversine, OneDegreeOfLatitudeMatchesOracle) {
  const GeoPoint a{-8.6, 41.0}, b{-8.6, 42.0};
  const double expected = oracle::haversine(a, b);
  EXPECT_NEAR(expected, 111194.93, 0.01);  // r * pi / 180
  EXPECT_LE(std::abs(haversine(a, b) - expected) / expected, 1e-12);
}

TEST(Haversine, SymmetricToTheLastBit) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const GeoPoint a = oracle::porto_point(rng), b = oracle::porto_point(rng);
    EXPECT_EQ(haversine(a, b), haversine(b, a));
  }
}

TEST(Haversine, MatchesHighPrecisionOracleOnPortoPairs) {
  Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a = oracle::porto_point(rng), b = oracle::porto_point(rng);
    const double ref = oracle::haversine(a, b);
    if (ref > 0) worst = std::max(worst, std::abs(haversine(a, b) - ref) / ref);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Haversine, TriangleInequality) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a = oracle::porto_point(rng), b = oracle::porto_point(rng), c = oracle::porto_point(rng);
    const double ab = haversine(a, b), bc = haversine(b, c), ac = haversine(a, c);
    EXPECT_LE(ac, (ab + bc) * (1 + 1e-9));
  }
}

TEST(Haversine, GradientMatchesFiniteDifferences) {
  const GeoPoint target{-8.61, 41.15};
  const GeoPoint pred{-8.61 + 0.009, 41.15 + 0.003};  // about 1 km away
  const HaversineGrad g = haversine_with_grad(pred, target);
  EXPECT_EQ(g.distance_m, haversine(pred, target));
  const double h = 1e-7;
  const double n_lon = (haversine({pred.lon + h, pred.lat}, target) - haversine({pred.lon - h, pred.lat}, target)) / (2 * h);
  const double n_lat = (haversine({pred.lon, pred.lat + h}, target) - haversine({pred.lon, pred.lat - h}, target)) / (2 * h);
  EXPECT_LT(std::abs(g.d_lon - n_lon) / std::max(1.0, std::abs(n_lon)), 1e-4);
  EXPECT_LT(std::abs(g.d_lat - n_lat) / std::max(1.0, std::abs(n_lat)), 1e-4);
}

TEST(Haversine, GradientVanishesInsideSingularRadius) {
  const GeoPoint p{-8.6, 41.1};
  const HaversineGrad g = haversine_with_grad(p, p);
  EXPECT_EQ(g.distance_m, 0.0);
  EXPECT_EQ(g.d_lon, 0.0);
  EXPECT_EQ(g.d_lat, 0.0);
  const HaversineGrad near = haversine_with_grad({-8.6, 41.1 + 5e-6}, p);  // about 0.56 m
  EXPECT_GT(near.distance_m, 0.0);
  EXPECT_EQ(near.d_lat, 0.0);
}

TEST(GeoPoint, Validity) {
  EXPECT_TRUE(is_valid({-180, -90}));
  EXPECT_TRUE(is_valid({180, 90}));
  EXPECT_FALSE(is_valid({-8.6, 91}));
  EXPECT_FALSE(is_valid({181, 0}));
  EXPECT_FALSE(is_valid({NAN, 0}));
}

class GridTest : public ::testing::Test {
 protected:
  Grid g{{-8.70, 41.10}, 10, 10, 100.0, 150.0};
};

TEST_F(GridTest, FirstCellInterior) {
  const GeoPoint p = g.unproject({50.0, 75.0});
  EXPECT_EQ(cell_of(p, g), (CellIndex{1, 1}));
}

TEST_F(GridTest, ColumnBoundaryGoesToTheLargerIndex) {
  const GeoPoint p = g.unproject({300.0, 75.0});
  const auto c = cell_of(p, g);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->col, 4u);
  EXPECT_EQ(c->row, 1u);
}

TEST_F(GridTest, RowBoundaryGoesToTheLargerIndex) {
  const auto c = cell_of(g.unproject({50.0, 450.0}), g);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->row, 4u);
}

TEST_F(GridTest, OutsidePointsHaveNoCell) {
  EXPECT_FALSE(cell_of(g.unproject({-1.0, 10.0}), g));
  EXPECT_FALSE(cell_of(g.unproject({10.0, -1.0}), g));
  EXPECT_FALSE(cell_of(g.unproject({1000.0, 10.0}), g));  // east edge is open
  EXPECT_FALSE(cell_of(g.unproject({10.0, 1500.0}), g));
}

TEST_F(GridTest, ProjectionRoundTrip) {
  const Offset o{321.5, 987.25};
  const Offset back = g.project(g.unproject(o));
  EXPECT_NEAR(back.east_m, o.east_m, 1e-6);
  EXPECT_NEAR(back.north_m, o.north_m, 1e-6);
}

TEST_F(GridTest, CellCenterRoundTripsThroughCellOf) {
  const Grid big({-8.66, 41.12}, 30, 30, 100.0, 100.0);
  for (std::size_t r = 1; r <= 30; ++r)
    for (std::size_t c = 1; c <= 30; ++c) EXPECT_EQ(cell_of(cell_center(big, {r, c}), big), (CellIndex{r, c}));
}

TEST_F(GridTest, AdjacentCentersDifferByOneCellWidth) {
  const Offset a = g.project(cell_center(g, {1, 1}));
  const Offset b = g.project(cell_center(g, {1, 2}));
  EXPECT_NEAR(b.east_m - a.east_m, 100.0, 1e-9);
  EXPECT_NEAR(b.north_m - a.north_m, 0.0, 1e-9);
  EXPECT_NEAR(a.east_m, 50.0, 1e-9);
  EXPECT_NEAR(a.north_m, 75.0, 1e-9);
}

TEST_F(GridTest, SingleCellCenterIsWindowCenter) {
  const Grid one({-8.6, 41.1}, 1, 1, 200.0, 200.0);
  const GeoPoint c = cell_center(one, {1, 1});
  const Offset o = one.project(c);
  EXPECT_NEAR(o.east_m, 100.0, 1e-9);
  EXPECT_NEAR(o.north_m, 100.0, 1e-9);
}

TEST_F(GridTest, CellCenterRejectsOutsideIndices) {
  EXPECT_THROW(cell_center(g, {0, 1}), std::out_of_range);
  EXPECT_THROW(cell_center(g, {1, 11}), std::out_of_range);
}

TEST_F(GridTest, EveryInGridPointIsContainedInItsCell) {
  Rng rng(14);
  const GeoPoint ne = g.northeast();
  for (int i = 0; i < 5000; ++i) {
    const GeoPoint p{rng.uniform(g.origin().lon, ne.lon), rng.uniform(g.origin().lat, ne.lat)};
    const auto c = cell_of(p, g);
    ASSERT_TRUE(c);
    const Offset o = g.project(p);
    const double slack = 1e-6;
    EXPECT_GE(o.east_m, (c->col - 1) * 100.0 - slack);
    EXPECT_LT(o.east_m, c->col * 100.0 + slack);
    EXPECT_GE(o.north_m, (c->row - 1) * 150.0 - slack);
    EXPECT_LT(o.north_m, c->row * 150.0 + slack);
  }
}

TEST(Grid, FromBoundsCoversTheBox) {
  const Grid g = Grid::from_bounds({-8.74, 41.04}, {-8.50, 41.26}, 64, 64);
  const GeoPoint ne = g.northeast();
  EXPECT_NEAR(ne.lon, -8.50, 1e-9);
  EXPECT_NEAR(ne.lat, 41.26, 1e-9);
  EXPECT_EQ(cell_of({-8.74, 41.04}, g), (CellIndex{1, 1}));
  EXPECT_EQ(cell_of({-8.5000001, 41.2599999}, g), (CellIndex{64, 64}));
}

TEST(Grid, RejectsDegenerateShapes) {
  EXPECT_THROW(Grid({0, 0}, 0, 1, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(Grid({0, 0}, 1, 1, 0.0, 1.0), std::invalid_argument);
}

TEST(Norm, AffineOntoUnitInterval) {
  EXPECT_EQ(norm(5, 0, 10), 0.0);
  EXPECT_EQ(norm(0, 0, 10), -1.0);
  EXPECT_EQ(norm(10, 0, 10), 1.0);
  EXPECT_EQ(norm(7.5, 0, 10), 0.5);
  EXPECT_THROW(norm(1, 2, 2), std::invalid_argument);
  EXPECT_THROW(norm(1, 3, 2), std::invalid_argument);
}
