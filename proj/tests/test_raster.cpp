#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tconv/raster.hpp"

using namespace tconv;

namespace {

std::size_t count_value(const Tensor& t, double v) {
  std::size_t n = 0;
  for (double x : t.values()) n += x == v;
  return n;
}

LocalStackOptions window_frame(std::size_t m = 30) {
  LocalStackOptions o;
  o.m = m;
  o.reference = NormReference::window;
  return o;
}

}  // namespace

TEST(RasterizeBasic, SinglePoint) {
  const Grid g = porto_grid(64);
  const std::vector<GeoPoint> p = {{-8.61, 41.15}};
  const TrajectoryImage img = rasterize_basic(p, g);
  EXPECT_EQ(img.pixels.shape(), (Shape{1, 64, 64}));
  EXPECT_EQ(count_value(img.pixels, 1.0), 1u);
  EXPECT_EQ(count_value(img.pixels, 0.0), 64u * 64 - 1);
  const CellIndex c = *cell_of(p[0], g);
  EXPECT_EQ(img.pixels.at(0, c.row - 1, c.col - 1), 1.0);
}

TEST(RasterizeBasic, LastPointWinsItsCell) {
  const Grid g = porto_grid(64);
  const std::vector<GeoPoint> p = {{-8.61, 41.15}, {-8.61 + 1e-5, 41.15 + 1e-5}};
  ASSERT_EQ(cell_of(p[0], g), cell_of(p[1], g));
  const TrajectoryImage img = rasterize_basic(p, g);
  EXPECT_EQ(count_value(img.pixels, 1.0), 1u);
  EXPECT_EQ(count_value(img.pixels, 0.5), 0u);
}

TEST(RasterizeBasic, LShapedTrajectory) {
  const Grid g({-8.70, 41.10}, 10, 10, 100, 100);
  std::vector<GeoPoint> p;
  for (auto [r, c] : std::vector<std::pair<int, int>>{{2, 2}, {3, 2}, {4, 2}, {4, 3}, {4, 4}})
    p.push_back(cell_center(g, {static_cast<std::size_t>(r), static_cast<std::size_t>(c)}));
  const TrajectoryImage img = rasterize_basic(p, g);
  EXPECT_EQ(count_value(img.pixels, 0.5), 4u);
  EXPECT_EQ(count_value(img.pixels, 1.0), 1u);
  EXPECT_EQ(count_value(img.pixels, 0.0), 95u);
  EXPECT_EQ(img.pixels.at(0, 3, 3), 1.0);
  EXPECT_EQ(img.pixels.at(0, 1, 1), 0.5);
}

TEST(RasterizeBasic, OutsidePointsIgnoredAndEmptyRejected) {
  const Grid g({-8.70, 41.10}, 10, 10, 100, 100);
  const std::vector<GeoPoint> p = {{-9.5, 41.1}, cell_center(g, {1, 1}), {-8.0, 42.0}};
  const TrajectoryImage img = rasterize_basic(p, g);
  EXPECT_EQ(count_value(img.pixels, 1.0), 0u);  // last point is off-grid
  EXPECT_EQ(count_value(img.pixels, 0.5), 1u);
  EXPECT_THROW(rasterize_basic(std::vector<GeoPoint>{}, g), std::invalid_argument);
}

TEST(RasterizeBasic, OrderInsensitiveExceptForLastPoint) {
  Rng rng(31);
  const Grid g = porto_grid(32);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GeoPoint> p;
    for (int i = 0; i < 20; ++i) p.push_back(oracle::porto_point(rng));
    const Tensor a = rasterize_basic(p, g).pixels;
    std::vector<GeoPoint> q(p.begin(), p.end() - 1);
    shuffle(q, rng);
    q.push_back(p.back());
    EXPECT_EQ(rasterize_basic(q, g).pixels, a);
    EXPECT_EQ(rasterize_basic(p, g).pixels, a);  // idempotent
  }
}

TEST(LocalWindow, GeometryAndCentering) {
  const GeoPoint anchor{-8.61, 41.15};
  const LocalWindow w = make_local_window(anchor, 30, 100);
  EXPECT_EQ(w.grid.rows(), 30u);
  EXPECT_EQ(w.grid.cell_width_m(), 100.0);
  const Offset ne = w.grid.project(w.grid.northeast());
  EXPECT_NEAR(ne.east_m, 3000.0, 1e-6);
  EXPECT_NEAR(ne.north_m, 3000.0, 1e-6);
  EXPECT_EQ(cell_of(anchor, w.grid), (CellIndex{15, 15}));
  const Offset a = w.grid.project(anchor);
  EXPECT_NEAR(a.east_m, 1450.0, 1e-6);
  EXPECT_NEAR(a.north_m, 1450.0, 1e-6);
}

TEST(LocalWindow, SingleCellAndOddSizes) {
  const GeoPoint anchor{-8.61, 41.15};
  EXPECT_EQ(cell_of(anchor, make_local_window(anchor, 1, 50).grid), (CellIndex{1, 1}));
  EXPECT_EQ(cell_of(anchor, make_local_window(anchor, 7, 50).grid), (CellIndex{4, 4}));
  EXPECT_THROW(make_local_window(anchor, 0, 50), std::invalid_argument);
  EXPECT_THROW(make_local_window(anchor, 5, 0), std::invalid_argument);
}

TEST(RasterizeLocal, AnchorPointNormalizesNearZeroInTheWindowFrame) {
  const GeoPoint anchor{-8.61, 41.15};
  for (std::size_t m : {30u, 31u}) {
    const LocalWindow w = make_local_window(anchor, m, 100);
    const std::vector<GeoPoint> p = {anchor};
    auto [lat, lon] = rasterize_local(p, w, NormFrame::of_grid(w.grid));
    const std::size_t c = (m + 1) / 2 - 1;
    const double tol = m % 2 ? 1e-9 : 1.0 / static_cast<double>(m) + 1e-9;  // even M puts the anchor half a cell off
    EXPECT_NEAR(lat.pixels.at(0, c, c), 0.0, tol);
    EXPECT_NEAR(lon.pixels.at(0, c, c), 0.0, tol);
  }
}

TEST(RasterizeLocal, NorthEdgeCellIsNearPlusOne) {
  const LocalWindow w = make_local_window({-8.61, 41.15}, 30, 100);
  const std::vector<GeoPoint> p = {cell_center(w.grid, {30, 15})};
  auto [lat, lon] = rasterize_local(p, w, NormFrame::of_grid(w.grid));
  EXPECT_NEAR(lat.pixels.at(0, 29, 14), 1.0 - 1.0 / 30, 1e-9);
}

TEST(RasterizeLocal, DiagonalTrackMatchesCellCenterArithmetic) {
  const LocalWindow w = make_local_window({-8.61, 41.15}, 30, 100);
  const NormFrame f = NormFrame::of_grid(w.grid);
  std::vector<GeoPoint> p;
  for (std::size_t i : {10u, 11u, 12u}) p.push_back(w.grid.unproject({(i - 0.3) * 100, (i - 0.7) * 100}));
  auto [lat, lon] = rasterize_local(p, w, f);
  std::size_t nonzero = 0;
  for (double v : lat.pixels.values()) nonzero += v != 0;
  EXPECT_EQ(nonzero, 3u);
  const GeoPoint ne = w.grid.northeast(), sw = w.grid.southwest();
  for (std::size_t i : {10u, 11u, 12u}) {
    // direct arithmetic: center of cell i is (i - 0.5) cells from the origin on each axis
    const GeoPoint center = w.grid.unproject({(i - 0.5) * 100, (i - 0.5) * 100});
    const double e_lat = 2 * (center.lat - sw.lat) / (ne.lat - sw.lat) - 1;
    const double e_lon = 2 * (center.lon - sw.lon) / (ne.lon - sw.lon) - 1;
    EXPECT_NEAR(lat.pixels.at(0, i - 1, i - 1), e_lat, 1e-9);
    EXPECT_NEAR(lon.pixels.at(0, i - 1, i - 1), e_lon, 1e-9);
  }
}

TEST(RasterizeLocal, EmptyWindowIsAllZero) {
  const LocalWindow w = make_local_window({-8.61, 41.15}, 10, 100);
  const std::vector<GeoPoint> p = {{-8.5, 41.25}};
  auto [lat, lon] = rasterize_local(p, w, NormFrame::of_grid(w.grid));
  EXPECT_EQ(count_value(lat.pixels, 0.0), 100u);
  EXPECT_EQ(count_value(lon.pixels, 0.0), 100u);
}

TEST(RasterizeLocal, NonzeroPixelsAreVisitedCellsAndBounded) {
  Rng rng(32);
  for (NormReference ref : {NormReference::window, NormReference::city}) {
    LocalStackOptions o = window_frame();
    o.reference = ref;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<GeoPoint> p = {oracle::porto_point(rng)};
      for (int i = 0; i < 30; ++i) p.push_back({p.back().lon + rng.uniform(-0.002, 0.002), p.back().lat + rng.uniform(-0.002, 0.002)});
      const LocalStack s = stack_le(p, o);
      const LocalWindow* windows[2] = {&s.start, &s.end};
      for (std::size_t ch = 0; ch < 4; ++ch) {
        const Grid& g = windows[ch / 2]->grid;
        std::set<std::pair<std::size_t, std::size_t>> visited;
        for (const auto& q : p)
          if (auto c = cell_of(q, g)) visited.insert({c->row - 1, c->col - 1});
        for (std::size_t r = 0; r < o.m; ++r)
          for (std::size_t c = 0; c < o.m; ++c) {
            const double v = s.pixels.at(ch, r, c);
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
            if (v != 0.0) {
              EXPECT_TRUE(visited.count({r, c}));
            }
          }
      }
    }
  }
}

TEST(StackLe, ShapeAndSinglePoint) {
  const std::vector<GeoPoint> p = {{-8.61, 41.15}};
  const LocalStack s = stack_le(p, window_frame());
  EXPECT_EQ(s.pixels.shape(), (Shape{4, 30, 30}));
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 0; c < 30; ++c) {
      EXPECT_EQ(s.pixels.at(0, r, c), s.pixels.at(2, r, c));
      EXPECT_EQ(s.pixels.at(1, r, c), s.pixels.at(3, r, c));
    }
}

TEST(StackLe, ReversingThePrefixSwapsTheWindows) {
  Rng rng(33);
  std::vector<GeoPoint> p = {{-8.61, 41.15}};
  for (int i = 0; i < 40; ++i) p.push_back({p.back().lon + rng.uniform(-0.001, 0.003), p.back().lat + rng.uniform(-0.001, 0.003)});
  for (NormReference ref : {NormReference::window, NormReference::city}) {
    LocalStackOptions o = window_frame();
    o.reference = ref;
    const LocalStack a = stack_le(p, o);
    std::vector<GeoPoint> q(p.rbegin(), p.rend());
    const LocalStack b = stack_le(q, o);
    for (std::size_t i = 0; i < 30 * 30; ++i) {
      EXPECT_EQ(a.pixels[i], b.pixels[2 * 900 + i]);
      EXPECT_EQ(a.pixels[900 + i], b.pixels[3 * 900 + i]);
    }
  }
}

TEST(StackLe, CityFrameCarriesAbsolutePosition) {
  // The same local shape in two places gives different city-frame pixels
  // but identical window-frame pixels.
  const std::vector<GeoPoint> a = {{-8.62, 41.14}, {-8.6195, 41.1405}};
  const std::vector<GeoPoint> b = {{-8.58, 41.18}, {-8.5795, 41.1805}};
  LocalStackOptions city;
  EXPECT_NE(stack_le(a, city).pixels, stack_le(b, city).pixels);
  const Tensor wa = stack_le(a, window_frame()).pixels, wb = stack_le(b, window_frame()).pixels;
  double worst = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    EXPECT_EQ(wa[i] == 0.0, wb[i] == 0.0);
    worst = std::max(worst, std::abs(wa[i] - wb[i]));
  }
  EXPECT_LT(worst, 1e-3);  // only the cos(latitude) scale differs
}

TEST(Export, TextGridIsNorthFirst) {
  Tensor t({1, 2, 3});
  t.at(0, 1, 0) = 1.0;  // north-west
  t.at(0, 0, 2) = 0.5;  // south-east
  std::ostringstream out;
  write_text_grid(out, t);
  EXPECT_EQ(out.str(), "1.0000 0.0000 0.0000\n0.0000 0.0000 0.5000\n");
}

TEST(Export, PgmHeaderAndScaling) {
  Tensor t({1, 2, 2});
  t.at(0, 1, 0) = 1.0;
  t.at(0, 0, 1) = 0.5;
  std::ostringstream out;
  write_pgm(out, t, 0, 0.0, 1.0);
  const std::string s = out.str();
  ASSERT_EQ(s.substr(0, 11), "P5\n2 2\n255\n");
  const std::string body = s.substr(11);
  ASSERT_EQ(body.size(), 4u);
  EXPECT_EQ(static_cast<unsigned char>(body[0]), 255);
  EXPECT_EQ(static_cast<unsigned char>(body[1]), 0);
  EXPECT_EQ(static_cast<unsigned char>(body[2]), 0);
  EXPECT_EQ(static_cast<unsigned char>(body[3]), 128);
  EXPECT_THROW(write_pgm(out, t, 0, 1.0, 1.0), std::invalid_argument);
}
