#pragma once

#include <cstddef>
#include <optional>

namespace tconv {

/// Mean Earth radius in meters, shared by the evaluation metric and the
/// training loss.
inline constexpr double kEarthRadiusM = 6371000.0;

/// A WGS-84 position in degrees. Longitude comes first, matching the order
/// used by the trip CSV polylines.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

/// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine(const GeoPoint& a, const GeoPoint& b);

/// Partial derivatives of haversine(pred, target) with respect to
/// pred.lon and pred.lat (meters per degree). Zero when the points are
/// closer than `singular_radius_m`, where the derivative is undefined.
struct HaversineGrad {
  double distance_m = 0.0;
  double d_lon = 0.0;
  double d_lat = 0.0;
};
HaversineGrad haversine_with_grad(const GeoPoint& pred, const GeoPoint& target,
                                  double singular_radius_m = 1.0);

/// 1-based grid cell, row 1 being the southernmost row and column 1 the
/// westernmost column.
struct CellIndex {
  std::size_t row = 1;
  std::size_t col = 1;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Meters east/north of an origin under a local equirectangular projection.
struct Offset {
  double east_m = 0.0;
  double north_m = 0.0;
};

/// Rectangular geographic window split into rows x cols equal cells.
///
/// Cells are measured in meters on a local equirectangular projection
/// anchored at the southwest corner: longitude differences are scaled by
/// cos(origin latitude). Cells are half-open, closed on their south and
/// west edges, so every in-extent point belongs to exactly one cell.
class Grid {
 public:
  Grid(GeoPoint origin, std::size_t rows, std::size_t cols, double cell_width_m,
       double cell_height_m);

  /// Grid covering [sw, ne] with the given resolution.
  static Grid from_bounds(GeoPoint southwest, GeoPoint northeast, std::size_t rows,
                          std::size_t cols);

  const GeoPoint& origin() const { return origin_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double cell_width_m() const { return cell_width_m_; }
  double cell_height_m() const { return cell_height_m_; }

  Offset project(const GeoPoint& p) const;
  GeoPoint unproject(const Offset& o) const;

  GeoPoint southwest() const { return origin_; }
  GeoPoint northeast() const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  GeoPoint origin_;
  std::size_t rows_;
  std::size_t cols_;
  double cell_width_m_;
  double cell_height_m_;
  double meters_per_deg_lon_;
  double meters_per_deg_lat_;
};

/// Cell containing `p`, or nullopt when `p` lies outside the grid.
std::optional<CellIndex> cell_of(const GeoPoint& p, const Grid& g);

/// Geographic center of a cell. Throws std::out_of_range for indices
/// outside the grid.
GeoPoint cell_center(const Grid& g, const CellIndex& c);

/// Affine map of [lo, hi] onto [-1, 1]. Throws std::invalid_argument when
/// lo >= hi.
double norm(double x, double lo, double hi);

}  // namespace tconv
