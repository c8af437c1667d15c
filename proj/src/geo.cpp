#include "tconv/geo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tconv {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kMetersPerDegLat = kEarthRadiusM * kDegToRad;

// Boundary points produced by projection arithmetic land a few ulps off
// integral cell coordinates; snap them so the low-edge tie-break holds.
constexpr double kEdgeSnap = 1e-9;

std::ptrdiff_t cell_coordinate(double offset_m, double cell_size_m) {
  const double q = offset_m / cell_size_m;
  const double nearest = std::round(q);
  const double snapped = std::abs(q - nearest) < kEdgeSnap ? nearest : q;
  return static_cast<std::ptrdiff_t>(std::floor(snapped));
}

}  // namespace

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine(const GeoPoint& a, const GeoPoint& b) {
  const double phi_a = a.lat * kDegToRad;
  const double phi_b = b.lat * kDegToRad;
  const double s_lat = std::sin((phi_a - phi_b) / 2.0);
  const double s_lon = std::sin((a.lon - b.lon) * kDegToRad / 2.0);
  const double h = s_lat * s_lat + std::cos(phi_a) * std::cos(phi_b) * (s_lon * s_lon);
  return 2.0 * kEarthRadiusM * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

HaversineGrad haversine_with_grad(const GeoPoint& pred, const GeoPoint& target,
                                  double singular_radius_m) {
  HaversineGrad out;
  const double phi_p = pred.lat * kDegToRad;
  const double phi_t = target.lat * kDegToRad;
  const double half_dphi = (phi_p - phi_t) / 2.0;
  const double half_dlam = (pred.lon - target.lon) * kDegToRad / 2.0;
  const double s_lat = std::sin(half_dphi);
  const double s_lon = std::sin(half_dlam);
  const double cos_p = std::cos(phi_p);
  const double cos_t = std::cos(phi_t);
  const double h = s_lat * s_lat + cos_p * cos_t * (s_lon * s_lon);
  out.distance_m = 2.0 * kEarthRadiusM * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
  if (out.distance_m < singular_radius_m) return out;

  // d = 2r atan(sqrt(h / (1 - h)))  =>  dd/dh = r / sqrt(h (1 - h))
  const double dd_dh = kEarthRadiusM / std::sqrt(h * (1.0 - h));
  const double dh_dphi = s_lat * std::cos(half_dphi) - std::sin(phi_p) * cos_t * (s_lon * s_lon);
  const double dh_dlam = cos_p * cos_t * s_lon * std::cos(half_dlam);
  out.d_lat = dd_dh * dh_dphi * kDegToRad;
  out.d_lon = dd_dh * dh_dlam * kDegToRad;
  return out;
}

Grid::Grid(GeoPoint origin, std::size_t rows, std::size_t cols, double cell_width_m,
           double cell_height_m)
    : origin_(origin),
      rows_(rows),
      cols_(cols),
      cell_width_m_(cell_width_m),
      cell_height_m_(cell_height_m),
      meters_per_deg_lon_(kMetersPerDegLat * std::cos(origin.lat * kDegToRad)),
      meters_per_deg_lat_(kMetersPerDegLat) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("grid needs at least one row and column");
  if (!(cell_width_m > 0.0) || !(cell_height_m > 0.0))
    throw std::invalid_argument("grid cell size must be positive");
  if (!is_valid(origin)) throw std::invalid_argument("grid origin is not a valid position");
}

Grid Grid::from_bounds(GeoPoint southwest, GeoPoint northeast, std::size_t rows, std::size_t cols) {
  if (!(northeast.lon > southwest.lon) || !(northeast.lat > southwest.lat))
    throw std::invalid_argument("grid bounds must have northeast strictly above southwest");
  if (rows == 0 || cols == 0) throw std::invalid_argument("grid needs at least one row and column");
  const double width_m =
      (northeast.lon - southwest.lon) * kMetersPerDegLat * std::cos(southwest.lat * kDegToRad);
  const double height_m = (northeast.lat - southwest.lat) * kMetersPerDegLat;
  return Grid(southwest, rows, cols, width_m / static_cast<double>(cols),
              height_m / static_cast<double>(rows));
}

Offset Grid::project(const GeoPoint& p) const {
  return {(p.lon - origin_.lon) * meters_per_deg_lon_, (p.lat - origin_.lat) * meters_per_deg_lat_};
}

GeoPoint Grid::unproject(const Offset& o) const {
  return {origin_.lon + o.east_m / meters_per_deg_lon_, origin_.lat + o.north_m / meters_per_deg_lat_};
}

GeoPoint Grid::northeast() const {
  return unproject({cell_width_m_ * static_cast<double>(cols_),
                    cell_height_m_ * static_cast<double>(rows_)});
}

std::optional<CellIndex> cell_of(const GeoPoint& p, const Grid& g) {
  const Offset o = g.project(p);
  const std::ptrdiff_t col = cell_coordinate(o.east_m, g.cell_width_m());
  const std::ptrdiff_t row = cell_coordinate(o.north_m, g.cell_height_m());
  if (col < 0 || row < 0 || col >= static_cast<std::ptrdiff_t>(g.cols()) ||
      row >= static_cast<std::ptrdiff_t>(g.rows()))
    return std::nullopt;
  return CellIndex{static_cast<std::size_t>(row) + 1, static_cast<std::size_t>(col) + 1};
}

GeoPoint cell_center(const Grid& g, const CellIndex& c) {
  if (c.row < 1 || c.row > g.rows() || c.col < 1 || c.col > g.cols())
    throw std::out_of_range("cell index outside grid");
  return g.unproject({(static_cast<double>(c.col) - 0.5) * g.cell_width_m(),
                      (static_cast<double>(c.row) - 0.5) * g.cell_height_m()});
}

double norm(double x, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("norm: degenerate range");
  return 2.0 * (x - lo) / (hi - lo) - 1.0;
}

}  // namespace tconv
