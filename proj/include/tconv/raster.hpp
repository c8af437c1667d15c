#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "tconv/geo.hpp"
#include "tconv/tensor.hpp"

namespace tconv {

/// Image over a grid. Tensor row r holds grid row r + 1 (south at row 0).
struct TrajectoryImage {
  Grid grid;
  Tensor pixels;  // channels x rows x cols

  std::size_t channels() const { return pixels.dim(0); }
};

/// Default global window for the Basic image: the Porto area.
inline constexpr GeoPoint kPortoSouthwest{-8.74, 41.04};
inline constexpr GeoPoint kPortoNortheast{-8.50, 41.26};

Grid porto_grid(std::size_t m = 64);

/// End point = 1, other visited cells = 0.5, unvisited = 0. Points outside
/// the grid are ignored. Throws std::invalid_argument on an empty prefix.
TrajectoryImage rasterize_basic(std::span<const GeoPoint> prefix, const Grid& g);

/// M x M window of W-meter cells whose central cell, (ceil(M/2), ceil(M/2)),
/// has the anchor at its center.
struct LocalWindow {
  GeoPoint anchor;
  Grid grid;
};
LocalWindow make_local_window(const GeoPoint& anchor, std::size_t m, double cell_width_m);

/// Longitude/latitude bounds that Norm maps onto [-1, 1].
struct NormFrame {
  double lon_lo, lon_hi;
  double lat_lo, lat_hi;

  static NormFrame of_grid(const Grid& g);
};

/// Which bounds the local images normalize cell centers against.
enum class NormReference {
  city,    // a fixed city-wide frame: pixel values carry absolute position
  window,  // the window's own extent: pixel values carry only position within the window
};

/// Latitude and longitude images of the prefix points inside the window.
/// A visited cell holds Norm of its center coordinate (clamped to [-1, 1]);
/// unvisited cells hold 0.
std::pair<TrajectoryImage, TrajectoryImage> rasterize_local(std::span<const GeoPoint> prefix,
                                                            const LocalWindow& w, const NormFrame& frame);

struct LocalStackOptions {
  std::size_t m = 30;
  double cell_width_m = 100.0;
  NormReference reference = NormReference::city;
  NormFrame city_frame{kPortoSouthwest.lon, kPortoNortheast.lon, kPortoSouthwest.lat, kPortoNortheast.lat};
};

/// Four channels [start lat, start lon, end lat, end lon], windows anchored
/// at the first and last prefix points.
struct LocalStack {
  LocalWindow start;
  LocalWindow end;
  Tensor pixels;  // 4 x M x M
};
LocalStack stack_le(std::span<const GeoPoint> prefix, const LocalStackOptions& options = {});

/// Channel as whitespace-separated rows, north first.
void write_text_grid(std::ostream& out, const Tensor& image, std::size_t channel = 0);
/// Binary 8-bit PGM of one channel, north first, mapping [lo, hi] to [0, 255].
void write_pgm(std::ostream& out, const Tensor& image, std::size_t channel, double lo, double hi);

}  // namespace tconv
