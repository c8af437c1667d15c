#include "tconv/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace tconv {
namespace {

constexpr double kMetersPerDegLat = kEarthRadiusM * std::numbers::pi / 180.0;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Grid porto_grid(std::size_t m) { return Grid::from_bounds(kPortoSouthwest, kPortoNortheast, m, m); }

TrajectoryImage rasterize_basic(std::span<const GeoPoint> prefix, const Grid& g) {
  if (prefix.empty()) throw std::invalid_argument("rasterize_basic: empty prefix");
  TrajectoryImage img{g, Tensor({1, g.rows(), g.cols()})};
  for (std::size_t i = 0; i + 1 < prefix.size(); ++i)
    if (auto c = cell_of(prefix[i], g)) img.pixels.at(0, c->row - 1, c->col - 1) = 0.5;
  if (auto c = cell_of(prefix.back(), g)) img.pixels.at(0, c->row - 1, c->col - 1) = 1.0;
  return img;
}

LocalWindow make_local_window(const GeoPoint& anchor, std::size_t m, double cell_width_m) {
  if (m == 0) throw std::invalid_argument("local window needs M >= 1");
  if (!(cell_width_m > 0.0)) throw std::invalid_argument("local window needs W > 0");
  const double center = static_cast<double>((m + 1) / 2) - 0.5;  // in cells from the origin
  GeoPoint origin;
  origin.lat = anchor.lat - center * cell_width_m / kMetersPerDegLat;
  const double per_deg_lon = kMetersPerDegLat * std::cos(origin.lat * std::numbers::pi / 180.0);
  origin.lon = anchor.lon - center * cell_width_m / per_deg_lon;
  return {anchor, Grid(origin, m, m, cell_width_m, cell_width_m)};
}

NormFrame NormFrame::of_grid(const Grid& g) {
  const GeoPoint sw = g.southwest();
  const GeoPoint ne = g.northeast();
  return {sw.lon, ne.lon, sw.lat, ne.lat};
}

std::pair<TrajectoryImage, TrajectoryImage> rasterize_local(std::span<const GeoPoint> prefix,
                                                            const LocalWindow& w, const NormFrame& frame) {
  const Grid& g = w.grid;
  TrajectoryImage lat_img{g, Tensor({1, g.rows(), g.cols()})};
  TrajectoryImage lon_img{g, Tensor({1, g.rows(), g.cols()})};
  for (const GeoPoint& p : prefix) {
    const auto c = cell_of(p, g);
    if (!c) continue;
    const GeoPoint center = cell_center(g, *c);
    lat_img.pixels.at(0, c->row - 1, c->col - 1) = clamp_unit(norm(center.lat, frame.lat_lo, frame.lat_hi));
    lon_img.pixels.at(0, c->row - 1, c->col - 1) = clamp_unit(norm(center.lon, frame.lon_lo, frame.lon_hi));
  }
  return {std::move(lat_img), std::move(lon_img)};
}

LocalStack stack_le(std::span<const GeoPoint> prefix, const LocalStackOptions& options) {
  if (prefix.empty()) throw std::invalid_argument("stack_le: empty prefix");
  LocalStack s{make_local_window(prefix.front(), options.m, options.cell_width_m),
               make_local_window(prefix.back(), options.m, options.cell_width_m),
               Tensor({4, options.m, options.m})};
  const std::size_t plane = options.m * options.m;
  std::size_t channel = 0;
  for (const LocalWindow* w : {&s.start, &s.end}) {
    const NormFrame frame =
        options.reference == NormReference::window ? NormFrame::of_grid(w->grid) : options.city_frame;
    auto [lat_img, lon_img] = rasterize_local(prefix, *w, frame);
    std::copy(lat_img.pixels.values().begin(), lat_img.pixels.values().end(), s.pixels.data() + channel++ * plane);
    std::copy(lon_img.pixels.values().begin(), lon_img.pixels.values().end(), s.pixels.data() + channel++ * plane);
  }
  return s;
}

void write_text_grid(std::ostream& out, const Tensor& image, std::size_t channel) {
  const std::size_t rows = image.dim(1), cols = image.dim(2);
  char buf[32];
  for (std::size_t r = rows; r-- > 0;) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, c ? " %.4f" : "%.4f", image.at(channel, r, c));
      out << buf;
    }
    out << '\n';
  }
}

void write_pgm(std::ostream& out, const Tensor& image, std::size_t channel, double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("write_pgm: empty value range");
  const std::size_t rows = image.dim(1), cols = image.dim(2);
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (std::size_t r = rows; r-- > 0;) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double t = std::clamp((image.at(channel, r, c) - lo) / (hi - lo), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
  }
}

}  // namespace tconv
