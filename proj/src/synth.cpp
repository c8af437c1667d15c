#include "tconv/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "tconv/rng.hpp"

namespace tconv {
namespace {

constexpr GeoPoint kCenter{-8.615, 41.155};
constexpr double kHalfWidthM = 6500.0;   // trips stay inside +-6.5 km east-west
constexpr double kHalfHeightM = 6000.0;  // and +-6 km north-south of the center
constexpr double kStreetAngle = 0.35;    // radians, orientation of the street grid
constexpr double kSampleS = 15.0;
constexpr std::int64_t kYearStart = 1372636800;  // 2013-07-01
constexpr std::int64_t kYearSeconds = 365 * 86400;
constexpr std::size_t kStands = 63;

struct Vec {
  double x, y;
};

const Grid& frame() {
  static const Grid g(kCenter, 1, 1, 1.0, 1.0);
  return g;
}

// Rounded to the 1e-6 degree resolution of the recorded data.
GeoPoint to_geo(const Vec& v) {
  const GeoPoint g = frame().unproject({v.x, v.y});
  return {std::round(g.lon * 1e6) / 1e6, std::round(g.lat * 1e6) / 1e6};
}

Vec clamp_city(Vec v) {
  return {std::clamp(v.x, -kHalfWidthM, kHalfWidthM), std::clamp(v.y, -kHalfHeightM, kHalfHeightM)};
}

Vec jitter(const Vec& v, double sigma, Rng& rng) { return clamp_city({v.x + sigma * rng.normal(), v.y + sigma * rng.normal()}); }

struct Layout {
  std::vector<Vec> hotspots;
  std::vector<double> weights;                    // cumulative popularity
  std::vector<std::array<std::size_t, 3>> favourites;  // preferred destinations per origin hotspot
  std::vector<Vec> stands;
};

std::size_t draw_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

Layout make_layout(const SynthOptions& o) {
  Rng rng(o.layout_seed);
  Layout l;
  double acc = 0.0;
  for (std::size_t h = 0; h < o.hotspots; ++h) {
    l.hotspots.push_back(clamp_city({2600.0 * rng.normal(), 2400.0 * rng.normal()}));
    acc += 1.0 / std::pow(static_cast<double>(h + 1), 0.7);
    l.weights.push_back(acc);
  }
  for (std::size_t h = 0; h < o.hotspots; ++h) {
    std::array<std::size_t, 3> fav{};
    for (auto& f : fav) {
      do {
        f = static_cast<std::size_t>(rng.below(o.hotspots));
      } while (f == h);
    }
    l.favourites.push_back(fav);
  }
  for (std::size_t s = 0; s < kStands; ++s) {
    const Vec& near = l.hotspots[s % o.hotspots];
    l.stands.push_back(jitter(near, 700.0, rng));
  }
  return l;
}

std::size_t nearest(const std::vector<Vec>& pts, const Vec& v) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = std::hypot(pts[i].x - v.x, pts[i].y - v.y);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

// Street-aligned route from a to b through an optional detour.
std::vector<Vec> route(const Vec& a, const Vec& b, Rng& rng) {
  const double c = std::cos(kStreetAngle), s = std::sin(kStreetAngle);
  auto to_street = [&](const Vec& v) { return Vec{c * v.x + s * v.y, -s * v.x + c * v.y}; };
  auto from_street = [&](const Vec& v) { return Vec{c * v.x - s * v.y, s * v.x + c * v.y}; };
  const Vec sa = to_street(a), sb = to_street(b);
  std::vector<Vec> waypoints{sa};
  const bool along_x_first = rng.uniform() < 0.5;
  if (rng.uniform() < 0.3) {
    // Detour: an extra corner partway along.
    const double t = rng.uniform(0.3, 0.7);
    const double off = rng.uniform(-0.25, 0.25) * (std::abs(sb.x - sa.x) + std::abs(sb.y - sa.y));
    const Vec mid = along_x_first ? Vec{sa.x + t * (sb.x - sa.x), sa.y + off} : Vec{sa.x + off, sa.y + t * (sb.y - sa.y)};
    waypoints.push_back(along_x_first ? Vec{mid.x, sa.y} : Vec{sa.x, mid.y});
    waypoints.push_back(mid);
    waypoints.push_back(along_x_first ? Vec{mid.x, sb.y} : Vec{sb.x, mid.y});
  } else {
    waypoints.push_back(along_x_first ? Vec{sb.x, sa.y} : Vec{sa.x, sb.y});
  }
  waypoints.push_back(sb);
  std::vector<Vec> out;
  for (const Vec& w : waypoints) out.push_back(from_street(w));
  return out;
}

std::vector<Vec> sample_route(const std::vector<Vec>& path, double step, Rng& rng) {
  std::vector<Vec> samples{path.front()};
  double carry = 0.0;  // distance already travelled past the last sample
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec& p = path[i - 1];
    const Vec& q = path[i];
    const double len = std::hypot(q.x - p.x, q.y - p.y);
    double pos = step - carry;
    while (pos <= len) {
      const double t = pos / len;
      samples.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      pos += step * rng.uniform(0.8, 1.2);
    }
    carry = len - (pos - step);
  }
  samples.push_back(path.back());
  for (auto& v : samples) v = jitter(v, 8.0, rng);
  return samples;
}

}  // namespace

std::vector<Trip> synthesize_trips(const SynthOptions& o) {
  const Layout layout = make_layout(o);
  Rng rng(o.seed);
  std::vector<Trip> trips;
  trips.reserve(o.trips);
  for (std::size_t i = 0; i < o.trips; ++i) {
    Trip t;
    t.taxi_id = 20000001 + static_cast<std::int64_t>(rng.below(448));
    t.timestamp = kYearStart + static_cast<std::int64_t>(rng.below(kYearSeconds));
    t.trip_id = std::to_string(t.timestamp) + std::to_string(t.taxi_id);
    t.day_type = DayType::normal;

    const double call = rng.uniform();
    Vec origin;
    if (call < 0.45) {
      t.call_type = CallType::stand;
      const std::size_t stand = static_cast<std::size_t>(rng.below(kStands));
      t.origin_stand = static_cast<std::int64_t>(stand + 1);
      origin = jitter(layout.stands[stand], 40.0, rng);
    } else {
      t.call_type = call < 0.65 ? CallType::central : CallType::street;
      if (t.call_type == CallType::central) t.origin_call = 2000 + static_cast<std::int64_t>(rng.below(60000));
      origin = jitter(layout.hotspots[draw_cumulative(layout.weights, rng)], 450.0, rng);
    }

    const std::size_t from = nearest(layout.hotspots, origin);
    Vec dest;
    do {
      const double r = rng.uniform();
      std::size_t to;
      if (r < 0.45) to = layout.favourites[from][0];
      else if (r < 0.65) to = layout.favourites[from][1];
      else if (r < 0.75) to = layout.favourites[from][2];
      else to = draw_cumulative(layout.weights, rng);
      dest = jitter(layout.hotspots[to], 250.0, rng);
    } while (std::hypot(dest.x - origin.x, dest.y - origin.y) < 1000.0);

    const double speed = rng.uniform(6.0, 11.0);
    for (const Vec& v : sample_route(route(origin, dest, rng), speed * kSampleS, rng)) t.points.push_back(to_geo(v));

    const double defect = rng.uniform();
    if (defect < o.missing_fraction) {
      t.missing_data = true;
      t.points.resize(t.points.size() / 2);
    } else if (defect < o.missing_fraction + o.empty_fraction) {
      t.points.clear();
    } else if (defect < o.missing_fraction + o.empty_fraction + o.jump_fraction && t.points.size() > 2) {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.below(t.points.size() - 2));
      const Offset off = frame().project(t.points[k]);
      t.points[k] = to_geo({off.east_m + 5000.0, off.north_m});
    }
    trips.push_back(std::move(t));
  }
  return trips;
}

}  // namespace tconv
