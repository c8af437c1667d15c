#include "tconv/cluster.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "tconv/errors.hpp"
#include "tconv/rng.hpp"

namespace tconv {
namespace {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double dist2(const Vec2& a, const Vec2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool lon_lat_less(const GeoPoint& a, const GeoPoint& b) {
  return a.lon < b.lon || (a.lon == b.lon && a.lat < b.lat);
}

// Uniform bucket hash with cell size equal to the query radius, so a radius
// query only needs the 3x3 block around the query's bucket.
class SpatialHash {
 public:
  SpatialHash(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[key(bucket(pts[i].x), bucket(pts[i].y))].push_back(i);
  }

  template <typename Fn>
  void for_each_within(const Vec2& q, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const std::int64_t bx = bucket(q.x);
    const std::int64_t by = bucket(q.y);
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        auto it = buckets_.find(key(bx + dx, by + dy));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second)
          if (dist2(pts_[i], q) <= r2) fn(i);
      }
    }
  }

 private:
  std::int64_t bucket(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) << 32) ^ (static_cast<std::uint64_t>(y) & 0xffffffffull);
  }

  const std::vector<Vec2>& pts_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

// Mean of points within `radius`, summed in index order for determinism.
// Returns false when the neighbourhood is empty.
bool neighbourhood_mean(const SpatialHash& hash, const std::vector<Vec2>& pts, const Vec2& q,
                        double radius, Vec2& mean, std::vector<std::size_t>& scratch) {
  scratch.clear();
  hash.for_each_within(q, radius, [&](std::size_t i) { scratch.push_back(i); });
  if (scratch.empty()) return false;
  std::sort(scratch.begin(), scratch.end());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i : scratch) {
    sx += pts[i].x;
    sy += pts[i].y;
  }
  mean = {sx / static_cast<double>(scratch.size()), sy / static_cast<double>(scratch.size())};
  return true;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

// Single-linkage merge of modes closer than `threshold`; each group is
// replaced by the mean of its members. Repeats until no pair is that close.
std::vector<Vec2> merge_modes(std::vector<Vec2> modes, double threshold) {
  const double t2 = threshold * threshold;
  while (true) {
    std::vector<std::size_t> parent(modes.size());
    std::iota(parent.begin(), parent.end(), 0);
    SpatialHash hash(modes, threshold);
    bool merged = false;
    for (std::size_t i = 0; i < modes.size(); ++i) {
      hash.for_each_within(modes[i], threshold, [&](std::size_t j) {
        if (j <= i || dist2(modes[i], modes[j]) >= t2) return;
        const std::size_t a = find_root(parent, i);
        const std::size_t b = find_root(parent, j);
        if (a != b) {
          parent[std::max(a, b)] = std::min(a, b);
          merged = true;
        }
      });
    }
    if (!merged) return modes;

    std::vector<Vec2> sums(modes.size());
    std::vector<std::size_t> counts(modes.size(), 0);
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::size_t r = find_root(parent, i);
      sums[r].x += modes[i].x;
      sums[r].y += modes[i].y;
      ++counts[r];
    }
    std::vector<Vec2> next;
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (counts[i]) next.push_back({sums[i].x / static_cast<double>(counts[i]), sums[i].y / static_cast<double>(counts[i])});
    modes = std::move(next);
  }
}

}  // namespace

ClusterSet mean_shift(const std::vector<GeoPoint>& points, const MeanShiftOptions& options) {
  if (points.empty()) throw std::invalid_argument("mean_shift: no points");
  if (!(options.bandwidth_m > 0.0)) throw std::invalid_argument("mean_shift: bandwidth must be positive");
  const double bw = options.bandwidth_m;

  std::vector<GeoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(), lon_lat_less);

  GeoPoint sw = sorted.front();
  for (const GeoPoint& p : sorted) sw.lat = std::min(sw.lat, p.lat);
  const Grid frame(sw, 1, 1, 1.0, 1.0);
  std::vector<Vec2> pts(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Offset o = frame.project(sorted[i]);
    pts[i] = {o.east_m, o.north_m};
  }
  const SpatialHash hash(pts, bw);

  std::vector<std::size_t> seeds(pts.size());
  std::iota(seeds.begin(), seeds.end(), 0);
  if (seeds.size() > options.max_seeds) {
    Rng rng(options.seed);
    shuffle(seeds, rng);
    seeds.resize(options.max_seeds);
    std::sort(seeds.begin(), seeds.end());
  }

  std::vector<Vec2> modes;
  modes.reserve(seeds.size());
  std::vector<std::size_t> scratch;
  const double tol2 = options.tol_m * options.tol_m;
  for (std::size_t s : seeds) {
    Vec2 x = pts[s];
    for (std::size_t it = 0; it < options.max_iter; ++it) {
      Vec2 m;
      if (!neighbourhood_mean(hash, pts, x, bw, m, scratch)) break;
      const double shift2 = dist2(m, x);
      x = m;
      if (shift2 < tol2) break;
    }
    modes.push_back(x);
  }
  std::vector<Vec2> centers = merge_modes(std::move(modes), bw / 2.0);

  // Coverage repair: an uncovered point is > bw from every center, so the
  // mean of its bw/2 neighbourhood is > bw/2 from them and covers it.
  const double bw2 = bw * bw;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool covered = false;
    for (const Vec2& c : centers)
      if (dist2(c, pts[i]) <= bw2) {
        covered = true;
        break;
      }
    if (covered) continue;
    Vec2 m;
    neighbourhood_mean(hash, pts, pts[i], bw / 2.0, m, scratch);
    centers.push_back(m);
  }

  ClusterSet out;
  out.bandwidth_m = bw;
  out.source_count = points.size();
  for (const Vec2& c : centers) out.centers.push_back(frame.unproject({c.x, c.y}));
  std::sort(out.centers.begin(), out.centers.end(), lon_lat_less);
  return out;
}

void write_clusters(std::ostream& out, const ClusterSet& clusters) {
  auto fmt = [](double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
  };
  out << "# tconv clusters\n";
  out << "# bandwidth_m " << fmt(clusters.bandwidth_m) << '\n';
  out << "# source_count " << clusters.source_count << '\n';
  for (const GeoPoint& c : clusters.centers) out << fmt(c.lon) << ' ' << fmt(c.lat) << '\n';
}

ClusterSet read_clusters(std::istream& in) {
  ClusterSet cs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string hash, key;
      ss >> hash >> key;
      if (key == "bandwidth_m") ss >> cs.bandwidth_m;
      if (key == "source_count") ss >> cs.source_count;
      continue;
    }
    GeoPoint p;
    std::string extra;
    if (!(ss >> p.lon >> p.lat) || (ss >> extra) || !is_valid(p))
      throw SchemaError("cluster file line " + std::to_string(line_no) + ": expected 'lon lat'");
    cs.centers.push_back(p);
  }
  if (cs.centers.empty()) throw SchemaError("cluster file has no centers");
  return cs;
}

}  // namespace tconv
