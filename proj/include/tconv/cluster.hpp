#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tconv/geo.hpp"

namespace tconv {

/// Candidate destinations for the centroid head.
struct ClusterSet {
  std::vector<GeoPoint> centers;  // sorted by (lon, lat)
  double bandwidth_m = 0.0;
  std::size_t source_count = 0;

  friend bool operator==(const ClusterSet&, const ClusterSet&) = default;
};

struct MeanShiftOptions {
  double bandwidth_m = 500.0;
  std::size_t max_iter = 100;
  double tol_m = 1.0;
  std::size_t max_seeds = 20000;
  std::uint64_t seed = 1;  // only used when subsampling seeds
};

/// Flat-kernel mean shift in locally projected meters.
///
/// Every seed climbs to a mode by repeatedly moving to the mean of the
/// points within bandwidth_m. Modes closer than bandwidth_m / 2 are merged
/// (single linkage, repeated until stable). Any point left farther than
/// bandwidth_m from every center gets a center of its own neighbourhood,
/// so the result always covers the input. The result depends only on the
/// multiset of input points.
ClusterSet mean_shift(const std::vector<GeoPoint>& points, const MeanShiftOptions& options = {});

/// Two whitespace-separated columns "lon lat" per line; '#' lines carry
/// bandwidth_m and source_count.
void write_clusters(std::ostream& out, const ClusterSet& clusters);
ClusterSet read_clusters(std::istream& in);

}  // namespace tconv
