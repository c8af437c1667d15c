#pragma once

#include <cstdint>
#include <vector>

#include "tconv/ingest.hpp"

namespace tconv {

/// Synthetic Porto-area taxi trips in the competition schema.
///
/// A fixed city layout (hotspots, taxi stands, a rotated street grid) is
/// drawn from `layout_seed`; trips are drawn from `seed`. Each trip starts
/// near a hotspot or stand, heads for a destination hotspot that depends
/// on where it started, and follows a street-aligned route sampled every
/// 15 s with GPS jitter. A small share of rows carry the defects real
/// data has (missing-data flag, empty polyline, GPS jump).
struct SynthOptions {
  std::size_t trips = 1000;
  std::uint64_t seed = 1;
  std::uint64_t layout_seed = 2013;
  std::size_t hotspots = 24;
  double missing_fraction = 0.01;
  double empty_fraction = 0.005;
  double jump_fraction = 0.005;
};

std::vector<Trip> synthesize_trips(const SynthOptions& options);

}  // namespace tconv
