#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tconv/ingest.hpp"
#include "tconv/model.hpp"

namespace tconv {

/// Which feature F^(k)_{c,m,n} to explain: an explicit element, or the
/// largest activation of the layer (first in row-major order on ties).
struct FeatureSelector {
  std::optional<std::array<std::size_t, 3>> element;  // channel, row, col (0-based)

  static FeatureSelector largest() { return {}; }
  static FeatureSelector at(std::size_t c, std::size_t m, std::size_t n) { return {{{c, m, n}}}; }
};

/// d F^(layer)_{c,m,n} / d input, over every input channel and pixel.
struct SaliencyMap {
  std::size_t layer = 0;
  std::size_t channel = 0, row = 0, col = 0;
  double feature_value = 0.0;
  Tensor gradient;  // same shape as the input image

  /// Sum over channels of |gradient|, shaped 1 x H x W.
  Tensor magnitude() const;
};

/// Throws std::out_of_range for a layer outside 1..depth or an element
/// outside the layer's feature map.
SaliencyMap feature_input_gradient(const FeatureStack& stack, const Tensor& image, std::size_t layer,
                                   const FeatureSelector& selector);
SaliencyMap feature_input_gradient(const Model& model, const Tensor& image, std::size_t layer,
                                   const FeatureSelector& selector);

inline constexpr std::size_t kPortions = 10;

/// Share of absolute input gradient attributed to each tenth of a
/// trajectory's duration.
struct PortionHistogram {
  std::array<double, kPortions> shares{};
  std::size_t trips_used = 0;
  std::size_t trips_without_gradient = 0;
  std::size_t layer = 4;
  /// Each trip's shares are normalized to 1, then averaged over trips.
  std::string aggregation = "per_trip_normalized_mean";
};

/// 0-based portion of point k in an n-point trajectory: floor(10 k / (n-1)),
/// capped at 9. A single point falls in portion 0.
std::size_t portion_of(std::size_t k, std::size_t n);

/// Gradient of the largest L4 feature with respect to each pixel of each
/// trajectory's image; a pixel's |gradient| goes to the portion of the
/// earliest point that painted it. Unpainted pixels are ignored. Throws
/// std::invalid_argument for an empty sample or when no trajectory yields a
/// nonzero gradient.
PortionHistogram portion_statistics(const Model& model, const std::vector<std::vector<GeoPoint>>& trajectories,
                                    std::size_t workers = 1);

}  // namespace tconv
