#include "tconv/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tconv/parallel.hpp"

namespace tconv {
namespace {

constexpr std::size_t kUnpainted = std::numeric_limits<std::size_t>::max();

// For each pixel of a grid, the index of the earliest point inside it.
std::vector<std::size_t> painters(std::span<const GeoPoint> points, const Grid& g) {
  std::vector<std::size_t> owner(g.rows() * g.cols(), kUnpainted);
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (auto c = cell_of(points[k], g)) {
      std::size_t& o = owner[(c->row - 1) * g.cols() + (c->col - 1)];
      if (o == kUnpainted) o = k;
    }
  }
  return owner;
}

}  // namespace

Tensor SaliencyMap::magnitude() const {
  const std::size_t ch = gradient.dim(0), h = gradient.dim(1), w = gradient.dim(2);
  Tensor m({1, h, w});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < h * w; ++i) m[i] += std::abs(gradient[c * h * w + i]);
  return m;
}

SaliencyMap feature_input_gradient(const FeatureStack& stack, const Tensor& image, std::size_t layer,
                                   const FeatureSelector& selector) {
  if (layer < 1 || layer > stack.depth())
    throw std::out_of_range("saliency: layer " + std::to_string(layer) + " outside 1.." + std::to_string(stack.depth()));
  FeatureStack::Trace trace;
  const Tensor features = stack.forward(image, &trace, layer);

  std::size_t flat = 0;
  if (selector.element) {
    const auto [c, m, n] = *selector.element;
    if (c >= features.dim(0) || m >= features.dim(1) || n >= features.dim(2))
      throw std::out_of_range("saliency: feature index outside layer of shape " + to_string(features.shape()));
    flat = (c * features.dim(1) + m) * features.dim(2) + n;
  } else {
    for (std::size_t i = 1; i < features.size(); ++i)
      if (features[i] > features[flat]) flat = i;
  }

  SaliencyMap s;
  s.layer = layer;
  s.channel = flat / (features.dim(1) * features.dim(2));
  s.row = (flat / features.dim(2)) % features.dim(1);
  s.col = flat % features.dim(2);
  s.feature_value = features[flat];
  Tensor seed(features.shape());
  seed[flat] = 1.0;
  s.gradient = stack.backward(trace, layer, std::move(seed), {});
  return s;
}

SaliencyMap feature_input_gradient(const Model& model, const Tensor& image, std::size_t layer,
                                   const FeatureSelector& selector) {
  return feature_input_gradient(model.features(), image, layer, selector);
}

std::size_t portion_of(std::size_t k, std::size_t n) {
  if (n <= 1) return 0;
  return std::min<std::size_t>(kPortions - 1, (kPortions * k) / (n - 1));
}

PortionHistogram portion_statistics(const Model& model, const std::vector<std::vector<GeoPoint>>& trajectories,
                                    std::size_t workers) {
  if (trajectories.empty()) throw std::invalid_argument("portion statistics: empty sample");
  const ModelConfig& cfg = model.config();
  const Grid global = Grid::from_bounds(cfg.bbox_southwest, cfg.bbox_northeast, cfg.grid_m, cfg.grid_m);

  std::vector<std::optional<std::array<double, kPortions>>> per_trip(trajectories.size());
  parallel_for(trajectories.size(), workers, [&](std::size_t t) {
    const auto& pts = trajectories[t];
    if (pts.empty()) throw std::invalid_argument("portion statistics: empty trajectory");
    const Tensor image = model.encode(pts);
    const SaliencyMap s = feature_input_gradient(model, image, 4, FeatureSelector::largest());
    const std::size_t plane = cfg.grid_m * cfg.grid_m;

    // Channel groups that share one painting grid.
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
    if (cfg.variant == Variant::basic) {
      groups.push_back({painters(pts, global), {0}});
    } else {
      groups.push_back({painters(pts, make_local_window(pts.front(), cfg.grid_m, cfg.cell_width_m).grid), {0, 1}});
      groups.push_back({painters(pts, make_local_window(pts.back(), cfg.grid_m, cfg.cell_width_m).grid), {2, 3}});
    }

    std::array<double, kPortions> mass{};
    double total = 0.0;
    for (const auto& [owner, channels] : groups) {
      for (std::size_t c : channels) {
        for (std::size_t i = 0; i < plane; ++i) {
          if (owner[i] == kUnpainted) continue;
          const double g = std::abs(s.gradient[c * plane + i]);
          mass[portion_of(owner[i], pts.size())] += g;
          total += g;
        }
      }
    }
    if (total > 0.0) {
      for (double& m : mass) m /= total;
      per_trip[t] = mass;
    }
  });

  PortionHistogram h;
  for (const auto& m : per_trip) {
    if (!m) {
      ++h.trips_without_gradient;
      continue;
    }
    ++h.trips_used;
    for (std::size_t p = 0; p < kPortions; ++p) h.shares[p] += (*m)[p];
  }
  if (h.trips_used == 0) throw std::invalid_argument("portion statistics: no trajectory produced a nonzero gradient");
  for (double& v : h.shares) v /= static_cast<double>(h.trips_used);
  return h;
}

}  // namespace tconv
