#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "problems.hpp"
#include "tconv/saliency.hpp"
#include "tconv/synth.hpp"

using namespace tconv;

namespace {

std::vector<std::vector<GeoPoint>> synthetic_paths(std::size_t n, std::uint64_t seed) {
  SynthOptions o;
  o.trips = n;
  o.seed = seed;
  o.missing_fraction = o.empty_fraction = o.jump_fraction = 0;
  std::vector<std::vector<GeoPoint>> out;
  for (const Trip& t : synthesize_trips(o))
    if (is_trainable(t)) out.push_back(t.points);
  return out;
}

ClusterSet two_centers() { return {{{-8.63, 41.15}, {-8.60, 41.16}}, 500, 2}; }

// Input rows of a layer-`layer` feature row, walking the stack backwards.
std::pair<long, long> receptive_rows(const FeatureStack& s, std::size_t layer, long row) {
  long lo = row, hi = row;
  for (std::size_t i = layer; i-- > 0;) {
    if (const auto* c = std::get_if<Conv2d>(&s.stage(i))) {
      const long r = static_cast<long>(c->kernel() / 2);
      lo -= r;
      hi += r;
    } else {
      const long t = static_cast<long>(std::get<MaxPool2d>(s.stage(i)).pool());
      lo *= t;
      hi = hi * t + t - 1;
    }
  }
  return {lo, hi};
}

}  // namespace

TEST(Saliency, MatchesFiniteDifferencesOnNineByNine) {
  for (Variant v : {Variant::basic, Variant::local_enhancement}) {
    ModelConfig cfg = problems::ModelFixture::mini(v, 9);
    cfg.conv1_channels = 3;
    cfg.conv2_channels = 3;
    const Model m(cfg, two_centers(), 5);
    Rng rng(4);
    Tensor image = oracle::random_tensor(m.input_shape(), rng, 0.0, 1.0);
    for (std::size_t layer = 1; layer <= 4; ++layer) {
      const SaliencyMap s = feature_input_gradient(m, image, layer, FeatureSelector::largest());
      const std::size_t flat = (s.channel * m.features().output_shape(layer, m.input_shape())[1] + s.row) *
                                   m.features().output_shape(layer, m.input_shape())[2] +
                               s.col;
      FeatureStack::Trace trace;
      GradCheckProblem p;
      p.loss = [&] { return m.features().forward(image, &trace, layer)[flat]; };
      p.compute_gradients = [] {};
      p.blocks = {{"image", image.values(), s.gradient.values()}};
      p.branches = [&] { return branch_signature(m.features(), trace); };
      const GradCheckReport r = grad_check(p);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(v) << " layer " << layer << " " << r.worst_entry;
      EXPECT_EQ(r.checked + r.skipped_kinks, image.size());
    }
  }
}

TEST(Saliency, DeltaKernelGivesMirroredStamp) {
  // One identity conv whose only nonzero tap is (0, 2): F(m, n) = x(m - 1, n + 1).
  Conv2d conv(1, 1, 3, Activation::identity);
  conv.weight().fill(0);
  conv.weight()[2] = 1.0;
  FeatureStack stack({conv});
  Rng rng(1);
  const Tensor image = oracle::random_tensor({1, 7, 7}, rng);
  const SaliencyMap s = feature_input_gradient(stack, image, 1, FeatureSelector::at(0, 3, 4));
  EXPECT_DOUBLE_EQ(s.feature_value, image.at(0, 2, 5));
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(s.gradient.at(0, r, c), r == 2 && c == 5 ? 1.0 : 0.0);
}

TEST(Saliency, GeneralKernelStampsWeights) {
  Conv2d conv(2, 1, 3, Activation::identity);
  Rng rng(2);
  conv.initialize(rng);
  FeatureStack stack({conv});
  const Tensor image = oracle::random_tensor({2, 6, 6}, rng);
  const SaliencyMap s = feature_input_gradient(stack, image, 1, FeatureSelector::at(0, 0, 3));
  const Tensor& w = conv.weight();
  for (std::size_t ic = 0; ic < 2; ++ic)
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 6; ++c) {
        const long a = static_cast<long>(r) + 1, b = static_cast<long>(c) - 3 + 1;
        const double expected = a >= 0 && a < 3 && b >= 0 && b < 3 ? w[(ic * 3 + a) * 3 + b] : 0.0;
        EXPECT_EQ(s.gradient.at(ic, r, c), expected);
      }
}

TEST(Saliency, ZeroInputThroughReluStackIsZero) {
  Conv2d a(1, 3, 3, Activation::relu), b(3, 2, 3, Activation::relu);
  Rng rng(3);
  a.initialize(rng);
  b.initialize(rng);
  for (double& v : a.bias().values()) v = -0.1;
  FeatureStack stack({a, MaxPool2d(2), b, MaxPool2d(2)});
  const SaliencyMap s = feature_input_gradient(stack, Tensor({1, 12, 12}), 4, FeatureSelector::largest());
  for (double g : s.gradient.values()) EXPECT_EQ(g, 0.0);
}

TEST(Saliency, RejectsOutOfRangeSelection) {
  const Model m(problems::ModelFixture::mini(Variant::basic, 9), two_centers(), 1);
  const Tensor img(m.input_shape());
  EXPECT_THROW(feature_input_gradient(m, img, 0, FeatureSelector::largest()), std::out_of_range);
  EXPECT_THROW(feature_input_gradient(m, img, 5, FeatureSelector::largest()), std::out_of_range);
  EXPECT_THROW(feature_input_gradient(m, img, 4, FeatureSelector::at(0, 9, 0)), std::out_of_range);
}

TEST(Saliency, NonzeroOnlyInsideReceptiveField) {
  const Model m(ModelConfig::basic(), two_centers(), 8);
  const auto paths = synthetic_paths(6, 3);
  for (const auto& p : paths) {
    const Tensor img = m.encode(p);
    for (std::size_t layer = 1; layer <= 4; ++layer) {
      const SaliencyMap s = feature_input_gradient(m, img, layer, FeatureSelector::largest());
      const auto [r0, r1] = receptive_rows(m.features(), layer, static_cast<long>(s.row));
      const auto [c0, c1] = receptive_rows(m.features(), layer, static_cast<long>(s.col));
      for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c)
          if (s.gradient.at(0, r, c) != 0.0) {
            EXPECT_GE(static_cast<long>(r), r0);
            EXPECT_LE(static_cast<long>(r), r1);
            EXPECT_GE(static_cast<long>(c), c0);
            EXPECT_LE(static_cast<long>(c), c1);
          }
    }
  }
}

TEST(Portions, IndexFormula) {
  EXPECT_EQ(portion_of(0, 1), 0u);
  EXPECT_EQ(portion_of(0, 11), 0u);
  EXPECT_EQ(portion_of(1, 11), 1u);
  EXPECT_EQ(portion_of(10, 11), 9u);
  EXPECT_EQ(portion_of(4, 5), 9u);
  EXPECT_EQ(portion_of(1, 3), 5u);
  for (std::size_t n = 2; n < 40; ++n)
    for (std::size_t k = 1; k < n; ++k) EXPECT_GE(portion_of(k, n), portion_of(k - 1, n));
}

TEST(Portions, SinglePointTrajectoriesUsePortionZero) {
  const Model m(ModelConfig::local_enhancement(), two_centers(), 2);
  Rng rng(5);
  std::vector<std::vector<GeoPoint>> singles;
  for (int i = 0; i < 20; ++i) singles.push_back({oracle::porto_point(rng)});
  const PortionHistogram h = portion_statistics(m, singles);
  ASSERT_GT(h.trips_used, 0u);
  EXPECT_EQ(h.trips_used + h.trips_without_gradient, singles.size());
  EXPECT_NEAR(h.shares[0], 1.0, 1e-12);
}

TEST(Portions, SharesSumToOneAndNoDecileDominatesUntrained) {
  const Model m(ModelConfig::basic(), two_centers(), 6);
  const auto paths = synthetic_paths(500, 8);
  const PortionHistogram h = portion_statistics(m, paths, 2);
  EXPECT_NEAR(std::accumulate(h.shares.begin(), h.shares.end(), 0.0), 1.0, 1e-9);
  EXPECT_EQ(h.trips_used + h.trips_without_gradient, paths.size());
  for (double s : h.shares) {
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 0.5);
  }
}

TEST(Portions, WorkerCountDoesNotChangeShares) {
  const Model m(ModelConfig::local_enhancement(), two_centers(), 6);
  const auto paths = synthetic_paths(40, 9);
  const PortionHistogram a = portion_statistics(m, paths, 1), b = portion_statistics(m, paths, 3);
  EXPECT_EQ(a.shares, b.shares);
}

TEST(Portions, EmptySampleThrows) {
  const Model m(ModelConfig::local_enhancement(), two_centers(), 6);
  EXPECT_THROW(portion_statistics(m, {}), std::invalid_argument);
}
