#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "tconv/checkpoint.hpp"
#include "tconv/errors.hpp"
#include "tconv/synth.hpp"
#include "tconv/trainer.hpp"

using namespace tconv;
namespace fs = std::filesystem;

namespace {

std::vector<Trip> clean_trips(std::size_t n, std::uint64_t seed) {
  SynthOptions o;
  o.trips = n;
  o.seed = seed;
  o.missing_fraction = o.empty_fraction = o.jump_fraction = 0;
  std::vector<Trip> t;
  for (Trip& x : synthesize_trips(o))
    if (is_trainable(x)) t.push_back(std::move(x));
  return t;
}

ModelConfig tiny_le() {
  ModelConfig c = ModelConfig::local_enhancement();
  c.grid_m = 10;
  c.conv1_channels = 4;
  c.conv2_channels = 4;
  c.dense_width = 16;
  c.embedding_dim = 2;
  return c;
}

ClusterSet ring(const GeoPoint& c, double r_deg, std::size_t k) {
  ClusterSet s;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = 2 * M_PI * static_cast<double>(i) / static_cast<double>(k);
    s.centers.push_back({c.lon + r_deg * std::cos(a), c.lat + r_deg * std::sin(a)});
  }
  s.bandwidth_m = 500;
  s.source_count = k;
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tconv_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Train, OverfitsSingleExample) {
  std::vector<Trip> one = clean_trips(1, 5);
  ASSERT_EQ(one.size(), 1u);
  Model m(tiny_le(), ring(one[0].destination(), 0.01, 6), 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.lr = 0.01;
  cfg.min_cut = cfg.max_cut = 1.0;
  const TrainResult r = train(m, one, cfg);
  ASSERT_EQ(r.curve.size(), 200u);
  const Example ex = make_example(one[0], 1.0);
  EXPECT_LT(haversine(m.predict(ex), ex.target), 50.0);
  EXPECT_LT(r.curve.back().loss_m, r.curve.front().loss_m);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto trips = clean_trips(20, 2);
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 4), 1);
  const Checkpoint before = snapshot(m);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.lr = 0;
  train(m, trips, cfg);
  const Checkpoint after = snapshot(m);
  for (std::size_t i = 0; i < before.tensors.size(); ++i) EXPECT_EQ(before.tensors[i].tensor, after.tensors[i].tensor);
}

TEST(Train, SameSeedSameBytesAnyWorkerCount) {
  const auto trips = clean_trips(40, 3);
  std::string bytes[3], logs[3];
  const std::size_t workers[3] = {1, 1, 3};
  for (int run = 0; run < 3; ++run) {
    Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 5), 9);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 7;
    cfg.workers = workers[run];
    std::ostringstream log;
    train(m, trips, cfg, &log);
    std::ostringstream ck;
    write_checkpoint(ck, snapshot(m));
    bytes[run] = ck.str();
    logs[run] = log.str();
  }
  EXPECT_EQ(bytes[0], bytes[1]);
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(bytes[0].size(), bytes[2].size());
  // Worker count only changes scheduling, not the shard reduction order.
  EXPECT_EQ(bytes[0], bytes[2]);
  EXPECT_EQ(logs[0], logs[2]);
}

TEST(Train, LogHasOneRecordPerBatch) {
  const auto trips = clean_trips(25, 4);
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 3), 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  std::ostringstream log;
  const TrainResult r = train(m, trips, cfg, &log);
  const std::size_t per_epoch = (trips.size() + 9) / 10;
  EXPECT_EQ(r.curve.size(), 2 * per_epoch);
  std::istringstream in(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_NE(line.find("\"loss_m\""), std::string::npos);
    EXPECT_EQ(line.find("wall_s"), std::string::npos);
  }
  EXPECT_EQ(n, r.curve.size());
}

TEST(Train, ClipsLargeGradients) {
  const auto trips = clean_trips(16, 6);
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.05, 4), 2);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.clip_norm = 1e-9;
  const TrainResult r = train(m, trips, cfg);
  EXPECT_EQ(r.clipped_steps, r.curve.size());
  for (const auto& rec : r.curve) EXPECT_TRUE(rec.clipped);
}

TEST(Train, RejectsUnusableTrips) {
  auto trips = clean_trips(3, 7);
  trips[1].missing_data = true;
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 3), 2);
  EXPECT_THROW(train(m, trips, TrainConfig{}), std::invalid_argument);
}

TEST(Train, DivergenceDumpsState) {
  TempDir dir("diverge");
  const auto trips = clean_trips(4, 8);
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 3), 2);
  for (Tensor* p : m.parameters()) p->fill(std::nan(""));
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.checkpoint_dir = dir.path.string();
  EXPECT_THROW(train(m, trips, cfg), DivergenceError);
  KeyValues meta;
  load_model((dir.path / "diverged.ckpt").string(), &meta);
  EXPECT_EQ(meta.get("diverged_epoch"), "1");
}

TEST(Train, WritesCheckpointsAtInterval) {
  TempDir dir("interval");
  const auto trips = clean_trips(6, 9);
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 3), 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 3;
  cfg.checkpoint_interval = 2;
  cfg.checkpoint_dir = dir.path.string();
  const TrainResult r = train(m, trips, cfg);
  ASSERT_EQ(r.checkpoints.size(), 3u);
  EXPECT_TRUE(fs::exists(dir.path / "epoch_0002.ckpt"));
  EXPECT_TRUE(fs::exists(dir.path / "epoch_0004.ckpt"));
  EXPECT_TRUE(fs::exists(dir.path / "epoch_0005.ckpt"));
  const Model last = load_model(r.checkpoints.back());
  const Example ex = make_example(trips[0], 0.5);
  EXPECT_EQ(last.predict(ex), m.predict(ex));
}

TEST(TrainConfigTest, KeyValueRoundTrip) {
  TrainConfig c;
  c.epochs = 3;
  c.lr = 0.05;
  c.log_timing = true;
  c.checkpoint_dir = "x";
  const TrainConfig back = TrainConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.to_kv().entries(), c.to_kv().entries());
  KeyValues bad;
  bad.set("log_timing", "maybe");
  EXPECT_THROW(TrainConfig::from_kv(bad), SchemaError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.min_cut = 0.8;
  c.max_cut = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Evaluate, PerfectPredictorScoresZero) {
  const auto trips = clean_trips(30, 10);
  std::vector<Example> ex;
  for (const Trip& t : trips) ex.push_back(make_example(t, 0.5));
  const EvalReport r = evaluate([](const Example& e) { return e.target; }, ex);
  EXPECT_EQ(r.mean_m, 0.0);
  EXPECT_EQ(r.p90_m, 0.0);
  EXPECT_EQ(r.count, ex.size());
}

TEST(Evaluate, ConstantBaselineOnTwoClusters) {
  const GeoPoint a{-8.64, 41.14}, b{-8.59, 41.162};
  std::vector<Trip> trips;
  for (int i = 0; i < 10; ++i) {
    Trip t;
    t.trip_id = std::to_string(i);
    t.points = {{-8.61, 41.15}, {-8.611, 41.151}, i % 2 ? a : b};
    trips.push_back(t);
  }
  const GeoPoint m = mean_destination(trips);
  EXPECT_NEAR(m.lon, (a.lon + b.lon) / 2, 1e-15);
  EXPECT_NEAR(m.lat, (a.lat + b.lat) / 2, 1e-15);
  std::vector<Example> ex;
  for (const Trip& t : trips) ex.push_back(make_example(t, 0.5));
  const EvalReport r = evaluate([&](const Example&) { return m; }, ex);
  const double expected = (oracle::haversine(m, a) + oracle::haversine(m, b)) / 2;
  EXPECT_NEAR(r.mean_m, expected, 1e-6);
}

TEST(Evaluate, BucketBoundaries) {
  EXPECT_EQ(completeness_bucket(0.0), 1u);
  EXPECT_EQ(completeness_bucket(0.05), 1u);
  EXPECT_EQ(completeness_bucket(0.1), 2u);
  EXPECT_EQ(completeness_bucket(0.95), 10u);
  EXPECT_EQ(completeness_bucket(1.0), 10u);
}

TEST(Evaluate, MeanEqualsBucketWeightedMean) {
  const auto trips = clean_trips(60, 11);
  Rng rng(3);
  std::vector<Example> ex;
  for (const Trip& t : trips) ex.push_back(make_example(t, rng.uniform(0.01, 1.0)));
  const GeoPoint c = mean_destination(trips);
  const EvalReport r = evaluate([&](const Example&) { return c; }, ex, 2);
  EXPECT_NEAR(r.mean_over_buckets(1, 10), r.mean_m, 1e-9);
  std::size_t count = 0;
  for (const auto& b : r.buckets) count += b.count;
  EXPECT_EQ(count, ex.size());
  EXPECT_LE(r.p10_m, r.p25_m);
  EXPECT_LE(r.p25_m, r.p50_m);
  EXPECT_LE(r.p50_m, r.p75_m);
  EXPECT_LE(r.p75_m, r.p90_m);
}

TEST(Evaluate, WorkerCountDoesNotChangeReport) {
  const auto trips = clean_trips(40, 12);
  std::vector<Example> ex;
  for (const Trip& t : trips) ex.push_back(make_example(t, 0.3));
  Model m(tiny_le(), ring({-8.615, 41.155}, 0.02, 3), 2);
  EXPECT_EQ(report_json(evaluate(m, ex, 1)), report_json(evaluate(m, ex, 4)));
}
