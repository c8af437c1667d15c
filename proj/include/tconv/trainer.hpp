#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "tconv/ingest.hpp"
#include "tconv/kvconfig.hpp"
#include "tconv/model.hpp"

namespace tconv {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  /// Epochs between checkpoints written to checkpoint_dir (0 = never).
  std::size_t checkpoint_interval = 0;
  std::string checkpoint_dir;
  /// Use at most this many training trips (0 = all).
  std::size_t max_trips = 0;
  /// Each epoch cuts every trip at a fresh completeness ~ Uniform(min_cut, max_cut).
  double min_cut = 0.1;
  double max_cut = 1.0;
  /// Global gradient-norm clip, in units of the kilometer objective.
  double clip_norm = 10.0;
  std::size_t workers = 1;
  /// Adds wall-clock seconds to each log record, which makes the log
  /// differ between otherwise identical runs.
  bool log_timing = false;

  void validate() const;
  KeyValues to_kv() const;
  static TrainConfig from_kv(const KeyValues& kv);
  static const std::set<std::string>& keys();
};

struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss_m = 0.0;     // mean haversine over the batch
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  double wall_s = 0.0;
};

struct TrainResult {
  std::vector<BatchRecord> curve;
  std::vector<std::string> checkpoints;
  std::size_t clipped_steps = 0;
};

/// Mini-batch momentum SGD on the haversine loss. Gradients are summed over
/// a fixed number of shards in a fixed order, so results do not depend on
/// the worker count. Writes one JSON record per batch to `log` when given.
/// Throws DivergenceError after dumping state when the loss turns non-finite.
TrainResult train(Model& model, const std::vector<Trip>& trips, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

inline constexpr std::size_t kCompletenessBuckets = 10;

/// 1-based decile of the completeness ratio; a ratio of 1 falls in bucket 10.
std::size_t completeness_bucket(double ratio);

struct BucketStat {
  std::size_t count = 0;
  double mean_m = 0.0;
};

struct EvalReport {
  std::size_t count = 0;
  double mean_m = 0.0;
  double p10_m = 0.0, p25_m = 0.0, p50_m = 0.0, p75_m = 0.0, p90_m = 0.0;
  std::array<BucketStat, kCompletenessBuckets> buckets{};
  std::vector<double> errors_m;  // per example, input order

  /// Mean over examples whose bucket lies in [first, last] (1-based).
  double mean_over_buckets(std::size_t first, std::size_t last) const;
};

using Predictor = std::function<GeoPoint(const Example&)>;

EvalReport evaluate(const Predictor& predict, const std::vector<Example>& examples, std::size_t workers = 1);
EvalReport evaluate(const Model& model, const std::vector<Example>& examples, std::size_t workers = 1);

/// Arithmetic mean of trip destinations: the constant baseline predictor.
GeoPoint mean_destination(const std::vector<Trip>& trips);

void write_report_table(std::ostream& out, const EvalReport& r, const std::string& title);
/// Single-line JSON record of the report (without per-example errors).
std::string report_json(const EvalReport& r);

}  // namespace tconv
