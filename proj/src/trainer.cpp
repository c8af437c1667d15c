#include "tconv/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "tconv/checkpoint.hpp"
#include "tconv/errors.hpp"
#include "tconv/optim.hpp"
#include "tconv/parallel.hpp"
#include "tconv/rng.hpp"

namespace tconv {
namespace {

// Fixed gradient partition of every batch; independent of the worker count.
constexpr std::size_t kGradShards = 4;
constexpr std::uint64_t kDataSalt = 0xD47A;
constexpr double kMetersPerKm = 1000.0;

std::string checkpoint_name(const std::string& dir, std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ckpt", epoch);
  return (std::filesystem::path(dir) / buf).string();
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

// ----------------------------------------------------------- TrainConfig

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (!(lr >= 0.0)) throw std::invalid_argument("train config: lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must lie in [0, 1)");
  if (!(min_cut > 0.0 && min_cut <= max_cut && max_cut <= 1.0))
    throw std::invalid_argument("train config: need 0 < min_cut <= max_cut <= 1");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("train config: clip_norm must be positive");
  if (workers == 0) throw std::invalid_argument("train config: workers must be positive");
  if (checkpoint_interval && checkpoint_dir.empty())
    throw std::invalid_argument("train config: checkpoint_interval needs checkpoint_dir");
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  kv.set("lr", lr);
  kv.set("momentum", momentum);
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_interval", checkpoint_interval);
  kv.set("checkpoint_dir", checkpoint_dir);
  kv.set("max_trips", max_trips);
  kv.set("min_cut", min_cut);
  kv.set("max_cut", max_cut);
  kv.set("clip_norm", clip_norm);
  kv.set("workers", workers);
  kv.set("log_timing", log_timing ? "true" : "false");
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.lr = kv.get_double("lr", c.lr);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.seed = kv.get_u64("seed", c.seed);
  c.checkpoint_interval = kv.get_size("checkpoint_interval", c.checkpoint_interval);
  c.checkpoint_dir = kv.get_string("checkpoint_dir", c.checkpoint_dir);
  c.max_trips = kv.get_size("max_trips", c.max_trips);
  c.min_cut = kv.get_double("min_cut", c.min_cut);
  c.max_cut = kv.get_double("max_cut", c.max_cut);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.workers = kv.get_size("workers", c.workers);
  const std::string timing = kv.get_string("log_timing", c.log_timing ? "true" : "false");
  if (timing != "true" && timing != "false") throw SchemaError("config: log_timing must be true or false");
  c.log_timing = timing == "true";
  c.validate();
  return c;
}

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k = {"epochs",    "batch_size", "lr",      "momentum",  "seed",
                                          "checkpoint_interval", "checkpoint_dir", "max_trips", "min_cut",
                                          "max_cut",   "clip_norm",  "workers", "log_timing"};
  return k;
}

// ----------------------------------------------------------------- train

TrainResult train(Model& model, const std::vector<Trip>& trips, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  std::vector<const Trip*> pool;
  for (const Trip& t : trips) {
    if (cfg.max_trips && pool.size() >= cfg.max_trips) break;
    if (!is_trainable(t)) throw std::invalid_argument("train: trip " + t.trip_id + " is not usable");
    pool.push_back(&t);
  }
  if (pool.empty()) throw std::invalid_argument("train: no training trips");

  const KeyValues run_meta = cfg.to_kv();
  SgdMomentum opt(cfg.lr, cfg.momentum);
  Rng rng = Rng(cfg.seed).fork(kDataSalt);
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t shards = std::min(kGradShards, cfg.batch_size);
  std::vector<Gradients> shard_grads(shards, model.make_gradients());
  std::vector<double> shard_loss(shards);
  Gradients total = model.make_gradients();
  std::vector<std::size_t> order(pool.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<double> cuts(order.size());
    for (double& c : cuts) c = cfg.min_cut == cfg.max_cut ? cfg.max_cut : 1.0 - rng.uniform(1.0 - cfg.max_cut, 1.0 - cfg.min_cut);

    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = end - start;
      const std::size_t used_shards = std::min(shards, n);
      ++batch_no;

      parallel_for(used_shards, cfg.workers, [&](std::size_t s) {
        Gradients& g = shard_grads[s];
        g.zero();
        double loss_sum = 0.0;
        Model::Cache cache;
        const std::size_t lo = start + n * s / used_shards, hi = start + n * (s + 1) / used_shards;
        for (std::size_t i = lo; i < hi; ++i) {
          const Example ex = make_example(*pool[order[i]], cuts[i]);
          const GeoPoint p = model.forward(model.encode(ex.prefix), ex.meta, &cache);
          const HaversineGrad l = destination_loss(p, ex.target);
          loss_sum += l.distance_m;
          const double scale = 1.0 / (kMetersPerKm * static_cast<double>(n));
          model.backward(cache, l.d_lon * scale, l.d_lat * scale, &g, false);
        }
        shard_loss[s] = loss_sum;
      });

      total.zero();
      double loss_sum = 0.0;
      for (std::size_t s = 0; s < used_shards; ++s) {
        total.add(shard_grads[s]);
        loss_sum += shard_loss[s];
      }
      BatchRecord rec;
      rec.epoch = epoch;
      rec.batch = batch_no;
      rec.loss_m = loss_sum / static_cast<double>(n);
      rec.grad_norm = total.norm();

      if (!std::isfinite(rec.loss_m)) {
        const std::string dir = cfg.checkpoint_dir.empty() ? "." : cfg.checkpoint_dir;
        std::filesystem::create_directories(dir);
        const std::string dump = (std::filesystem::path(dir) / "diverged.ckpt").string();
        KeyValues meta = run_meta;
        meta.set("diverged_epoch", epoch);
        meta.set("diverged_batch", batch_no);
        save_model(dump, model, meta);
        throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no) + "; state written to " + dump);
      }
      if (rec.grad_norm > cfg.clip_norm) {
        total.scale(cfg.clip_norm / rec.grad_norm);
        rec.clipped = true;
        ++result.clipped_steps;
      }
      opt.step(model.parameters(), total.tensors);
      rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.curve.push_back(rec);
      if (log) {
        nlohmann::json j = {{"epoch", rec.epoch},         {"batch", rec.batch},     {"loss_m", rec.loss_m},
                            {"grad_norm", rec.grad_norm}, {"clipped", rec.clipped}};
        if (cfg.log_timing) j["wall_s"] = rec.wall_s;
        *log << j.dump() << '\n';
      }
    }

    if (cfg.checkpoint_interval && (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs)) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      const std::string path = checkpoint_name(cfg.checkpoint_dir, epoch);
      KeyValues meta = run_meta;
      meta.set("epoch", epoch);
      save_model(path, model, meta);
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

// -------------------------------------------------------------- evaluate

std::size_t completeness_bucket(double ratio) {
  const auto b = static_cast<std::ptrdiff_t>(std::floor(ratio * static_cast<double>(kCompletenessBuckets))) + 1;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 1, kCompletenessBuckets));
}

double EvalReport::mean_over_buckets(std::size_t first, std::size_t last) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = first; b <= last; ++b) {
    sum += buckets[b - 1].mean_m * static_cast<double>(buckets[b - 1].count);
    n += buckets[b - 1].count;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

EvalReport evaluate(const Predictor& predict, const std::vector<Example>& examples, std::size_t workers) {
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  EvalReport r;
  r.count = examples.size();
  r.errors_m.resize(examples.size());
  parallel_for(examples.size(), workers,
               [&](std::size_t i) { r.errors_m[i] = haversine(predict(examples[i]), examples[i].target); });

  std::array<double, kCompletenessBuckets> sums{};
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    total += r.errors_m[i];
    const std::size_t b = completeness_bucket(examples[i].completeness) - 1;
    sums[b] += r.errors_m[i];
    ++r.buckets[b].count;
  }
  r.mean_m = total / static_cast<double>(r.count);
  for (std::size_t b = 0; b < kCompletenessBuckets; ++b)
    if (r.buckets[b].count) r.buckets[b].mean_m = sums[b] / static_cast<double>(r.buckets[b].count);

  std::vector<double> sorted = r.errors_m;
  std::sort(sorted.begin(), sorted.end());
  r.p10_m = quantile(sorted, 0.10);
  r.p25_m = quantile(sorted, 0.25);
  r.p50_m = quantile(sorted, 0.50);
  r.p75_m = quantile(sorted, 0.75);
  r.p90_m = quantile(sorted, 0.90);
  return r;
}

EvalReport evaluate(const Model& model, const std::vector<Example>& examples, std::size_t workers) {
  return evaluate([&model](const Example& ex) { return model.predict(ex); }, examples, workers);
}

GeoPoint mean_destination(const std::vector<Trip>& trips) {
  GeoPoint m{0.0, 0.0};
  std::size_t n = 0;
  for (const Trip& t : trips) {
    if (t.points.empty()) continue;
    m.lon += t.destination().lon;
    m.lat += t.destination().lat;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mean_destination: no trips with points");
  m.lon /= static_cast<double>(n);
  m.lat /= static_cast<double>(n);
  return m;
}

void write_report_table(std::ostream& out, const EvalReport& r, const std::string& title) {
  char buf[160];
  out << title << '\n';
  std::snprintf(buf, sizeof buf, "  examples %zu   mean %.1f m   p10 %.1f  p25 %.1f  p50 %.1f  p75 %.1f  p90 %.1f\n",
                r.count, r.mean_m, r.p10_m, r.p25_m, r.p50_m, r.p75_m, r.p90_m);
  out << buf;
  out << "  completeness   count    mean error (m)\n";
  for (std::size_t b = 0; b < kCompletenessBuckets; ++b) {
    if (r.buckets[b].count)
      std::snprintf(buf, sizeof buf, "  [%.1f, %.1f%c   %6zu    %10.1f\n", 0.1 * static_cast<double>(b),
                    0.1 * static_cast<double>(b + 1), b + 1 == kCompletenessBuckets ? ']' : ')', r.buckets[b].count,
                    r.buckets[b].mean_m);
    else
      std::snprintf(buf, sizeof buf, "  [%.1f, %.1f%c   %6zu             -\n", 0.1 * static_cast<double>(b),
                    0.1 * static_cast<double>(b + 1), b + 1 == kCompletenessBuckets ? ']' : ')', r.buckets[b].count);
    out << buf;
  }
}

std::string report_json(const EvalReport& r) {
  nlohmann::json buckets = nlohmann::json::array();
  for (std::size_t b = 0; b < kCompletenessBuckets; ++b)
    buckets.push_back({{"bucket", b + 1},
                       {"lo", 0.1 * static_cast<double>(b)},
                       {"hi", 0.1 * static_cast<double>(b + 1)},
                       {"count", r.buckets[b].count},
                       {"mean_m", r.buckets[b].mean_m}});
  nlohmann::json j = {{"count", r.count},
                      {"mean_m", r.mean_m},
                      {"quantiles_m", {{"p10", r.p10_m}, {"p25", r.p25_m}, {"p50", r.p50_m}, {"p75", r.p75_m}, {"p90", r.p90_m}}},
                      {"buckets", buckets}};
  return j.dump();
}

}  // namespace tconv
