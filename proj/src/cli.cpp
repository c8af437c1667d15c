#include "tconv/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tconv/checkpoint.hpp"
#include "tconv/cluster.hpp"
#include "tconv/errors.hpp"
#include "tconv/ingest.hpp"
#include "tconv/raster.hpp"
#include "tconv/rng.hpp"
#include "tconv/saliency.hpp"
#include "tconv/trainer.hpp"

namespace tconv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Keys understood by the pipeline itself rather than the model or trainer.
const std::set<std::string>& pipeline_keys() {
  static const std::set<std::string> k = {"test_fraction", "split_seed", "bandwidth_m", "max_seeds"};
  return k;
}

KeyValues pipeline_defaults() {
  KeyValues kv;
  kv.set("test_fraction", 0.1);
  kv.set("split_seed", std::size_t{1});
  kv.set("bandwidth_m", 500.0);
  kv.set("max_seeds", std::size_t{20000});
  return kv;
}

std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
  if (!fs::is_regular_file(path)) throw MissingFileError("no such file: " + path);
  std::ifstream in(path, mode);
  if (!in) throw MissingFileError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Common flags: several subcommands accept the same names.
struct Options {
  std::string data, config, checkpoint, clusters, out, log, examples, save_examples, manifest;
  std::string predictor = "model";
  std::string polyline;
  std::vector<std::string> trip_ids;
  std::size_t limit = 0, sample = 0, layer = 4;
  double cut = 1.0;
  std::int64_t timestamp = 1372636800, taxi = 20000001, stand = 0;
  std::string call_type = "C";
};

// A flag that overrides a config key when given.
struct Override {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

class Resolver {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    overrides_.push_back({key, "", nullptr});
    overrides_.back().option = app->add_option(flag, overrides_.back().value, help);
  }

  // Defaults < config file < flags.
  KeyValues resolve(const std::string& config_path, const KeyValues& defaults) const {
    KeyValues kv = defaults;
    if (!config_path.empty()) {
      std::ifstream in = open_input(config_path);
      const KeyValues file = KeyValues::parse(in);
      std::set<std::string> known = ModelConfig::keys();
      known.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
      known.insert(pipeline_keys().begin(), pipeline_keys().end());
      const auto unknown = file.unknown_keys(known);
      if (!unknown.empty()) throw SchemaError("config " + config_path + ": unknown key '" + *unknown.begin() + "'");
      kv.merge(file);
    }
    for (const Override& o : overrides_)
      if (o.option->count()) kv.set(o.key, o.value);
    return kv;
  }

 private:
  std::list<Override> overrides_;
};

struct Manifest {
  std::string subcommand;
  KeyValues config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  void write(const std::string& path) const {
    json j;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = json::object();
    for (const auto& [k, v] : config.entries()) j["config"][k] = v;
    auto files = [](const std::vector<std::string>& paths) {
      json arr = json::array();
      for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_file(p)}});
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    open_output(path) << j.dump(2) << '\n';
  }
};

std::string manifest_path(const Options& o, const std::string& artifact, bool is_dir) {
  if (!o.manifest.empty()) return o.manifest;
  return is_dir ? (fs::path(artifact) / "manifest.json").string() : artifact + ".manifest.json";
}

std::vector<Trip> read_trips(const std::string& path, std::size_t limit, std::ostream& err) {
  std::ifstream in = open_input(path);
  ParseResult r = parse_trips(in, limit ? std::optional<std::size_t>(limit) : std::nullopt);
  if (!r.errors.empty()) {
    err << json{{"warning", "malformed rows skipped"}, {"count", r.errors.size()},
                {"first_line", r.errors.front().line}, {"first_message", r.errors.front().message}}
               .dump()
        << '\n';
  }
  return std::move(r.trips);
}

std::vector<Trip> trainable(std::vector<Trip> trips) {
  std::erase_if(trips, [](const Trip& t) { return !is_trainable(t); });
  return trips;
}

// The training side of the deterministic split, or every trip when the
// test fraction is zero.
Split split_trips(const std::vector<Trip>& trips, const KeyValues& kv) {
  const double frac = kv.get_double("test_fraction", 0.1);
  if (frac == 0.0) return Split{trips, {}};
  return split(trips, kv.get_u64("split_seed", 1), frac);
}

ClusterSet cluster_destinations(const std::vector<Trip>& trips, const KeyValues& kv, std::uint64_t seed) {
  std::vector<GeoPoint> dests;
  dests.reserve(trips.size());
  for (const Trip& t : trips) dests.push_back(t.destination());
  MeanShiftOptions ms;
  ms.bandwidth_m = kv.get_double("bandwidth_m", ms.bandwidth_m);
  ms.max_seeds = kv.get_size("max_seeds", ms.max_seeds);
  ms.seed = seed;
  return mean_shift(dests, ms);
}

const Trip& find_trip(const std::vector<Trip>& trips, const std::string& id) {
  for (const Trip& t : trips)
    if (t.trip_id == id) return t;
  throw std::invalid_argument("trip " + id + " not found");
}

std::string fixed7(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

// ---------------------------------------------------------------- cluster

int cmd_cluster(const Options& o, const Resolver& r, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  KeyValues kv = r.resolve(o.config, pipeline_defaults());
  const std::vector<Trip> trips = split_trips(trainable(read_trips(o.data, o.limit, err)), kv).train;
  const ClusterSet cs = cluster_destinations(trips, kv, seed);
  {
    std::ofstream f = open_output(o.out);
    write_clusters(f, cs);
  }
  KeyValues used;
  for (const char* k : {"test_fraction", "split_seed", "bandwidth_m", "max_seeds"}) used.set(k, *kv.get(k));
  Manifest{"cluster", used, {o.data}, {o.out}, seed}.write(manifest_path(o, o.out, false));
  out << cs.centers.size() << " centers from " << cs.source_count << " destinations\n";
  return kOk;
}

// -------------------------------------------------------------- rasterize

int cmd_rasterize(const Options& o, const Resolver& r, std::ostream& out, std::ostream& err) {
  const KeyValues kv = r.resolve(o.config, {});
  const ModelConfig mc = ModelConfig::from_kv(kv);
  const std::vector<Trip> all = trainable(read_trips(o.data, 0, err));
  std::vector<const Trip*> chosen;
  if (!o.trip_ids.empty()) {
    for (const auto& id : o.trip_ids) chosen.push_back(&find_trip(all, id));
  } else {
    const std::size_t n = o.limit ? std::min(o.limit, all.size()) : all.size();
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(&all[i]);
  }
  if (!(o.cut > 0.0 && o.cut <= 1.0)) throw std::invalid_argument("--cut must lie in (0, 1]");

  fs::create_directories(o.out);
  std::vector<std::string> outputs;
  auto emit = [&](const Tensor& img, std::size_t channel, const std::string& stem, double lo, double hi) {
    const std::string txt = (fs::path(o.out) / (stem + ".txt")).string();
    const std::string pgm = (fs::path(o.out) / (stem + ".pgm")).string();
    {
      std::ofstream f = open_output(txt);
      write_text_grid(f, img, channel);
    }
    {
      std::ofstream f = open_output(pgm, std::ios::binary);
      write_pgm(f, img, channel, lo, hi);
    }
    outputs.push_back(txt);
    outputs.push_back(pgm);
  };
  const Model shape_only(mc, ClusterSet{{GeoPoint{}}, 0.0, 1}, 0);
  static const char* kLocalChannels[4] = {"start_lat", "start_lon", "end_lat", "end_lon"};
  for (const Trip* t : chosen) {
    const Example ex = make_example(*t, o.cut);
    const Tensor img = shape_only.encode(ex.prefix);
    if (mc.variant == Variant::basic) {
      emit(img, 0, t->trip_id, 0.0, 1.0);
    } else {
      for (std::size_t c = 0; c < 4; ++c) emit(img, c, t->trip_id + "_" + kLocalChannels[c], -1.0, 1.0);
    }
  }
  Manifest{"rasterize", mc.to_kv(), {o.data}, outputs, 0}.write(manifest_path(o, o.out, true));
  out << chosen.size() << " trajectories rasterized into " << o.out << '\n';
  return kOk;
}

// ------------------------------------------------------------------ train

int cmd_train(const Options& o, const Resolver& r, std::ostream& out, std::ostream& err) {
  const KeyValues kv = r.resolve(o.config, pipeline_defaults());
  ModelConfig mc = ModelConfig::from_kv(kv);
  const TrainConfig tc = TrainConfig::from_kv(kv);
  const std::vector<Trip> trips = split_trips(trainable(read_trips(o.data, o.limit, err)), kv).train;

  std::vector<std::string> inputs{o.data};
  if (!o.config.empty()) inputs.push_back(o.config);
  std::string cluster_path = o.clusters.empty() ? mc.cluster_file : o.clusters;
  ClusterSet cs;
  if (!cluster_path.empty()) {
    std::ifstream in = open_input(cluster_path);
    cs = read_clusters(in);
    inputs.push_back(cluster_path);
    mc.cluster_file = cluster_path;
  } else {
    cs = cluster_destinations(trips, kv, tc.seed);
  }

  Model model(mc, cs, tc.seed);
  const std::string log_path = o.log.empty() ? o.out + ".log.ndjson" : o.log;
  TrainResult result;
  {
    std::ofstream log = open_output(log_path);
    result = train(model, trips, tc, &log);
  }
  KeyValues meta = tc.to_kv();
  for (const char* k : {"test_fraction", "split_seed", "bandwidth_m", "max_seeds"}) meta.set(k, *kv.get(k));
  meta.set("trips", trips.size());
  save_model(o.out, model, meta);

  KeyValues resolved = mc.to_kv();
  resolved.merge(meta);
  std::vector<std::string> outputs{o.out, log_path};
  outputs.insert(outputs.end(), result.checkpoints.begin(), result.checkpoints.end());
  Manifest{"train", resolved, inputs, outputs, tc.seed}.write(manifest_path(o, o.out, false));

  const double last = result.curve.empty() ? 0.0 : result.curve.back().loss_m;
  out << "trained " << to_string(mc.variant) << " on " << trips.size() << " trips, " << result.curve.size()
      << " steps, final batch loss " << format_number(last) << " m, " << result.clipped_steps << " clipped\n";
  return kOk;
}

// ------------------------------------------------------------------- eval

int cmd_eval(const Options& o, const Resolver& r, std::ostream& out, std::ostream& err) {
  const KeyValues kv = r.resolve(o.config, pipeline_defaults());
  std::vector<std::string> inputs;
  std::vector<Example> examples;
  std::vector<Trip> train_trips;
  if (!o.examples.empty()) {
    std::ifstream in = open_input(o.examples);
    examples = read_examples(in);
    inputs.push_back(o.examples);
  }
  if (!o.data.empty()) {
    Split s = split_trips(trainable(read_trips(o.data, o.limit, err)), kv);
    inputs.push_back(o.data);
    train_trips = std::move(s.train);
    if (o.examples.empty()) examples = std::move(s.test);
  }
  if (examples.empty()) throw std::invalid_argument("eval: no test examples (give --examples or --data with test_fraction > 0)");
  std::vector<std::string> outputs;
  if (!o.save_examples.empty()) {
    std::ofstream cache = open_output(o.save_examples);
    write_examples(cache, examples, "uniform(0,1] per trip");
    outputs.push_back(o.save_examples);
  }

  KeyValues used;
  used.set("predictor", o.predictor);
  EvalReport rep;
  if (o.predictor == "model") {
    if (o.checkpoint.empty()) throw std::invalid_argument("eval: --predictor model needs --checkpoint");
    open_input(o.checkpoint, std::ios::binary);
    const Model model = load_model(o.checkpoint);
    inputs.push_back(o.checkpoint);
    used.merge(model.config().to_kv());
    rep = evaluate(model, examples, kv.get_size("workers", 1));
  } else if (o.predictor == "mean") {
    if (train_trips.empty()) throw std::invalid_argument("eval: --predictor mean needs --data for training destinations");
    const GeoPoint mean = mean_destination(train_trips);
    rep = evaluate([mean](const Example&) { return mean; }, examples);
  } else {
    rep = evaluate([](const Example& ex) { return ex.target; }, examples);
  }
  if (!o.data.empty())
    for (const char* k : {"test_fraction", "split_seed"}) used.set(k, *kv.get(k));

  write_report_table(out, rep, "destination error (" + o.predictor + ")");
  if (!o.out.empty()) {
    open_output(o.out) << report_json(rep) << '\n';
    outputs.insert(outputs.begin(), o.out);
  }
  if (!o.out.empty() || !o.save_examples.empty() || !o.manifest.empty())
    Manifest{"eval", used, inputs, outputs, 0}.write(manifest_path(o, outputs.empty() ? "" : outputs.front(), false));
  return kOk;
}

// ---------------------------------------------------------------- predict

Trip trip_from_flags(const Options& o) {
  Trip t;
  t.trip_id = "query";
  t.points = parse_polyline(o.polyline);
  if (t.points.empty()) throw std::invalid_argument("predict: --polyline has no points");
  t.timestamp = o.timestamp;
  t.taxi_id = o.taxi;
  if (o.call_type == "A") t.call_type = CallType::central;
  else if (o.call_type == "B") t.call_type = CallType::stand;
  else if (o.call_type == "C") t.call_type = CallType::street;
  else throw std::invalid_argument("predict: --call-type must be A, B or C");
  if (o.stand > 0) t.origin_stand = o.stand;
  return t;
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
  open_input(o.checkpoint, std::ios::binary);
  const Model model = load_model(o.checkpoint);
  std::vector<std::string> inputs{o.checkpoint};
  std::vector<GeoPoint> prefix;
  Metadata meta{};
  if (!o.polyline.empty()) {
    const Trip t = trip_from_flags(o);
    prefix = t.points;
    meta = extract_metadata(t);
  } else {
    if (o.data.empty() || o.trip_ids.size() != 1)
      throw std::invalid_argument("predict: give --polyline, or --data with one --trip-id");
    const std::vector<Trip> trips = read_trips(o.data, 0, err);
    const Trip& t = find_trip(trips, o.trip_ids.front());
    if (t.points.empty()) throw std::invalid_argument("predict: trip " + t.trip_id + " has no points");
    if (!(o.cut > 0.0 && o.cut <= 1.0)) throw std::invalid_argument("--cut must lie in (0, 1]");
    const std::size_t k = prefix_length(t.points.size(), o.cut);
    prefix.assign(t.points.begin(), t.points.begin() + static_cast<std::ptrdiff_t>(k));
    meta = extract_metadata(t);
    inputs.push_back(o.data);
  }
  const GeoPoint p = model.predict(prefix, meta);
  const std::string line = fixed7(p.lon) + " " + fixed7(p.lat);
  out << line << '\n';
  KeyValues used = model.config().to_kv();
  used.set("cut", o.cut);
  if (!o.out.empty()) {
    open_output(o.out) << line << '\n';
    Manifest{"predict", used, inputs, {o.out}, 0}.write(manifest_path(o, o.out, false));
  } else if (!o.manifest.empty()) {
    Manifest{"predict", used, inputs, {}, 0}.write(o.manifest);
  }
  return kOk;
}

// --------------------------------------------------------------- saliency

void write_heatmap(const Tensor& magnitude, const std::string& stem, std::vector<std::string>& outputs) {
  double hi = 0.0;
  for (double v : magnitude.values()) hi = std::max(hi, v);
  {
    std::ofstream f = open_output(stem + ".txt");
    write_text_grid(f, magnitude, 0);
  }
  {
    std::ofstream f = open_output(stem + ".pgm", std::ios::binary);
    write_pgm(f, magnitude, 0, 0.0, hi > 0.0 ? hi : 1.0);
  }
  outputs.push_back(stem + ".txt");
  outputs.push_back(stem + ".pgm");
}

int cmd_saliency(const Options& o, const Resolver& r, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const KeyValues kv = r.resolve(o.config, {});
  open_input(o.checkpoint, std::ios::binary);
  const Model model = load_model(o.checkpoint);
  const std::vector<Trip> all = trainable(read_trips(o.data, o.limit, err));
  std::vector<const Trip*> chosen;
  if (!o.trip_ids.empty()) {
    for (const auto& id : o.trip_ids) chosen.push_back(&find_trip(all, id));
  } else {
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    shuffle(idx, rng);
    const std::size_t n = o.sample ? std::min(o.sample, idx.size()) : std::min<std::size_t>(100, idx.size());
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) chosen.push_back(&all[i]);
  }
  if (chosen.empty()) throw std::invalid_argument("saliency: no usable trips");

  fs::create_directories(o.out);
  std::vector<std::string> outputs;
  std::vector<std::vector<GeoPoint>> trajectories;
  for (const Trip* t : chosen) trajectories.push_back(t->points);
  // Heatmaps for explicitly requested trips, or the first few of a sample.
  const std::size_t maps = o.trip_ids.empty() ? std::min<std::size_t>(5, chosen.size()) : chosen.size();
  for (std::size_t i = 0; i < maps; ++i) {
    const Tensor image = model.encode(chosen[i]->points);
    const SaliencyMap sm = feature_input_gradient(model, image, o.layer, FeatureSelector::largest());
    const std::string stem = (fs::path(o.out) / (chosen[i]->trip_id + "_saliency")).string();
    if (model.config().variant == Variant::basic) {
      write_heatmap(sm.magnitude(), stem, outputs);
    } else {
      const std::size_t m = image.dim(1), n = image.dim(2);
      for (std::size_t w = 0; w < 2; ++w) {
        Tensor mag({1, m, n});
        for (std::size_t c = 2 * w; c < 2 * w + 2; ++c)
          for (std::size_t y = 0; y < m; ++y)
            for (std::size_t x = 0; x < n; ++x) mag.at(0, y, x) += std::abs(sm.gradient.at(c, y, x));
        write_heatmap(mag, stem + (w == 0 ? "_start" : "_end"), outputs);
      }
    }
  }

  const PortionHistogram h = portion_statistics(model, trajectories, kv.get_size("workers", 1));
  json j;
  j["shares"] = h.shares;
  j["trips_used"] = h.trips_used;
  j["trips_without_gradient"] = h.trips_without_gradient;
  j["layer"] = h.layer;
  j["aggregation"] = h.aggregation;
  j["first_plus_last_share"] = h.shares.front() + h.shares.back();
  const std::string hist_path = (fs::path(o.out) / "portions.json").string();
  open_output(hist_path) << j.dump() << '\n';
  outputs.push_back(hist_path);

  KeyValues used = model.config().to_kv();
  used.set("layer", o.layer);
  used.set("trips", chosen.size());
  Manifest{"saliency", used, {o.checkpoint, o.data}, outputs, seed}.write(manifest_path(o, o.out, true));
  out << "portion shares:";
  for (double s : h.shares) out << ' ' << fixed7(s);
  out << "\nfirst+last share " << fixed7(j["first_plus_last_share"].get<double>()) << " over " << h.trips_used
      << " trips\n";
  return kOk;
}

void report(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  static const char* kHex = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 15]);
  }
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"T-CONV taxi destination prediction pipeline", "tconv"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 runtime failure, 2 usage or invalid configuration, 3 missing input file,\n"
      "4 malformed input or unknown config key, 5 training diverged.\n"
      "Config files hold 'key = value' lines using the model and training field names; flags win.");

  Options o;
  std::uint64_t seed = 1;
  Resolver resolver;

  auto* cluster = app.add_subcommand("cluster", "Mean-shift the destinations of the training split into centers");
  auto* rasterize = app.add_subcommand("rasterize", "Write trajectory images as text grids and PGM files");
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "Report destination error on test examples");
  auto* predict = app.add_subcommand("predict", "Print the predicted destination of one prefix as 'lon lat'");
  auto* saliency = app.add_subcommand("saliency", "Input-gradient heatmaps and the time-portion histogram");

  auto data_flag = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--data", o.data, "Trip CSV in the competition schema");
    if (required) opt->required();
  };
  auto config_flag = [&](CLI::App* s) { s->add_option("--config", o.config, "Key-value config file"); };
  auto limit_flag = [&](CLI::App* s) { s->add_option("--limit", o.limit, "Read at most this many CSV rows (0 = all)"); };
  auto manifest_flag = [&](CLI::App* s) {
    s->add_option("--manifest", o.manifest, "Manifest path (default: next to the main output)");
  };
  auto split_flags = [&](CLI::App* s) {
    resolver.add(s, "--test-fraction", "test_fraction", "Share of trips held out as test examples (0 = none)");
    resolver.add(s, "--split-seed", "split_seed", "Seed of the train/test split");
  };

  data_flag(cluster, true);
  config_flag(cluster);
  limit_flag(cluster);
  manifest_flag(cluster);
  split_flags(cluster);
  cluster->add_option("--out", o.out, "Cluster file to write")->required();
  cluster->add_option("--seed", seed, "Seed for seed subsampling");
  resolver.add(cluster, "--bandwidth", "bandwidth_m", "Kernel bandwidth in meters");
  resolver.add(cluster, "--max-seeds", "max_seeds", "Subsample seeds above this count");

  data_flag(rasterize, true);
  config_flag(rasterize);
  limit_flag(rasterize);
  manifest_flag(rasterize);
  rasterize->add_option("--out", o.out, "Output directory")->required();
  rasterize->add_option("--trip-id", o.trip_ids, "Trip to rasterize (repeatable; default: first --limit trips)");
  rasterize->add_option("--cut", o.cut, "Completeness of the observed prefix, in (0, 1]");
  resolver.add(rasterize, "--variant", "variant", "basic or le");
  resolver.add(rasterize, "--grid", "grid_m", "Cells per side");
  resolver.add(rasterize, "--le-norm", "le_norm", "city or window");

  data_flag(train, true);
  config_flag(train);
  limit_flag(train);
  manifest_flag(train);
  split_flags(train);
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  train->add_option("--clusters", o.clusters, "Cluster file (default: mean-shift the training destinations)");
  train->add_option("--log", o.log, "Training log (default: <out>.log.ndjson)");
  resolver.add(train, "--seed", "seed", "Seed for initialization and batching");
  resolver.add(train, "--variant", "variant", "basic or le");
  resolver.add(train, "--epochs", "epochs", "Training epochs");
  resolver.add(train, "--batch-size", "batch_size", "Examples per step");
  resolver.add(train, "--lr", "lr", "Learning rate");
  resolver.add(train, "--momentum", "momentum", "Momentum coefficient");
  resolver.add(train, "--workers", "workers", "Gradient worker threads");
  resolver.add(train, "--checkpoint-dir", "checkpoint_dir", "Directory for periodic checkpoints");
  resolver.add(train, "--checkpoint-interval", "checkpoint_interval", "Epochs between periodic checkpoints");
  resolver.add(train, "--bandwidth", "bandwidth_m", "Mean-shift bandwidth when no cluster file is given");

  data_flag(eval, false);
  config_flag(eval);
  limit_flag(eval);
  manifest_flag(eval);
  split_flags(eval);
  eval->add_option("--examples", o.examples, "Example cache (NDJSON) to evaluate instead of the test split");
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  eval->add_option("--predictor", o.predictor, "model, mean (training-destination mean) or perfect")
      ->check(CLI::IsMember({"model", "mean", "perfect"}));
  eval->add_option("--out", o.out, "Report JSON to write");
  eval->add_option("--save-examples", o.save_examples, "Write the evaluated examples as an NDJSON cache");
  resolver.add(eval, "--workers", "workers", "Evaluation worker threads");

  predict->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  manifest_flag(predict);
  predict->add_option("--polyline", o.polyline, "Prefix as [[lon,lat],...]");
  predict->add_option("--timestamp", o.timestamp, "Trip start, unix seconds (with --polyline)");
  predict->add_option("--call-type", o.call_type, "A, B or C (with --polyline)");
  predict->add_option("--stand", o.stand, "Origin stand id, 0 = none (with --polyline)");
  predict->add_option("--taxi", o.taxi, "Taxi id (with --polyline)");
  data_flag(predict, false);
  predict->add_option("--trip-id", o.trip_ids, "Trip to take the prefix from (with --data)");
  predict->add_option("--cut", o.cut, "Completeness of the prefix taken from --data");
  predict->add_option("--out", o.out, "Also write the prediction to this file");

  saliency->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  data_flag(saliency, true);
  config_flag(saliency);
  limit_flag(saliency);
  manifest_flag(saliency);
  saliency->add_option("--out", o.out, "Output directory")->required();
  saliency->add_option("--trip-id", o.trip_ids, "Trip to explain (repeatable)");
  saliency->add_option("--sample", o.sample, "Random sample size when no --trip-id is given (default 100)");
  saliency->add_option("--seed", seed, "Seed of the random sample");
  saliency->add_option("--layer", o.layer, "Feature layer explained by the heatmaps (1-4)");
  resolver.add(saliency, "--workers", "workers", "Worker threads");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (cluster->parsed()) return cmd_cluster(o, resolver, seed, out, err);
    if (rasterize->parsed()) return cmd_rasterize(o, resolver, out, err);
    if (train->parsed()) return cmd_train(o, resolver, out, err);
    if (eval->parsed()) return cmd_eval(o, resolver, out, err);
    if (predict->parsed()) return cmd_predict(o, out, err);
    if (saliency->parsed()) return cmd_saliency(o, resolver, seed, out, err);
  } catch (const MissingFileError& e) {
    report(err, "missing_file", kMissingFile, e.what());
    return kMissingFile;
  } catch (const SchemaError& e) {
    report(err, "schema", kSchema, e.what());
    return kSchema;
  } catch (const DivergenceError& e) {
    report(err, "diverged", kDiverged, e.what());
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    report(err, "usage", kUsage, e.what());
    return kUsage;
  } catch (const std::exception& e) {
    report(err, "failure", kFailure, e.what());
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace tconv::cli
