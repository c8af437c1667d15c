#include "tconv/model.hpp"

#include <cmath>
#include <stdexcept>

namespace tconv {
namespace {

constexpr const char* kStageNames[] = {"l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8"};

Variant parse_variant(const std::string& s) {
  if (s == "basic") return Variant::basic;
  if (s == "local_enhancement" || s == "le") return Variant::local_enhancement;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

NormReference parse_reference(const std::string& s) {
  if (s == "city") return NormReference::city;
  if (s == "window") return NormReference::window;
  throw std::invalid_argument("unknown le_norm '" + s + "'");
}

}  // namespace

const char* to_string(Variant v) { return v == Variant::basic ? "basic" : "local_enhancement"; }
const char* to_string(NormReference r) { return r == NormReference::city ? "city" : "window"; }

// ----------------------------------------------------------- ModelConfig

ModelConfig ModelConfig::basic() { return ModelConfig{}; }

ModelConfig ModelConfig::local_enhancement() {
  ModelConfig c;
  c.variant = Variant::local_enhancement;
  c.grid_m = 30;
  c.cell_width_m = 100.0;
  return c;
}

void ModelConfig::validate() const {
  if (grid_m == 0) throw std::invalid_argument("model config: grid_m must be positive");
  if (kernel % 2 == 0) throw std::invalid_argument("model config: kernel must be odd");
  if (pool == 0) throw std::invalid_argument("model config: pool must be at least 1");
  if (conv1_channels == 0 || conv2_channels == 0)
    throw std::invalid_argument("model config: conv channels must be positive");
  if (!(cell_width_m > 0.0)) throw std::invalid_argument("model config: cell_width_m must be positive");
  if (!(bbox_northeast.lon > bbox_southwest.lon) || !(bbox_northeast.lat > bbox_southwest.lat))
    throw std::invalid_argument("model config: empty bounding box");
  if (grid_m / pool / pool == 0)
    throw std::invalid_argument("model config: grid_m " + std::to_string(grid_m) +
                                " vanishes after two pools of " + std::to_string(pool));
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("variant", to_string(variant));
  kv.set("grid_m", grid_m);
  kv.set("cell_width_m", cell_width_m);
  kv.set("bbox_min_lon", bbox_southwest.lon);
  kv.set("bbox_min_lat", bbox_southwest.lat);
  kv.set("bbox_max_lon", bbox_northeast.lon);
  kv.set("bbox_max_lat", bbox_northeast.lat);
  kv.set("le_norm", to_string(le_norm));
  kv.set("conv1_channels", conv1_channels);
  kv.set("conv2_channels", conv2_channels);
  kv.set("kernel", kernel);
  kv.set("pool", pool);
  kv.set("dense_width", dense_width);
  kv.set("embedding_dim", embedding_dim);
  kv.set("cluster_file", cluster_file);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  const Variant v = parse_variant(kv.get_string("variant", "basic"));
  ModelConfig c = v == Variant::basic ? basic() : local_enhancement();
  c.grid_m = kv.get_size("grid_m", c.grid_m);
  c.cell_width_m = kv.get_double("cell_width_m", c.cell_width_m);
  c.bbox_southwest = {kv.get_double("bbox_min_lon", c.bbox_southwest.lon),
                      kv.get_double("bbox_min_lat", c.bbox_southwest.lat)};
  c.bbox_northeast = {kv.get_double("bbox_max_lon", c.bbox_northeast.lon),
                      kv.get_double("bbox_max_lat", c.bbox_northeast.lat)};
  c.le_norm = parse_reference(kv.get_string("le_norm", to_string(c.le_norm)));
  c.conv1_channels = kv.get_size("conv1_channels", c.conv1_channels);
  c.conv2_channels = kv.get_size("conv2_channels", c.conv2_channels);
  c.kernel = kv.get_size("kernel", c.kernel);
  c.pool = kv.get_size("pool", c.pool);
  c.dense_width = kv.get_size("dense_width", c.dense_width);
  c.embedding_dim = kv.get_size("embedding_dim", c.embedding_dim);
  c.cluster_file = kv.get_string("cluster_file", c.cluster_file);
  c.validate();
  return c;
}

const std::set<std::string>& ModelConfig::keys() {
  static const std::set<std::string> k = {
      "variant",        "grid_m",         "cell_width_m", "bbox_min_lon", "bbox_min_lat",
      "bbox_max_lon",   "bbox_max_lat",   "le_norm",      "conv1_channels", "conv2_channels",
      "kernel",         "pool",           "dense_width",  "embedding_dim", "cluster_file"};
  return k;
}

// ---------------------------------------------------------- FeatureStack

FeatureStack::FeatureStack(std::vector<Stage> stages) : stages_(std::move(stages)) {}

Shape FeatureStack::output_shape(std::size_t layer, const Shape& input) const {
  if (layer < 1 || layer > depth()) throw std::out_of_range("feature layer " + std::to_string(layer) + " out of range");
  Shape s = input;
  for (std::size_t i = 0; i < layer; ++i) {
    if (const auto* conv = std::get_if<Conv2d>(&stages_[i])) {
      if (s.size() != 3 || s[0] != conv->in_channels())
        throw std::invalid_argument("feature stack: stage " + std::to_string(i + 1) + " expects " +
                                    std::to_string(conv->in_channels()) + " channels, got " + to_string(s));
      s[0] = conv->out_channels();
    } else {
      s = std::get<MaxPool2d>(stages_[i]).output_shape(s);
    }
  }
  return s;
}

Tensor FeatureStack::forward(const Tensor& input, Trace* trace, std::size_t upto) const {
  if (upto == 0) upto = depth();
  if (upto > depth()) throw std::out_of_range("feature stack: layer beyond depth");
  if (trace) {
    trace->caches.clear();
    trace->outputs.clear();
  }
  Tensor x = input;
  for (std::size_t i = 0; i < upto; ++i) {
    if (const auto* conv = std::get_if<Conv2d>(&stages_[i])) {
      if (trace) {
        Conv2d::Cache c;
        x = conv->forward(x, &c);
        trace->caches.emplace_back(std::move(c));
      } else {
        x = conv->forward(x);
      }
    } else {
      const auto& pool = std::get<MaxPool2d>(stages_[i]);
      if (trace) {
        MaxPool2d::Cache c;
        x = pool.forward(x, &c);
        trace->caches.emplace_back(std::move(c));
      } else {
        x = pool.forward(x);
      }
    }
    if (trace) trace->outputs.push_back(x);
  }
  return x;
}

Tensor FeatureStack::backward(const Trace& trace, std::size_t layer, Tensor grad,
                              std::span<const ConvGrads> grads, bool input_grad) const {
  if (layer < 1 || layer > trace.caches.size())
    throw std::logic_error("feature stack: backward without a forward pass to layer " + std::to_string(layer));
  if (!grads.empty() && grads.size() != depth()) throw std::invalid_argument("feature stack: gradient slot count");
  for (std::size_t i = layer; i-- > 0;) {
    if (const auto* conv = std::get_if<Conv2d>(&stages_[i])) {
      const ConvGrads slot = grads.empty() ? ConvGrads{} : grads[i];
      grad = conv->backward(std::get<Conv2d::Cache>(trace.caches[i]), grad, slot.weight, slot.bias,
                            input_grad || i > 0);
    } else {
      grad = std::get<MaxPool2d>(stages_[i]).backward(std::get<MaxPool2d::Cache>(trace.caches[i]), grad);
    }
  }
  return grad;
}

std::vector<std::uint32_t> branch_signature(const FeatureStack& stack, const FeatureStack::Trace& trace) {
  std::vector<std::uint32_t> sig;
  for (std::size_t i = 0; i < trace.caches.size(); ++i) {
    if (const auto* c = std::get_if<Conv2d::Cache>(&trace.caches[i])) {
      if (std::get<Conv2d>(stack.stage(i)).activation() != Activation::relu) continue;
      for (double v : c->output.values()) sig.push_back(v > 0.0);
    } else {
      const auto& p = std::get<MaxPool2d::Cache>(trace.caches[i]);
      sig.insert(sig.end(), p.argmax.begin(), p.argmax.end());
    }
  }
  return sig;
}

// ------------------------------------------------------------- Gradients

void Gradients::zero() {
  for (Tensor& t : tensors) t.fill(0.0);
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto a = tensors[i].values();
    auto b = other.tensors[i].values();
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
  }
}

void Gradients::scale(double s) {
  for (Tensor& t : tensors)
    for (double& v : t.values()) v *= s;
}

double Gradients::norm() const {
  double s = 0.0;
  for (const Tensor& t : tensors)
    for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// ----------------------------------------------------------------- Model

namespace {

FeatureStack make_features(const ModelConfig& c) {
  c.validate();
  std::vector<FeatureStack::Stage> stages;
  stages.emplace_back(Conv2d(c.input_channels(), c.conv1_channels, c.kernel, Activation::relu));
  stages.emplace_back(MaxPool2d(c.pool));
  stages.emplace_back(Conv2d(c.conv1_channels, c.conv2_channels, c.kernel, Activation::relu));
  stages.emplace_back(MaxPool2d(c.pool));
  return FeatureStack(std::move(stages));
}

std::size_t flat_size(const ModelConfig& c) {
  const std::size_t s = c.grid_m / c.pool / c.pool;
  return c.conv2_channels * s * s;
}

}  // namespace

Model::Model(ModelConfig config, ClusterSet clusters, std::uint64_t seed)
    : config_(std::move(config)),
      clusters_(std::move(clusters)),
      grid_(Grid::from_bounds(config_.bbox_southwest, config_.bbox_northeast, config_.grid_m, config_.grid_m)),
      features_(make_features(config_)),
      l5_(flat_size(config_), config_.embedding_dim * kMetaFieldCount,
          config_.dense_width ? config_.dense_width : clusters_.centers.size(), Activation::tanh),
      head_(clusters_.centers) {
  if (config_.dense_width) logits_.emplace(config_.dense_width, 0, clusters_.centers.size(), Activation::identity);
  if (config_.embedding_dim)
    for (std::size_t f = 0; f < kMetaFieldCount; ++f) embeddings_.emplace_back(kMetaCardinality[f], config_.embedding_dim);

  const Shape f4 = features_.output_shape(4, input_shape());
  if (element_count(f4) != l5_.main_inputs())
    throw std::logic_error("model: flattened feature size does not match L5");

  Rng rng(seed);
  for (std::size_t i = 0; i < features_.depth(); ++i)
    if (auto* conv = std::get_if<Conv2d>(&features_.stage(i))) conv->initialize(rng);
  for (Embedding& e : embeddings_) e.initialize(rng);
  l5_.initialize(rng);
  if (logits_) logits_->initialize(rng);
}

Shape Model::input_shape() const { return {config_.input_channels(), config_.grid_m, config_.grid_m}; }
std::size_t Model::flatten_length() const { return l5_.main_inputs(); }
std::size_t Model::side_length() const { return l5_.side_inputs(); }

void Model::collect(std::vector<std::string>* names, std::vector<Tensor*>* ptrs) {
  auto add = [&](std::string name, Tensor& t) {
    if (names) names->push_back(std::move(name));
    if (ptrs) ptrs->push_back(&t);
  };
  for (std::size_t i = 0; i < features_.depth(); ++i) {
    if (auto* conv = std::get_if<Conv2d>(&features_.stage(i))) {
      add(std::string(kStageNames[i]) + ".weight", conv->weight());
      add(std::string(kStageNames[i]) + ".bias", conv->bias());
    }
  }
  for (std::size_t f = 0; f < embeddings_.size(); ++f)
    add(std::string("embed.") + kMetaFieldNames[f], embeddings_[f].table());
  add("l5.weight", l5_.weight());
  add("l5.side_weight", l5_.side_weight());
  add("l5.bias", l5_.bias());
  if (logits_) {
    add("logits.weight", logits_->weight());
    add("logits.side_weight", logits_->side_weight());
    add("logits.bias", logits_->bias());
  }
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  const_cast<Model*>(this)->collect(&names, nullptr);
  return names;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> ptrs;
  collect(nullptr, &ptrs);
  return ptrs;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<Tensor*> ptrs;
  const_cast<Model*>(this)->collect(nullptr, &ptrs);
  return {ptrs.begin(), ptrs.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

Gradients Model::make_gradients() const {
  Gradients g;
  for (const Tensor* t : parameters()) g.tensors.emplace_back(t->shape());
  return g;
}

void Model::load_parameters(const std::vector<Tensor>& values) {
  auto ptrs = parameters();
  if (values.size() != ptrs.size())
    throw std::invalid_argument("model: expected " + std::to_string(ptrs.size()) + " parameter tensors, got " +
                                std::to_string(values.size()));
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    if (values[i].shape() != ptrs[i]->shape())
      throw std::invalid_argument("model: parameter " + std::to_string(i) + " has shape " +
                                  to_string(values[i].shape()) + ", expected " + to_string(ptrs[i]->shape()));
    *ptrs[i] = values[i];
  }
}

Tensor Model::encode(std::span<const GeoPoint> prefix) const {
  if (config_.variant == Variant::basic) return rasterize_basic(prefix, grid_).pixels;
  LocalStackOptions opt;
  opt.m = config_.grid_m;
  opt.cell_width_m = config_.cell_width_m;
  opt.reference = config_.le_norm;
  opt.city_frame = {config_.bbox_southwest.lon, config_.bbox_northeast.lon, config_.bbox_southwest.lat,
                    config_.bbox_northeast.lat};
  return stack_le(prefix, opt).pixels;
}

GeoPoint Model::forward(const Tensor& input, const Metadata& meta, Cache* cache) const {
  if (input.shape() != input_shape())
    throw std::invalid_argument("model: input shape " + to_string(input.shape()) + ", expected " +
                                to_string(input_shape()));
  std::vector<double> side;
  side.reserve(side_length());
  for (std::size_t f = 0; f < embeddings_.size(); ++f) {
    auto row = embeddings_[f].lookup(meta[f]);
    side.insert(side.end(), row.begin(), row.end());
  }

  const Tensor s = features_.forward(input, cache ? &cache->features : nullptr);
  std::vector<double> hidden = l5_.forward(s.values(), side, cache ? &cache->l5 : nullptr);
  if (logits_) hidden = logits_->forward(hidden, {}, cache ? &cache->logits : nullptr);
  const GeoPoint p = head_.forward(hidden, cache ? &cache->head : nullptr);
  if (cache) {
    cache->side = std::move(side);
    cache->meta = meta;
  }
  return p;
}

Tensor Model::backward(const Cache& cache, double grad_lon, double grad_lat, Gradients* grads,
                       bool input_grad) const {
  if (cache.features.caches.size() != features_.depth())
    throw std::logic_error("model: backward called without a recorded forward pass");
  std::vector<Tensor> none;
  std::vector<Tensor>& g = grads ? grads->tensors : none;
  std::size_t slot = 0;
  auto next = [&]() -> Tensor* { return grads ? &g.at(slot++) : nullptr; };

  std::vector<FeatureStack::ConvGrads> conv_slots(features_.depth());
  for (std::size_t i = 0; i < features_.depth(); ++i) {
    if (std::holds_alternative<Conv2d>(features_.stage(i))) {
      conv_slots[i].weight = next();
      conv_slots[i].bias = next();
    }
  }
  std::vector<Tensor*> embed_slots;
  for (std::size_t f = 0; f < embeddings_.size(); ++f) embed_slots.push_back(next());
  Dense::Grads l5_slots{next(), next(), next()};
  Dense::Grads logit_slots;
  if (logits_) logit_slots = {next(), next(), next()};

  std::vector<double> grad_hidden = head_.backward(cache.head, grad_lon, grad_lat);
  if (logits_) {
    std::vector<double> grad_l5(l5_.outputs(), 0.0);
    logits_->backward(cache.logits, grad_hidden, logit_slots, grad_l5, {});
    grad_hidden = std::move(grad_l5);
  }
  Tensor grad_s(features_.output_shape(features_.depth(), input_shape()));
  std::vector<double> grad_side(side_length(), 0.0);
  l5_.backward(cache.l5, grad_hidden, l5_slots, grad_s.values(), grad_side);

  if (grads) {
    const std::size_t dim = config_.embedding_dim;
    for (std::size_t f = 0; f < embeddings_.size(); ++f)
      embeddings_[f].backward(cache.meta[f], std::span<const double>(grad_side).subspan(f * dim, dim),
                              *embed_slots[f]);
  }
  return features_.backward(cache.features, features_.depth(), std::move(grad_s),
                            grads ? std::span<const FeatureStack::ConvGrads>(conv_slots)
                                  : std::span<const FeatureStack::ConvGrads>(),
                            input_grad);
}

GeoPoint Model::predict(std::span<const GeoPoint> prefix, const Metadata& meta) const {
  return forward(encode(prefix), meta);
}

GeoPoint Model::predict(const Example& ex) const { return predict(ex.prefix, ex.meta); }

HaversineGrad destination_loss(const GeoPoint& pred, const GeoPoint& target) {
  return haversine_with_grad(pred, target, 1.0);
}

}  // namespace tconv
