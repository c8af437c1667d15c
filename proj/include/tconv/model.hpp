#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tconv/cluster.hpp"
#include "tconv/ingest.hpp"
#include "tconv/kvconfig.hpp"
#include "tconv/layers.hpp"
#include "tconv/raster.hpp"

namespace tconv {

enum class Variant { basic, local_enhancement };

const char* to_string(Variant v);
const char* to_string(NormReference r);

struct ModelConfig {
  Variant variant = Variant::basic;
  /// Basic: rows/cols of the global grid over the bounding box.
  /// Local enhancement: rows/cols of each local window.
  std::size_t grid_m = 64;
  /// Local enhancement window cell width in meters.
  double cell_width_m = 100.0;
  /// Global grid extent (Basic) and city normalization frame (local).
  GeoPoint bbox_southwest = kPortoSouthwest;
  GeoPoint bbox_northeast = kPortoNortheast;
  NormReference le_norm = NormReference::city;
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t kernel = 3;
  std::size_t pool = 2;
  /// Width of the tanh layer L5. With 0, L5 itself emits one tanh output
  /// per cluster center; otherwise a linear layer maps L5 to the logits.
  std::size_t dense_width = 256;
  /// Embedding width per metadata field; 0 drops the metadata input.
  std::size_t embedding_dim = 10;
  std::string cluster_file;

  static ModelConfig basic();
  static ModelConfig local_enhancement();

  std::size_t input_channels() const { return variant == Variant::basic ? 1 : 4; }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  KeyValues to_kv() const;
  /// Reads the model keys of `kv`; absent keys keep the variant defaults.
  static ModelConfig from_kv(const KeyValues& kv);
  static const std::set<std::string>& keys();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The conv/pool feature extractor L1..L4 (or any other stage list).
class FeatureStack {
 public:
  using Stage = std::variant<Conv2d, MaxPool2d>;
  using StageCache = std::variant<Conv2d::Cache, MaxPool2d::Cache>;

  struct Trace {
    std::vector<StageCache> caches;
    std::vector<Tensor> outputs;  // outputs[i] = F^(i+1)
  };

  /// Conv gradient slots, one per stage (null for pooling stages).
  struct ConvGrads {
    Tensor* weight = nullptr;
    Tensor* bias = nullptr;
  };

  explicit FeatureStack(std::vector<Stage> stages);

  std::size_t depth() const { return stages_.size(); }
  const Stage& stage(std::size_t i) const { return stages_.at(i); }
  Stage& stage(std::size_t i) { return stages_.at(i); }

  /// Shape of F^(layer) for the given input shape, 1 <= layer <= depth.
  Shape output_shape(std::size_t layer, const Shape& input) const;

  /// Runs stages 1..upto (default: all) and records them in `trace`.
  Tensor forward(const Tensor& input, Trace* trace, std::size_t upto = 0) const;

  /// Back-propagates `grad` (d/d F^(layer)) to the input. `grads` is
  /// either empty or has one entry per stage.
  /// With `input_grad` false the first stage skips its input gradient and
  /// the returned tensor is not meaningful.
  Tensor backward(const Trace& trace, std::size_t layer, Tensor grad, std::span<const ConvGrads> grads,
                  bool input_grad = true) const;

 private:
  std::vector<Stage> stages_;
};

/// Discrete choices recorded in a trace: ReLU activity per conv output
/// and the argmax of every pooling block. Gradient checks use it to detect
/// perturbations that cross a kink.
std::vector<std::uint32_t> branch_signature(const FeatureStack& stack, const FeatureStack::Trace& trace);

/// Gradient buffers aligned with Model::parameters().
struct Gradients {
  std::vector<Tensor> tensors;

  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double norm() const;
};

/// T-CONV network: L1 conv -> L2 pool -> L3 conv -> L4 pool -> flatten S,
/// metadata embeddings S' -> L5 tanh dense [-> linear logits] -> softmax over
/// cluster centers -> weighted center sum.
class Model {
 public:
  struct Cache {
    FeatureStack::Trace features;
    std::vector<double> side;  // S'
    Dense::Cache l5;
    Dense::Cache logits;
    CentroidHead::Cache head;
    Metadata meta{};
  };

  /// Builds the network and initializes parameters from `seed`.
  Model(ModelConfig config, ClusterSet clusters, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ClusterSet& clusters() const { return clusters_; }
  const FeatureStack& features() const { return features_; }
  const CentroidHead& head() const { return head_; }
  const Dense& l5() const { return l5_; }
  /// Linear output layer; absent when dense_width == 0.
  const Dense* logits_layer() const { return logits_ ? &*logits_ : nullptr; }

  Shape input_shape() const;
  std::size_t flatten_length() const;
  std::size_t side_length() const;

  std::vector<std::string> parameter_names() const;
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
  Gradients make_gradients() const;

  /// Rasterizes a prefix into the network input.
  Tensor encode(std::span<const GeoPoint> prefix) const;

  GeoPoint forward(const Tensor& input, const Metadata& meta, Cache* cache = nullptr) const;

  /// Given d loss / d (lon, lat) of the prediction, accumulates parameter
  /// gradients into `grads` (if given) and returns d loss / d input.
  /// Pass `input_grad` false when only parameter gradients are needed.
  Tensor backward(const Cache& cache, double grad_lon, double grad_lat, Gradients* grads,
                  bool input_grad = true) const;

  GeoPoint predict(const Example& ex) const;
  GeoPoint predict(std::span<const GeoPoint> prefix, const Metadata& meta) const;

  /// Replaces all parameter values (shapes must match).
  void load_parameters(const std::vector<Tensor>& values);

 private:
  void collect(std::vector<std::string>* names, std::vector<Tensor*>* ptrs);

  ModelConfig config_;
  ClusterSet clusters_;
  Grid grid_;
  FeatureStack features_;
  std::vector<Embedding> embeddings_;
  Dense l5_;
  std::optional<Dense> logits_;
  CentroidHead head_;
};

/// Training loss: haversine distance in meters with its gradient. The
/// gradient is zero below 1 m, where the distance is not differentiable.
HaversineGrad destination_loss(const GeoPoint& pred, const GeoPoint& target);

}  // namespace tconv
