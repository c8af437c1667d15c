#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tconv/geo.hpp"
#include "tconv/rng.hpp"
#include "tconv/tensor.hpp"

namespace tconv {

enum class Activation { identity, relu, tanh };

/// Stride-1 convolution over C x H x W inputs with zero "same" padding and
/// an odd square kernel, followed by an activation.
class Conv2d {
 public:
  struct Cache {
    Tensor input;
    Tensor output;  // post-activation; relu/tanh derivatives are read from it
  };

  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Activation act);

  std::size_t in_channels() const { return weight_.dim(1); }
  std::size_t out_channels() const { return weight_.dim(0); }
  std::size_t kernel() const { return weight_.dim(2); }
  Activation activation() const { return act_; }

  Tensor& weight() { return weight_; }  // out x in x k x k
  const Tensor& weight() const { return weight_; }
  Tensor& bias() { return bias_; }  // out
  const Tensor& bias() const { return bias_; }

  /// Glorot-uniform weights, zero bias.
  void initialize(Rng& rng);

  Tensor forward(const Tensor& input, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients into d_weight/d_bias when given and
  /// returns the gradient with respect to the input.
  /// With `input_grad` false the returned input gradient is left at zero.
  Tensor backward(const Cache& cache, const Tensor& grad_output, Tensor* d_weight, Tensor* d_bias,
                  bool input_grad = true) const;

 private:
  Tensor weight_;
  Tensor bias_;
  Activation act_;
};

/// Non-overlapping t x t max pooling; trailing rows and columns that do
/// not fill a block are dropped. Backward routes each gradient to the first
/// maximum of its block in row-major order.
class MaxPool2d {
 public:
  struct Cache {
    Shape input_shape;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
  };

  explicit MaxPool2d(std::size_t pool);

  std::size_t pool() const { return pool_; }
  Shape output_shape(const Shape& input) const;

  Tensor forward(const Tensor& input, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& grad_output) const;

 private:
  std::size_t pool_;
};

/// out_i = act(sum_j W_ij main_j + sum_j W'_ij side_j + b_i).
/// The side input may be empty.
class Dense {
 public:
  struct Cache {
    std::vector<double> main;
    std::vector<double> side;
    std::vector<double> output;
  };
  struct Grads {
    Tensor* weight = nullptr;
    Tensor* side_weight = nullptr;
    Tensor* bias = nullptr;
  };

  Dense(std::size_t main_inputs, std::size_t side_inputs, std::size_t outputs, Activation act);

  std::size_t main_inputs() const { return weight_.dim(1); }
  std::size_t side_inputs() const { return side_weight_.dim(1); }
  std::size_t outputs() const { return weight_.dim(0); }

  Tensor& weight() { return weight_; }  // outputs x main
  const Tensor& weight() const { return weight_; }
  Tensor& side_weight() { return side_weight_; }  // outputs x side
  const Tensor& side_weight() const { return side_weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& bias() const { return bias_; }

  void initialize(Rng& rng);

  std::vector<double> forward(std::span<const double> main, std::span<const double> side,
                              Cache* cache = nullptr) const;

  /// Accumulates parameter gradients (null members are skipped) and writes
  /// input gradients to grad_main/grad_side when those are non-empty.
  void backward(const Cache& cache, std::span<const double> grad_output, const Grads& grads,
                std::span<double> grad_main, std::span<double> grad_side) const;

 private:
  Tensor weight_;
  Tensor side_weight_;
  Tensor bias_;
  Activation act_;
};

/// Lookup table with one learnable row per category value.
class Embedding {
 public:
  Embedding(std::size_t rows, std::size_t dim);

  std::size_t rows() const { return table_.dim(0); }
  std::size_t dim() const { return table_.dim(1); }
  Tensor& table() { return table_; }
  const Tensor& table() const { return table_; }

  /// Uniform(-0.05, 0.05).
  void initialize(Rng& rng);

  /// Throws std::out_of_range for an index outside the table.
  std::span<const double> lookup(std::size_t index) const;
  void backward(std::size_t index, std::span<const double> grad_row, Tensor& d_table) const;

 private:
  Tensor table_;
};

/// Softmax-weighted sum of fixed cluster centers.
class CentroidHead {
 public:
  struct Cache {
    std::vector<double> weights;  // softmax of the logits
    GeoPoint output;
  };

  explicit CentroidHead(std::vector<GeoPoint> centers);

  const std::vector<GeoPoint>& centers() const { return centers_; }
  std::size_t size() const { return centers_.size(); }

  GeoPoint forward(std::span<const double> logits, Cache* cache = nullptr) const;
  /// d loss / d logits given d loss / d (lon, lat) of the output.
  std::vector<double> backward(const Cache& cache, double grad_lon, double grad_lat) const;

 private:
  std::vector<GeoPoint> centers_;
};

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace tconv
