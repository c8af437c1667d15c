#include "tconv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tconv {
namespace {

// Eight fixed interleaved lanes, reduced in a fixed order: vectorizes without
// reassociation and is deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double lane[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t l = 0; l < 8; ++l) lane[l] += a[j + l] * b[j + l];
  double tail = 0.0;
  for (; j < n; ++j) tail += a[j] * b[j];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

void glorot(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

void check_accumulator(const Tensor* t, const Tensor& like, const char* what) {
  if (t && t->shape() != like.shape())
    throw std::invalid_argument(std::string(what) + " gradient has shape " + to_string(t->shape()) +
                                ", expected " + to_string(like.shape()));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Activation act)
    : weight_({out_channels, in_channels, kernel, kernel}), bias_({out_channels}), act_(act) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("conv2d: need at least one channel");
}

void Conv2d::initialize(Rng& rng) {
  const std::size_t k2 = kernel() * kernel();
  glorot(weight_, in_channels() * k2, out_channels() * k2, rng);
  bias_.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& input, Cache* cache) const {
  if (input.rank() != 3 || input.dim(0) != in_channels())
    throw std::invalid_argument("conv2d: input shape " + to_string(input.shape()) + " does not match " +
                                std::to_string(in_channels()) + " input channels");
  const std::size_t cin = in_channels(), cout = out_channels(), k = kernel();
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t h = input.dim(1), w = input.dim(2);
  const auto hs = static_cast<std::ptrdiff_t>(h), ws = static_cast<std::ptrdiff_t>(w);
  Tensor out({cout, h, w});
  const double* in = input.data();
  const double* wt = weight_.data();

  // Every output element sums its taps in (in-channel, kernel row, kernel
  // column) order, then adds the bias.
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double* plane = out.data() + oc * h * w;
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const double* src_plane = in + ic * h * w;
      for (std::size_t kh = 0; kh < k; ++kh) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(kh) - r;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(hs, hs - dy);
        for (std::size_t kw = 0; kw < k; ++kw) {
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kw) - r;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(ws, ws - dx);
          const double coef = wt[((oc * cin + ic) * k + kh) * k + kw];
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* src = src_plane + (y + dy) * ws + dx;
            double* dst = plane + y * ws;
            for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += coef * src[x];
          }
        }
      }
    }
    const double b = bias_[oc];
    for (std::size_t i = 0; i < h * w; ++i) {
      double v = plane[i] + b;
      if (act_ == Activation::relu) v = std::max(v, 0.0);
      else if (act_ == Activation::tanh) v = std::tanh(v);
      plane[i] = v;
    }
  }
  if (cache) {
    cache->input = input;
    cache->output = out;
  }
  return out;
}

Tensor Conv2d::backward(const Cache& cache, const Tensor& grad_output, Tensor* d_weight, Tensor* d_bias,
                        bool input_grad) const {
  if (grad_output.shape() != cache.output.shape())
    throw std::invalid_argument("conv2d: gradient shape does not match the cached forward pass");
  check_accumulator(d_weight, weight_, "conv2d weight");
  check_accumulator(d_bias, bias_, "conv2d bias");
  const std::size_t cin = in_channels(), cout = out_channels(), k = kernel();
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t h = cache.input.dim(1), w = cache.input.dim(2);
  const auto hs = static_cast<std::ptrdiff_t>(h), ws = static_cast<std::ptrdiff_t>(w);

  Tensor pre_grad = grad_output;
  if (act_ == Activation::relu) {
    for (std::size_t i = 0; i < pre_grad.size(); ++i)
      if (!(cache.output[i] > 0.0)) pre_grad[i] = 0.0;
  } else if (act_ == Activation::tanh) {
    for (std::size_t i = 0; i < pre_grad.size(); ++i) pre_grad[i] *= 1.0 - cache.output[i] * cache.output[i];
  }

  Tensor grad_input(cache.input.shape());
  const double* in = cache.input.data();
  const double* wt = weight_.data();
  // Per-column partial sums keep the weight-gradient reduction vectorizable.
  std::vector<double> partial(w);
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const double* g = pre_grad.data() + oc * h * w;
    if (d_bias) {
      double s = 0.0;
      for (std::size_t i = 0; i < h * w; ++i) s += g[i];
      (*d_bias)[oc] += s;
    }
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const double* src_plane = in + ic * h * w;
      double* gin_plane = grad_input.data() + ic * h * w;
      for (std::size_t kh = 0; kh < k; ++kh) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(kh) - r;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(hs, hs - dy);
        for (std::size_t kw = 0; kw < k; ++kw) {
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kw) - r;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(ws, ws - dx);
          const std::size_t widx = ((oc * cin + ic) * k + kh) * k + kw;
          const double coef = wt[widx];
          if (d_weight) {
            std::fill(partial.begin(), partial.end(), 0.0);
            for (std::ptrdiff_t y = y0; y < y1; ++y) {
              const double* src = src_plane + (y + dy) * ws + dx;
              const double* gy = g + y * ws;
              for (std::ptrdiff_t x = x0; x < x1; ++x) partial[x] += gy[x] * src[x];
            }
            double acc = 0.0;
            for (std::ptrdiff_t x = x0; x < x1; ++x) acc += partial[x];
            (*d_weight)[widx] += acc;
          }
          if (input_grad) {
            for (std::ptrdiff_t y = y0; y < y1; ++y) {
              double* gin = gin_plane + (y + dy) * ws + dx;
              const double* gy = g + y * ws;
              for (std::ptrdiff_t x = x0; x < x1; ++x) gin[x] += coef * gy[x];
            }
          }
        }
      }
    }
  }
  return grad_input;
}

// ------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::size_t pool) : pool_(pool) {
  if (pool == 0) throw std::invalid_argument("maxpool2d: pool size must be at least 1");
}

Shape MaxPool2d::output_shape(const Shape& input) const {
  if (input.size() != 3) throw std::invalid_argument("maxpool2d: expected a C x H x W input");
  if (pool_ > input[1] && pool_ > input[2])
    throw std::invalid_argument("maxpool2d: pool size " + std::to_string(pool_) + " exceeds input " +
                                to_string(input));
  return {input[0], input[1] / pool_, input[2] / pool_};
}

Tensor MaxPool2d::forward(const Tensor& input, Cache* cache) const {
  const Shape os = output_shape(input.shape());
  const std::size_t ch = os[0], oh = os[1], ow = os[2];
  const std::size_t h = input.dim(1), w = input.dim(2);
  Tensor out(os);
  std::vector<std::uint32_t> argmax(out.size());
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best_idx = (c * h + oy * pool_) * w + ox * pool_;
        double best = input[best_idx];
        for (std::size_t dy = 0; dy < pool_; ++dy) {
          for (std::size_t dx = 0; dx < pool_; ++dx) {
            const std::size_t idx = (c * h + oy * pool_ + dy) * w + ox * pool_ + dx;
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(argmax);
  }
  return out;
}

Tensor MaxPool2d::backward(const Cache& cache, const Tensor& grad_output) const {
  if (grad_output.size() != cache.argmax.size())
    throw std::invalid_argument("maxpool2d: gradient shape does not match the cached forward pass");
  Tensor grad_input(cache.input_shape);
  for (std::size_t o = 0; o < grad_output.size(); ++o) grad_input[cache.argmax[o]] += grad_output[o];
  return grad_input;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t main_inputs, std::size_t side_inputs, std::size_t outputs, Activation act)
    : weight_({outputs, main_inputs}), side_weight_({outputs, side_inputs}), bias_({outputs}), act_(act) {
  if (outputs == 0) throw std::invalid_argument("dense: need at least one output");
  if (act == Activation::relu) throw std::invalid_argument("dense: relu is not supported");
}

void Dense::initialize(Rng& rng) {
  const std::size_t fan_in = main_inputs() + side_inputs();
  glorot(weight_, fan_in, outputs(), rng);
  glorot(side_weight_, fan_in, outputs(), rng);
  bias_.fill(0.0);
}

std::vector<double> Dense::forward(std::span<const double> main, std::span<const double> side, Cache* cache) const {
  if (main.size() != main_inputs() || side.size() != side_inputs())
    throw std::invalid_argument("dense: inputs of length " + std::to_string(main.size()) + "+" +
                                std::to_string(side.size()) + " do not match weights " +
                                std::to_string(main_inputs()) + "+" + std::to_string(side_inputs()));
  const std::size_t n = main.size(), m = side.size();
  std::vector<double> out(outputs());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* wr = weight_.data() + i * n;
    const double* vr = side_weight_.data() + i * m;
    double acc = dot(wr, main.data(), n) + dot(vr, side.data(), m);
    acc += bias_[i];
    out[i] = act_ == Activation::tanh ? std::tanh(acc) : acc;
  }
  if (cache) {
    cache->main.assign(main.begin(), main.end());
    cache->side.assign(side.begin(), side.end());
    cache->output = out;
  }
  return out;
}

void Dense::backward(const Cache& cache, std::span<const double> grad_output, const Grads& grads,
                     std::span<double> grad_main, std::span<double> grad_side) const {
  if (grad_output.size() != outputs()) throw std::invalid_argument("dense: gradient length mismatch");
  check_accumulator(grads.weight, weight_, "dense weight");
  check_accumulator(grads.side_weight, side_weight_, "dense side weight");
  check_accumulator(grads.bias, bias_, "dense bias");
  const std::size_t n = main_inputs(), m = side_inputs();
  if (!grad_main.empty() && grad_main.size() != n) throw std::invalid_argument("dense: grad_main length mismatch");
  if (!grad_side.empty() && grad_side.size() != m) throw std::invalid_argument("dense: grad_side length mismatch");
  for (std::size_t i = 0; i < outputs(); ++i) {
    double g = grad_output[i];
    if (act_ == Activation::tanh) g *= 1.0 - cache.output[i] * cache.output[i];
    if (g == 0.0) continue;
    if (grads.bias) (*grads.bias)[i] += g;
    const double* wr = weight_.data() + i * n;
    const double* vr = side_weight_.data() + i * m;
    if (grads.weight) {
      double* dw = grads.weight->data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dw[j] += g * cache.main[j];
    }
    if (grads.side_weight) {
      double* dv = grads.side_weight->data() + i * m;
      for (std::size_t j = 0; j < m; ++j) dv[j] += g * cache.side[j];
    }
    if (!grad_main.empty())
      for (std::size_t j = 0; j < n; ++j) grad_main[j] += g * wr[j];
    if (!grad_side.empty())
      for (std::size_t j = 0; j < m; ++j) grad_side[j] += g * vr[j];
  }
}

// ------------------------------------------------------------- Embedding

Embedding::Embedding(std::size_t rows, std::size_t dim) : table_({rows, dim}) {
  if (rows == 0) throw std::invalid_argument("embedding: need at least one row");
}

void Embedding::initialize(Rng& rng) {
  for (double& v : table_.values()) v = rng.uniform(-0.05, 0.05);
}

std::span<const double> Embedding::lookup(std::size_t index) const {
  if (index >= rows())
    throw std::out_of_range("embedding: index " + std::to_string(index) + " outside table of " +
                            std::to_string(rows()) + " rows");
  return {table_.data() + index * dim(), dim()};
}

void Embedding::backward(std::size_t index, std::span<const double> grad_row, Tensor& d_table) const {
  if (index >= rows()) throw std::out_of_range("embedding: index outside table");
  if (grad_row.size() != dim() || d_table.shape() != table_.shape())
    throw std::invalid_argument("embedding: gradient shape mismatch");
  double* row = d_table.data() + index * dim();
  for (std::size_t j = 0; j < dim(); ++j) row[j] += grad_row[j];
}

// ---------------------------------------------------------- CentroidHead

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> w(logits.size());
  if (logits.empty()) return w;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(logits[i] - top);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

CentroidHead::CentroidHead(std::vector<GeoPoint> centers) : centers_(std::move(centers)) {
  if (centers_.empty()) throw std::invalid_argument("centroid head: no cluster centers");
}

GeoPoint CentroidHead::forward(std::span<const double> logits, Cache* cache) const {
  if (logits.size() != centers_.size())
    throw std::invalid_argument("centroid head: " + std::to_string(logits.size()) + " logits for " +
                                std::to_string(centers_.size()) + " centers");
  std::vector<double> w = softmax(logits);
  GeoPoint p{0.0, 0.0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    p.lon += w[i] * centers_[i].lon;
    p.lat += w[i] * centers_[i].lat;
  }
  if (cache) {
    cache->weights = std::move(w);
    cache->output = p;
  }
  return p;
}

std::vector<double> CentroidHead::backward(const Cache& cache, double grad_lon, double grad_lat) const {
  std::vector<double> g(centers_.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = cache.weights[i] *
           (grad_lon * (centers_[i].lon - cache.output.lon) + grad_lat * (centers_[i].lat - cache.output.lat));
  return g;
}

}  // namespace tconv
