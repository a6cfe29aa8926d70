#pragma once

// Minimal differentiable kernel: dense, 2d cross-correlation, ReLU, max pool,
// global average pool, softmax and cross-entropy. Every op has a free forward
// function, a free backward function, and a small caching layer wrapper.
// Tensors are row-major; images are NCHW.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "b2i/error.hpp"
#include "b2i/rng.hpp"
#include "b2i/tensor.hpp"

namespace b2i::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
struct LayerGrads {
  std::vector<Tensor<T>> params;  // same order as the layer's parameters
  Tensor<T> input;
};

/// Fan-in scaled uniform init, bound sqrt(6 / fan_in).
template <typename T>
void init_fan_in_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(uniform_real(rng, -bound, bound));
}

// ---------------------------------------------------------------- dense

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 ||
      x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
    throw ShapeError("dense: x " + shape_string(x.shape()) + ", w " +
                     shape_string(w.shape()) + ", b " +
                     shape_string(b.shape()) + " do not agree");
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(w.dim(0));
  Tensor<T> out({x.dim(0), w.dim(0)});
  ConstMatMap<T> X(x.ptr(), batch, in);
  ConstMatMap<T> W(w.ptr(), out_dim, in);
  MatMap<T> Y(out.ptr(), batch, out_dim);
  Y.noalias() = X * W.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b.ptr(), out_dim);
  Y.rowwise() += B;
  return out;
}

/// Returns {dW, db} in params and dx in input.
template <typename T>
LayerGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w,
                             const Tensor<T>& grad_out) {
  if (grad_out.rank() != 2 || grad_out.dim(0) != x.dim(0) ||
      grad_out.dim(1) != w.dim(0)) {
    throw ShapeError("dense backward: upstream gradient " +
                     shape_string(grad_out.shape()) + " does not match");
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(w.dim(0));
  ConstMatMap<T> X(x.ptr(), batch, in);
  ConstMatMap<T> W(w.ptr(), out_dim, in);
  ConstMatMap<T> G(grad_out.ptr(), batch, out_dim);
  LayerGrads<T> g;
  g.params.emplace_back(w.shape());
  g.params.emplace_back(Shape{w.dim(0)});
  MatMap<T>(g.params[0].ptr(), out_dim, in).noalias() = G.transpose() * X;
  T* db = g.params[1].ptr();
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index o = 0; o < out_dim; ++o) db[o] += G(b, o);
  g.input = Tensor<T>(x.shape());
  MatMap<T>(g.input.ptr(), batch, in).noalias() = G * W;
  return g;
}

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel,
                                std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// One sample [C,H,W] → columns [C·kh·kw, Ho·Wo].
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, ConvGeometry g, std::size_t ho,
            std::size_t wo, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* dst = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst + oy * wo, dst + (oy + 1) * wo, T{0});
            continue;
          }
          const T* src_row = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
            dst[oy * wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                    ? T{0}
                                    : src_row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, ConvGeometry g, std::size_t ho,
            std::size_t wo, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* src = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst_row = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst_row[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& k,
                       ConvGeometry g) {
  if (x.rank() != 4 || k.rank() != 4 || x.dim(1) != k.dim(1)) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) +
                     " and kernel " + shape_string(k.shape()) +
                     " do not agree");
  }
  if (g.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (k.dim(2) > x.dim(2) + 2 * g.pad || k.dim(3) > x.dim(3) + 2 * g.pad) {
    throw ShapeError("conv2d: kernel " + shape_string(k.shape()) +
                     " larger than padded input " + shape_string(x.shape()));
  }
}

}  // namespace detail

/// Cross-correlation. x [B,C,H,W], k [F,C,kh,kw], b [F] → [B,F,Ho,Wo].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& k,
                         const Tensor<T>& b, ConvGeometry g = {}) {
  detail::check_conv_shapes(x, k, g);
  if (b.rank() != 1 || b.dim(0) != k.dim(0)) {
    throw ShapeError("conv2d: bias " + shape_string(b.shape()) +
                     " does not match kernel count");
  }
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = conv_out_dim(h, kh, g.stride, g.pad);
  const std::size_t wo = conv_out_dim(w, kw, g.stride, g.pad);
  const std::size_t patch = c * kh * kw, pixels = ho * wo;
  Tensor<T> out({batch, f, ho, wo});
  std::vector<T> col(patch * pixels);
  ConstMatMap<T> K(k.ptr(), static_cast<Eigen::Index>(f),
                   static_cast<Eigen::Index>(patch));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(
      b.ptr(), static_cast<Eigen::Index>(f));
  for (std::size_t s = 0; s < batch; ++s) {
    detail::im2col(x.ptr() + s * c * h * w, c, h, w, kh, kw, g, ho, wo,
                   col.data());
    ConstMatMap<T> Col(col.data(), static_cast<Eigen::Index>(patch),
                       static_cast<Eigen::Index>(pixels));
    MatMap<T> Y(out.ptr() + s * f * pixels, static_cast<Eigen::Index>(f),
                static_cast<Eigen::Index>(pixels));
    Y.noalias() = K * Col;
    Y.colwise() += B;
  }
  return out;
}

/// Returns {dk, db} in params and dx in input.
template <typename T>
LayerGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& k,
                              const Tensor<T>& grad_out, ConvGeometry g = {}) {
  detail::check_conv_shapes(x, k, g);
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = conv_out_dim(h, kh, g.stride, g.pad);
  const std::size_t wo = conv_out_dim(w, kw, g.stride, g.pad);
  require_shape(grad_out, {batch, f, ho, wo}, "conv2d backward upstream");
  const std::size_t patch = c * kh * kw, pixels = ho * wo;
  const auto fi = static_cast<Eigen::Index>(f);
  const auto pi = static_cast<Eigen::Index>(patch);
  const auto ni = static_cast<Eigen::Index>(pixels);

  LayerGrads<T> g_out;
  g_out.params.emplace_back(k.shape());
  g_out.params.emplace_back(Shape{f});
  g_out.input = Tensor<T>(x.shape());
  MatMap<T> dK(g_out.params[0].ptr(), fi, pi);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dB(g_out.params[1].ptr(), fi);
  ConstMatMap<T> K(k.ptr(), fi, pi);
  std::vector<T> col(patch * pixels);
  std::vector<T> dcol(patch * pixels);
  for (std::size_t s = 0; s < batch; ++s) {
    detail::im2col(x.ptr() + s * c * h * w, c, h, w, kh, kw, g, ho, wo,
                   col.data());
    ConstMatMap<T> Col(col.data(), pi, ni);
    ConstMatMap<T> G(grad_out.ptr() + s * f * pixels, fi, ni);
    dK.noalias() += G * Col.transpose();
    for (Eigen::Index o = 0; o < fi; ++o) {
      T acc = 0;
      for (Eigen::Index p = 0; p < ni; ++p) acc += G(o, p);
      dB[o] += acc;
    }
    MatMap<T> dCol(dcol.data(), pi, ni);
    dCol.noalias() = K.transpose() * G;
    detail::col2im(dcol.data(), c, h, w, kh, kw, g, ho, wo,
                   g_out.input.ptr() + s * c * h * w);
  }
  return g_out;
}

// ---------------------------------------------------------------- relu

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

/// Gradient passes where the input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) {
    throw ShapeError("relu backward: shapes differ");
  }
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    dx[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return dx;
}

// ---------------------------------------------------------------- max pool

template <typename T>
struct MaxPoolResult {
  Tensor<T> out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool2d_forward(const Tensor<T>& x, std::size_t size,
                                   std::size_t stride) {
  if (x.rank() != 4 || size == 0 || stride == 0 || size > x.dim(2) ||
      size > x.dim(3)) {
    throw ShapeError("maxpool2d: window does not fit input " +
                     shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h - size) / stride + 1, wo = (w - size) / stride + 1;
  MaxPoolResult<T> r{Tensor<T>({batch, c, ho, wo}),
                     std::vector<std::size_t>(batch * c * ho * wo)};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < batch * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t dy = 0; dy < size; ++dy)
          for (std::size_t dx = 0; dx < size; ++dx) {
            const std::size_t idx =
                base + (oy * stride + dy) * w + ox * stride + dx;
            if (x[idx] > x[best]) best = idx;
          }
        r.out[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& input_shape,
                             std::span<const std::size_t> argmax,
                             const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2d backward: cache does not match gradient");
  }
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax[o]] += grad_out[o];
  return dx;
}

// ---------------------------------------------------------------- global average pool

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) {
    throw ShapeError("global_avg_pool: expected NCHW, got " +
                     shape_string(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc{0};
    for (std::size_t i = 0; i < area; ++i) acc += x[p * area + i];
    out[p] = acc / static_cast<T>(area);
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape,
                                   const Tensor<T>& grad_out) {
  if (input_shape.size() != 4 ||
      grad_out.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool backward: shapes differ");
  }
  const std::size_t area = input_shape[2] * input_shape[3];
  Tensor<T> dx(input_shape);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T v = grad_out[p] / static_cast<T>(area);
    std::fill(dx.ptr() + p * area, dx.ptr() + (p + 1) * area, v);
  }
  return dx;
}

// ---------------------------------------------------------------- softmax / cross-entropy

/// Row-wise, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected [B, K]");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.ptr() + r * k;
    T* out = p.ptr() + r * k;
    const T mx = *std::max_element(in, in + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) sum += out[j] = std::exp(in[j] - mx);
    for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
  }
  return p;
}

namespace detail {
template <typename T>
void check_labels(const Tensor<T>& logits,
                  std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits.shape()));
  }
  for (std::uint32_t y : labels) {
    if (y >= logits.dim(1)) {
      throw LabelError("label " + std::to_string(y) + " >= class count " +
                       std::to_string(logits.dim(1)));
    }
  }
}
}  // namespace detail

/// Mean negative log-likelihood over the batch.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const std::uint32_t> labels) {
  detail::check_labels(logits, labels);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.ptr() + r * k;
    const T mx = *std::max_element(in, in + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(in[j] - mx);
    total += std::log(sum) + mx - in[labels[r]];
  }
  return total / static_cast<T>(rows);
}

template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& logits,
                                 std::span<const std::uint32_t> labels) {
  detail::check_labels(logits, labels);
  Tensor<T> g = softmax(logits);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  const T scale = T{1} / static_cast<T>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    g[r * k + labels[r]] -= T{1};
    for (std::size_t j = 0; j < k; ++j) g[r * k + j] *= scale;
  }
  return g;
}

// ---------------------------------------------------------------- caching layers

namespace detail {
template <typename C>
const auto& require_cache(const std::optional<C>& cache, const char* layer) {
  if (!cache) {
    throw StateError(std::string(layer) +
                     ": backward called without a forward cache");
  }
  return *cache;
}
}  // namespace detail

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : weight(Shape{out, in}), bias(Shape{out}) {}

  void init(Rng& rng) {
    init_fan_in_uniform(weight, weight.dim(1), rng);
    bias.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    cache_ = x;
    return dense_forward(x, weight, bias);
  }

  LayerGrads<T> backward(const Tensor<T>& grad_out) const {
    return dense_backward(detail::require_cache(cache_, "dense"), weight,
                          grad_out);
  }

  void clear_cache() { cache_.reset(); }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  std::optional<Tensor<T>> cache_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         ConvGeometry geometry)
      : weight(Shape{out_channels, in_channels, kernel, kernel}),
        bias(Shape{out_channels}),
        geometry_(geometry) {}

  void init(Rng& rng) {
    init_fan_in_uniform(weight, weight.dim(1) * weight.dim(2) * weight.dim(3),
                        rng);
    bias.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    cache_ = x;
    return conv2d_forward(x, weight, bias, geometry_);
  }

  LayerGrads<T> backward(const Tensor<T>& grad_out) const {
    return conv2d_backward(detail::require_cache(cache_, "conv2d"), weight,
                           grad_out, geometry_);
  }

  void clear_cache() { cache_.reset(); }
  ConvGeometry geometry() const noexcept { return geometry_; }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  ConvGeometry geometry_{};
  std::optional<Tensor<T>> cache_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    cache_ = x;
    return relu_forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) const {
    return relu_backward(detail::require_cache(cache_, "relu"), grad_out);
  }
  void clear_cache() { cache_.reset(); }

 private:
  std::optional<Tensor<T>> cache_;
};

template <typename T>
class MaxPool2d {
 public:
  MaxPool2d(std::size_t size, std::size_t stride) : size_(size), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x) {
    auto r = maxpool2d_forward(x, size_, stride_);
    cache_ = Cache{x.shape(), std::move(r.argmax)};
    return std::move(r.out);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) const {
    const auto& c = detail::require_cache(cache_, "maxpool2d");
    return maxpool2d_backward(c.input_shape, std::span(c.argmax), grad_out);
  }

 private:
  struct Cache {
    Shape input_shape;
    std::vector<std::size_t> argmax;
  };
  std::size_t size_;
  std::size_t stride_;
  std::optional<Cache> cache_;
};

template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    cache_ = x.shape();
    return global_avg_pool_forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) const {
    return global_avg_pool_backward(
        detail::require_cache(cache_, "global_avg_pool"), grad_out);
  }
  void clear_cache() { cache_.reset(); }

 private:
  std::optional<Shape> cache_;
};

// ---------------------------------------------------------------- gradient check

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Central finite differences against analytic gradients, elementwise.
/// `loss()` evaluates the scalar loss at the current parameter values and
/// `analytic()` returns one gradient tensor per parameter, in order. The
/// relative error is |a - f| / max(|a|, |f|, floor); the floor keeps entries
/// whose true gradient is zero from dividing by noise.
template <typename LossFn, typename GradFn>
GradCheckReport grad_check(const std::vector<NamedParam<double>>& params,
                           LossFn&& loss, GradFn&& analytic,
                           double tolerance = 1e-3, double step = 1e-5,
                           double floor = 1e-6) {
  const std::vector<Tensor<double>> grads = analytic();
  if (grads.size() != params.size()) {
    throw ShapeError("grad_check: " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p].tensor;
    require_shape(grads[p], t.shape(), "grad_check gradient");
    GradCheckEntry entry{params[p].name};
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + step;
      const double up = loss();
      t[i] = saved - step;
      const double down = loss();
      t[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double a = grads[p][i];
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      if (rel > entry.max_rel_error || !std::isfinite(rel)) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = std::isfinite(report.max_rel_error) &&
                  report.max_rel_error < tolerance;
  return report;
}

}  // namespace b2i::nn
