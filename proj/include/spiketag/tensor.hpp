#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spiketag/error.hpp"

namespace spiketag {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

enum class CheckMode { checked, unchecked };

// Dense row-major array of rank 0..3.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data, CheckMode mode = CheckMode::checked)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                           std::to_string(shape_size(shape_)) +
                           " values, got " + std::to_string(data_.size()));
    }
    if (mode == CheckMode::checked) {
      for (const T& x : data_) {
        if (!std::isfinite(x)) throw NumericError("non-finite tensor value");
      }
    }
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T x) { return std::isfinite(x); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T x) { return static_cast<U>(x); });
    return Tensor<U>(shape_, std::move(out), CheckMode::unchecked);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_rank() const {
    if (shape_.size() > 3) {
      throw DimensionError("tensor rank " + std::to_string(shape_.size()) +
                           " exceeds 3");
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// Output length of a 1-D convolution.
inline std::size_t conv_output_length(std::size_t length, std::size_t kernel,
                                      std::size_t padding, std::size_t stride) {
  if (stride == 0) throw ConfigError("convolution stride must be >= 1");
  if (kernel == 0) throw ConfigError("convolution kernel must be >= 1");
  if (padding >= kernel) {
    throw ConfigError("convolution padding " + std::to_string(padding) +
                      " must be smaller than kernel " + std::to_string(kernel));
  }
  if (kernel > length + 2 * padding) {
    throw DimensionError("kernel " + std::to_string(kernel) +
                         " longer than padded sequence " +
                         std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

namespace detail {

// [Cout x Cin x K] -> [Cin x K x Cout], so the output-channel loop is
// contiguous.
template <typename T>
std::vector<T> kernels_channel_last(const Tensor<T>& kernels) {
  const std::size_t cout = kernels.dim(0), cin = kernels.dim(1),
                    k = kernels.dim(2);
  std::vector<T> out(kernels.size());
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t l = 0; l < cin; ++l)
      for (std::size_t m = 0; m < k; ++m)
        out[(l * k + m) * cout + o] = kernels(o, l, m);
  return out;
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernels) {
  require(input.rank() == 3, "conv input must be rank 3 [B x R x Cin], got " +
                                 shape_string(input.shape()));
  require(kernels.rank() == 3,
          "conv kernels must be rank 3 [Cout x Cin x K], got " +
              shape_string(kernels.shape()));
  require(kernels.dim(1) == input.dim(2),
          "conv kernel input channels " + std::to_string(kernels.dim(1)) +
              " != input channels " + std::to_string(input.dim(2)));
}

}  // namespace detail

// Cross-correlation over the sequence axis with zero padding:
// out[i,j,k] = sum_l sum_m in[i, j*stride+m-padding, l] * W[k,l,m] + bias[k].
// Each output accumulates in (l, m) order, then adds the bias. Zero inputs are
// skipped, which leaves the sum unchanged.
template <typename T>
Tensor<T> conv1d_same(const Tensor<T>& input, const Tensor<T>& kernels,
                      const Tensor<T>& bias, std::size_t padding,
                      std::size_t stride) {
  detail::check_conv_shapes(input, kernels);
  const std::size_t batch = input.dim(0), len = input.dim(1),
                    cin = input.dim(2);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  require(bias.size() == cout, "conv bias length " +
                                   std::to_string(bias.size()) +
                                   " != output channels " +
                                   std::to_string(cout));
  const std::size_t out_len = conv_output_length(len, k, padding, stride);
  const std::vector<T> w = detail::kernels_channel_last(kernels);

  Tensor<T> out({batch, out_len, cout});
  std::vector<T> acc(cout);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out_len; ++j) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t l = 0; l < cin; ++l) {
        for (std::size_t m = 0; m < k; ++m) {
          const std::ptrdiff_t pos =
              static_cast<std::ptrdiff_t>(j * stride + m) -
              static_cast<std::ptrdiff_t>(padding);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
          const T x = input(b, static_cast<std::size_t>(pos), l);
          if (x == T{0}) continue;
          const T* wr = &w[(l * k + m) * cout];
          for (std::size_t o = 0; o < cout; ++o) acc[o] += x * wr[o];
        }
      }
      T* dst = &out(b, j, 0);
      for (std::size_t o = 0; o < cout; ++o) dst[o] = acc[o] + bias[o];
    }
  }
  return out;
}

// Adjoint of conv1d_same with respect to its input (bias excluded).
template <typename T>
Tensor<T> conv1d_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernels,
                            std::size_t input_length, std::size_t padding,
                            std::size_t stride) {
  require(grad_out.rank() == 3 && kernels.rank() == 3,
          "conv1d_input_grad needs rank-3 operands");
  const std::size_t batch = grad_out.dim(0), out_len = grad_out.dim(1),
                    cout = grad_out.dim(2);
  const std::size_t cin = kernels.dim(1), k = kernels.dim(2);
  require(kernels.dim(0) == cout, "conv1d_input_grad channel mismatch");
  // [K x Cout x Cin] so each output channel adds a contiguous row.
  std::vector<T> w(kernels.size());
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t l = 0; l < cin; ++l)
      for (std::size_t m = 0; m < k; ++m)
        w[(m * cout + o) * cin + l] = kernels(o, l, m);

  Tensor<T> grad_in({batch, input_length, cin});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const T* g = &grad_out(b, j, 0);
      for (std::size_t m = 0; m < k; ++m) {
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(j * stride + m) -
            static_cast<std::ptrdiff_t>(padding);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(input_length))
          continue;
        T* dst = &grad_in(b, static_cast<std::size_t>(pos), 0);
        for (std::size_t o = 0; o < cout; ++o) {
          if (g[o] == T{0}) continue;
          const T* wr = &w[(m * cout + o) * cin];
          for (std::size_t l = 0; l < cin; ++l) dst[l] += g[o] * wr[l];
        }
      }
    }
  }
  return grad_in;
}

// Accumulates dL/dW for conv1d_same into `grad_kernels` [Cout x Cin x K].
template <typename T>
void conv1d_kernel_grad_accumulate(const Tensor<T>& input,
                                   const Tensor<T>& grad_out,
                                   std::size_t padding, std::size_t stride,
                                   Tensor<T>& grad_kernels) {
  const std::size_t batch = input.dim(0), len = input.dim(1),
                    cin = input.dim(2);
  const std::size_t out_len = grad_out.dim(1), cout = grad_out.dim(2);
  const std::size_t k = grad_kernels.dim(2);
  require(grad_kernels.dim(0) == cout && grad_kernels.dim(1) == cin,
          "conv kernel gradient shape mismatch");
  std::vector<T> acc(cin * k * cout, T{0});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const T* g = &grad_out(b, j, 0);
      for (std::size_t l = 0; l < cin; ++l) {
        for (std::size_t m = 0; m < k; ++m) {
          const std::ptrdiff_t pos =
              static_cast<std::ptrdiff_t>(j * stride + m) -
              static_cast<std::ptrdiff_t>(padding);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
          const T x = input(b, static_cast<std::size_t>(pos), l);
          if (x == T{0}) continue;
          T* dst = &acc[(l * k + m) * cout];
          for (std::size_t o = 0; o < cout; ++o) dst[o] += x * g[o];
        }
      }
    }
  }
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t l = 0; l < cin; ++l)
      for (std::size_t m = 0; m < k; ++m)
        grad_kernels(o, l, m) += acc[(l * k + m) * cout + o];
}

// out[u] = sum_v weight[u,v] * input[v] + bias[u]
template <typename T>
Tensor<T> affine(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require(input.rank() == 1 && weight.rank() == 2 && bias.rank() == 1,
          "affine expects rank-1 input, rank-2 weight, rank-1 bias");
  require(weight.dim(1) == input.dim(0),
          "affine weight columns " + std::to_string(weight.dim(1)) +
              " != input length " + std::to_string(input.dim(0)));
  require(weight.dim(0) == bias.dim(0),
          "affine weight rows " + std::to_string(weight.dim(0)) +
              " != bias length " + std::to_string(bias.dim(0)));
  Tensor<T> out({weight.dim(0)});
  for (std::size_t u = 0; u < weight.dim(0); ++u) {
    T s{0};
    for (std::size_t v = 0; v < weight.dim(1); ++v) s += weight(u, v) * input[v];
    out[u] = s + bias[u];
  }
  return out;
}

// Max-shifted softmax over a contiguous span, written to `out`.
template <typename T>
void softmax_into(std::span<const T> logits, std::span<T> out) {
  T peak = logits[0];
  for (T x : logits) {
    if (!std::isfinite(x)) throw NumericError("softmax of non-finite logit");
    peak = std::max(peak, x);
  }
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (T& x : out) x /= sum;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require(logits.rank() == 1 && logits.size() > 0,
          "softmax expects a non-empty rank-1 tensor");
  Tensor<T> out(logits.shape());
  softmax_into<T>(logits.values(), out.values());
  return out;
}

}  // namespace spiketag
