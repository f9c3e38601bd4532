#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "spiketag/error.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

enum class SpikeMode { binary, ternary };

// Where the surrogate derivative is centred: on zero membrane potential, or on
// the firing threshold(s).
enum class Centering { zero, threshold };

inline const char* to_string(SpikeMode m) {
  return m == SpikeMode::binary ? "binary" : "ternary";
}
inline const char* to_string(Centering c) {
  return c == Centering::zero ? "zero" : "threshold";
}

inline SpikeMode parse_spike_mode(const std::string& s) {
  if (s == "binary") return SpikeMode::binary;
  if (s == "ternary") return SpikeMode::ternary;
  throw ConfigError("spike mode must be binary or ternary, got '" + s + "'");
}
inline Centering parse_centering(const std::string& s) {
  if (s == "zero") return Centering::zero;
  if (s == "threshold") return Centering::threshold;
  throw ConfigError("surrogate centering must be zero or threshold, got '" +
                    s + "'");
}

template <typename T>
constexpr T heaviside(T v) {
  return v >= T{0} ? T{1} : T{0};
}

template <typename T>
constexpr T ternary_threshold(T v, T v_thr) {
  if (v >= v_thr) return T{1};
  if (v <= -v_thr) return T{-1};
  return T{0};
}

// Spike emitted for membrane potential v.
template <typename T>
constexpr T fire(T v, T v_thr, SpikeMode mode) {
  return mode == SpikeMode::binary ? heaviside(v - v_thr)
                                   : ternary_threshold(v, v_thr);
}

// Atan(v) = arctan(pi/2 * alpha * v) / pi + 1/2, a smooth step from 0 to 1.
template <typename T>
T atan_step(T v, T alpha) {
  return std::atan(std::numbers::pi_v<T> / 2 * alpha * v) /
             std::numbers::pi_v<T> +
         T{0.5};
}

// Derivative of atan_step: alpha/2 / (1 + (pi/2 * alpha * v)^2).
template <typename T>
T surrogate_grad(T v, T alpha) {
  const T z = std::numbers::pi_v<T> / 2 * alpha * v;
  return alpha / 2 / (T{1} + z * z);
}

template <typename T>
T surrogate_grad_ternary(T v, T alpha, T v_thr, Centering centering) {
  if (centering == Centering::zero) return surrogate_grad(v, alpha);
  return surrogate_grad(v - v_thr, alpha) + surrogate_grad(v + v_thr, alpha);
}

// Surrogate d(spike)/dv used by the backward pass for each mode.
template <typename T>
T spike_surrogate(T v, T alpha, T v_thr, SpikeMode mode, Centering centering) {
  if (mode == SpikeMode::ternary)
    return surrogate_grad_ternary(v, alpha, v_thr, centering);
  return centering == Centering::zero ? surrogate_grad(v, alpha)
                                      : surrogate_grad(v - v_thr, alpha);
}

// Differentiable spike whose exact derivative is spike_surrogate(). Only used
// to validate the backward pass against finite differences.
template <typename T>
T soft_spike(T v, T alpha, T v_thr, SpikeMode mode, Centering centering) {
  if (mode == SpikeMode::binary) {
    return centering == Centering::zero ? atan_step(v, alpha)
                                        : atan_step(v - v_thr, alpha);
  }
  if (centering == Centering::zero) return atan_step(v, alpha) - T{0.5};
  return atan_step(v - v_thr, alpha) - atan_step(-v - v_thr, alpha);
}

template <typename T>
struct NeuronState {
  Tensor<T> spk;
  Tensor<T> isc;
  Tensor<T> v;

  static NeuronState zeros(const Shape& shape) {
    return {Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape)};
  }
};

// Trainable decays are per channel (last axis) or per element; postsynaptic
// weights are per layer.
template <typename T>
struct NeuronParams {
  Tensor<T> w_scd;
  Tensor<T> w_vd;
  T w_fv_pos{1};
  T w_fv_neg{1};
  T v_thr{0.1};
  T v_reset{0};

  void validate() const {
    if (!(v_thr > T{0})) throw ConfigError("v_thr must be positive");
    if (v_reset != T{0}) throw ConfigError("v_reset is fixed at zero");
  }
};

template <typename T>
struct LifStep {
  Tensor<T> spikes;
  NeuronState<T> next;
};

namespace detail {

// Returns the stride at which a decay tensor repeats over a state tensor:
// the full size (elementwise) or the last extent (per channel).
template <typename T>
std::size_t decay_period(const Tensor<T>& decay, const Tensor<T>& state) {
  if (decay.size() == state.size()) return state.size();
  if (state.rank() > 0 && decay.size() == state.shape().back())
    return decay.size();
  throw DimensionError("decay tensor " + shape_string(decay.shape()) +
                       " does not match state " + shape_string(state.shape()));
}

}  // namespace detail

// One update/fire/reset cycle:
//   isc_t = w_scd * isc_{t-1} + psp
//   v_t   = w_vd * v_{t-1} * (1 - |spk_{t-1}|) + isc_t
//   spk_t = fire(v_t)
// The reset happens one step later through the (1 - |spk|) factor.
template <typename T>
LifStep<T> lif_step(const NeuronState<T>& prev, const Tensor<T>& input_psp,
                    const NeuronParams<T>& params, SpikeMode mode) {
  params.validate();
  const Shape& shape = input_psp.shape();
  require(prev.spk.shape() == shape && prev.isc.shape() == shape &&
              prev.v.shape() == shape,
          "lif_step: state shapes differ from input " + shape_string(shape));
  const std::size_t ps = detail::decay_period(params.w_scd, input_psp);
  const std::size_t pv = detail::decay_period(params.w_vd, input_psp);

  NeuronState<T> next = NeuronState<T>::zeros(shape);
  for (std::size_t i = 0; i < input_psp.size(); ++i) {
    const T isc = params.w_scd[i % ps] * prev.isc[i] + input_psp[i];
    const T v = params.w_vd[i % pv] * prev.v[i] *
                    (T{1} - std::abs(prev.spk[i])) +
                isc;
    next.isc[i] = isc;
    next.v[i] = v;
    next.spk[i] = fire(v, params.v_thr, mode);
  }
  return {next.spk, std::move(next)};
}

}  // namespace spiketag
