#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "spiketag/config.hpp"
#include "spiketag/error.hpp"
#include "spiketag/neuron.hpp"
#include "spiketag/rng.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

inline constexpr std::size_t kNumClasses = 3;  // O, B, I

enum class LayerKind { encoding, spiking_conv, output };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::encoding: return "encoding";
    case LayerKind::spiking_conv: return "spiking_conv";
    case LayerKind::output: return "output";
  }
  return "?";
}

// Convolution layers hold kernels [Cout x Cin x K]; the output layer holds a
// [3 x C] weight matrix. Output layers carry no neuron.
template <typename T>
struct LayerParams {
  using value_type = T;

  LayerKind kind = LayerKind::output;
  Tensor<T> kernels;
  Tensor<T> bias;
  std::optional<NeuronParams<T>> neuron;

  template <typename U>
  LayerParams<U> cast() const {
    LayerParams<U> out;
    out.kind = kind;
    out.kernels = kernels.template cast<U>();
    out.bias = bias.template cast<U>();
    if (neuron) {
      NeuronParams<U> n;
      n.w_scd = neuron->w_scd.template cast<U>();
      n.w_vd = neuron->w_vd.template cast<U>();
      n.w_fv_pos = static_cast<U>(neuron->w_fv_pos);
      n.w_fv_neg = static_cast<U>(neuron->w_fv_neg);
      n.v_thr = static_cast<U>(neuron->v_thr);
      n.v_reset = static_cast<U>(neuron->v_reset);
      out.neuron = n;
    }
    return out;
  }
};

// [encoding, spiking_conv x n, output]
template <typename T>
using Network = std::vector<LayerParams<T>>;

template <typename U, typename T>
Network<U> cast_network(const Network<T>& net) {
  Network<U> out;
  out.reserve(net.size());
  for (const auto& layer : net) out.push_back(layer.template cast<U>());
  return out;
}

template <typename T>
void validate_network(const Network<T>& net, const NetworkConfig& cfg) {
  if (net.size() != cfg.n_spiking_conv + 2)
    throw ConfigError("network has " + std::to_string(net.size()) +
                      " layers, config expects " +
                      std::to_string(cfg.n_spiking_conv + 2));
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net[i];
    const LayerKind want = i == 0                ? LayerKind::encoding
                           : i + 1 == net.size() ? LayerKind::output
                                                 : LayerKind::spiking_conv;
    if (layer.kind != want)
      throw ConfigError("layer " + std::to_string(i) + " should be " +
                        to_string(want));
    if (want == LayerKind::output) {
      require(layer.kernels.rank() == 2 && layer.kernels.dim(0) == kNumClasses,
              "output layer must have 3 rows");
      require(layer.bias.size() == kNumClasses, "output bias must have 3 rows");
    } else {
      require(layer.kernels.rank() == 3 && layer.kernels.dim(2) == cfg.kernel,
              "layer " + std::to_string(i) + " kernel extent mismatch");
      require(layer.bias.size() == layer.kernels.dim(0),
              "layer " + std::to_string(i) + " bias length mismatch");
      if (!layer.neuron)
        throw ConfigError("spiking layer " + std::to_string(i) +
                          " has no neuron parameters");
      layer.neuron->validate();
      if (i > 0)
        require(layer.kernels.dim(1) == net[i - 1].kernels.dim(0),
                "layer " + std::to_string(i) + " input channel mismatch");
    }
  }
  require(net.back().kernels.dim(1) == net[net.size() - 2].kernels.dim(0),
          "output layer width mismatch");
}

namespace detail {

template <typename T>
Tensor<T> glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> out(shape);
  for (T& x : out.values()) x = static_cast<T>(rng.uniform(-limit, limit));
  return out;
}

template <typename T>
NeuronParams<T> initial_neuron(std::size_t channels, const NetworkConfig& cfg) {
  NeuronParams<T> n;
  n.w_scd = Tensor<T>({channels}, static_cast<T>(cfg.decay_init));
  n.w_vd = Tensor<T>({channels}, static_cast<T>(cfg.decay_init));
  n.w_fv_pos = T{1};
  n.w_fv_neg = T{1};
  n.v_thr = static_cast<T>(cfg.v_thr);
  return n;
}

}  // namespace detail

// Kernels and output weights ~ U(+-sqrt(6/(fan_in+fan_out))), zero biases,
// decays at cfg.decay_init, unit postsynaptic weights.
template <typename T>
Network<T> init_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.embedding_dim == 0)
    throw ConfigError("embedding_dim must be known before initialization");
  Rng rng(derive_seed(seed, SeedStream::init));
  const std::size_t c = cfg.channels, k = cfg.kernel, e = cfg.embedding_dim;
  Network<T> net;
  LayerParams<T> enc;
  enc.kind = LayerKind::encoding;
  enc.kernels = detail::glorot<T>({c, e, k}, e * k, c * k, rng);
  enc.bias = Tensor<T>({c});
  enc.neuron = detail::initial_neuron<T>(c, cfg);
  net.push_back(std::move(enc));
  for (std::size_t i = 0; i < cfg.n_spiking_conv; ++i) {
    LayerParams<T> conv;
    conv.kind = LayerKind::spiking_conv;
    conv.kernels = detail::glorot<T>({c, c, k}, c * k, c * k, rng);
    conv.bias = Tensor<T>({c});
    conv.neuron = detail::initial_neuron<T>(c, cfg);
    net.push_back(std::move(conv));
  }
  LayerParams<T> out;
  out.kind = LayerKind::output;
  out.kernels = detail::glorot<T>({kNumClasses, c}, c, kNumClasses, rng);
  out.bias = Tensor<T>({kNumClasses});
  net.push_back(std::move(out));
  return net;
}

// Presynaptic spikes scaled by their postsynaptic weight: w_fv_pos for
// positive entries, w_fv_neg for negative entries (ternary); w_fv_pos
// throughout in binary mode.
template <typename T>
Tensor<T> weighted_spikes(const Tensor<T>& spikes, const NeuronParams<T>& n,
                          SpikeMode mode) {
  Tensor<T> out(spikes.shape());
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    const T x = spikes[i];
    out[i] = (mode == SpikeMode::ternary && x < T{0}) ? n.w_fv_neg * x
                                                      : n.w_fv_pos * x;
  }
  return out;
}

// Positive / negative parts of a ternary spike map.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_ternary(const Tensor<T>& spikes) {
  Tensor<T> pos(spikes.shape()), neg(spikes.shape());
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    if (spikes[i] == T{1}) pos[i] = spikes[i];
    if (spikes[i] == T{-1}) neg[i] = spikes[i];
  }
  return {std::move(pos), std::move(neg)};
}

template <typename T>
void check_spike_alphabet(const Tensor<T>& spikes, SpikeMode mode) {
  for (T x : spikes.values()) {
    const bool ok = x == T{0} || x == T{1} ||
                    (mode == SpikeMode::ternary && x == T{-1});
    if (!ok)
      throw ValidationError("spike value " + std::to_string(x) +
                            " outside the " + to_string(mode) + " alphabet");
  }
}

// Postsynaptic drive of a spiking conv layer.
template <typename T>
Tensor<T> spiking_conv_drive(const Tensor<T>& in_spikes,
                             const LayerParams<T>& layer,
                             const NetworkConfig& cfg) {
  return conv1d_same(weighted_spikes(in_spikes, *layer.neuron, cfg.spike_mode),
                     layer.kernels, layer.bias, cfg.padding, cfg.stride);
}

template <typename T>
LifStep<T> encode_step(const Tensor<T>& embeddings, const LayerParams<T>& layer,
                       const NeuronState<T>& prev, const NetworkConfig& cfg) {
  if (layer.kind != LayerKind::encoding)
    throw ConfigError("encode_step needs an encoding layer");
  const Tensor<T> drive = conv1d_same(embeddings, layer.kernels, layer.bias,
                                      cfg.padding, cfg.stride);
  return lif_step(prev, drive, *layer.neuron, cfg.spike_mode);
}

template <typename T>
LifStep<T> spiking_conv_step(const Tensor<T>& in_spikes,
                             const LayerParams<T>& layer,
                             const NeuronState<T>& prev,
                             const NetworkConfig& cfg) {
  if (layer.kind != LayerKind::spiking_conv)
    throw ConfigError("spiking_conv_step needs a spiking_conv layer");
  check_spike_alphabet(in_spikes, cfg.spike_mode);
  return lif_step(prev, spiking_conv_drive(in_spikes, layer, cfg),
                  *layer.neuron, cfg.spike_mode);
}

// Per-token affine map [B x R x C] -> [B x R x 3].
template <typename T>
Tensor<T> output_logits(const Tensor<T>& in_spikes,
                        const LayerParams<T>& layer) {
  if (layer.kind != LayerKind::output)
    throw ConfigError("output_logits needs the output layer");
  require(in_spikes.rank() == 3 && in_spikes.dim(2) == layer.kernels.dim(1),
          "output layer input " + shape_string(in_spikes.shape()) +
              " does not match weight " + shape_string(layer.kernels.shape()));
  const std::size_t tokens = in_spikes.dim(0) * in_spikes.dim(1);
  const std::size_t c = in_spikes.dim(2), u = layer.kernels.dim(0);
  Tensor<T> out({in_spikes.dim(0), in_spikes.dim(1), u});
  for (std::size_t tok = 0; tok < tokens; ++tok) {
    const T* x = in_spikes.data() + tok * c;
    for (std::size_t r = 0; r < u; ++r) {
      const T* w = layer.kernels.data() + r * c;
      T s{0};
      for (std::size_t i = 0; i < c; ++i) s += w[i] * x[i];
      out[tok * u + r] = s + layer.bias[r];
    }
  }
  return out;
}

template <typename T>
struct LayerTrace {
  std::vector<NeuronState<T>> states;  // states[t-1] for t = 1..T
  std::vector<Tensor<T>> fired;        // |hard spike| at each step
};

// Everything the backward pass needs from a forward run.
template <typename T>
struct StateTrace {
  Tensor<T> embeddings;  // masked input, [B x R x E]
  Tensor<T> mask;        // [B x R]
  std::vector<LayerTrace<T>> layers;  // one per spiking layer
  std::vector<Tensor<T>> probs;       // softmax(logits_t), [B x R x 3]
  bool soft = false;
};

template <typename T>
struct ForwardResult {
  Tensor<T> prob_class;  // sum over t of softmax(logits_t)
  StateTrace<T> trace;
};

template <typename T>
struct ForwardOptions {
  // Differentiable spikes (gradient checking only).
  bool soft = false;
  // Reset indicators to replay instead of recomputing; [layer][t].
  const std::vector<std::vector<Tensor<T>>>* frozen_fired = nullptr;
};

namespace detail {

// Neuron update with token masking; `fired` receives the reset indicator.
template <typename T>
void neuron_update(const NeuronState<T>& prev, const Tensor<T>& prev_fired,
                   const Tensor<T>& drive, const NeuronParams<T>& n,
                   const Tensor<T>& mask, const NetworkConfig& cfg,
                   bool soft, const Tensor<T>* frozen, NeuronState<T>& next,
                   Tensor<T>& fired) {
  const std::size_t size = drive.size();
  const std::size_t c = drive.shape().back();
  const std::size_t ps = decay_period(n.w_scd, drive);
  const std::size_t pv = decay_period(n.w_vd, drive);
  const T alpha = static_cast<T>(cfg.alpha);
  next = NeuronState<T>::zeros(drive.shape());
  fired = Tensor<T>(drive.shape());
  for (std::size_t i = 0; i < size; ++i) {
    const T isc = n.w_scd[i % ps] * prev.isc[i] + drive[i];
    const T v = n.w_vd[i % pv] * prev.v[i] * (T{1} - prev_fired[i]) + isc;
    const T m = mask[i / c];
    const T hard = fire(v, n.v_thr, cfg.spike_mode) * m;
    next.isc[i] = isc;
    next.v[i] = v;
    next.spk[i] =
        soft ? soft_spike(v, alpha, n.v_thr, cfg.spike_mode,
                          cfg.surrogate_centering) *
                   m
             : hard;
    fired[i] = frozen ? (*frozen)[i] : std::abs(hard);
  }
}

}  // namespace detail

// Runs every spiking layer for t = 1..T on a constant input and accumulates
// the per-step class distributions. Tokens with mask 0 behave like
// out-of-range padding: zero input and no spikes.
template <typename T>
ForwardResult<T> forward(const Tensor<T>& embeddings, const Tensor<T>& mask,
                         const Network<T>& net, const NetworkConfig& cfg,
                         const ForwardOptions<T>& opts = {}) {
  cfg.validate();
  validate_network(net, cfg);
  require(embeddings.rank() == 3, "embeddings must be [B x R x E]");
  const std::size_t batch = embeddings.dim(0), len = embeddings.dim(1),
                    emb = embeddings.dim(2);
  require(mask.rank() == 2 && mask.dim(0) == batch && mask.dim(1) == len,
          "mask must be [B x R]");
  const std::size_t n_spiking = net.size() - 1;

  ForwardResult<T> res;
  StateTrace<T>& trace = res.trace;
  trace.soft = opts.soft;
  trace.mask = mask;
  trace.embeddings = embeddings;
  for (std::size_t i = 0; i < trace.embeddings.size(); ++i)
    trace.embeddings[i] *= mask[i / emb];
  trace.layers.resize(n_spiking);

  const Tensor<T> enc_drive =
      conv1d_same(trace.embeddings, net[0].kernels, net[0].bias, cfg.padding,
                  cfg.stride);

  std::vector<NeuronState<T>> state(n_spiking);
  std::vector<Tensor<T>> fired(n_spiking);
  for (std::size_t l = 0; l < n_spiking; ++l) {
    const Shape shape{batch, len, net[l].kernels.dim(0)};
    state[l] = NeuronState<T>::zeros(shape);
    fired[l] = Tensor<T>(shape);
  }

  res.prob_class = Tensor<T>({batch, len, kNumClasses});
  for (std::size_t t = 0; t < cfg.time_steps; ++t) {
    for (std::size_t l = 0; l < n_spiking; ++l) {
      const Tensor<T> drive =
          l == 0 ? enc_drive
                 : spiking_conv_drive(state[l - 1].spk, net[l], cfg);
      const Tensor<T>* frozen =
          opts.frozen_fired ? &(*opts.frozen_fired)[l][t] : nullptr;
      NeuronState<T> next;
      Tensor<T> next_fired;
      detail::neuron_update(state[l], fired[l], drive, *net[l].neuron, mask,
                            cfg, opts.soft, frozen, next, next_fired);
      state[l] = std::move(next);
      fired[l] = std::move(next_fired);
      trace.layers[l].states.push_back(state[l]);
      trace.layers[l].fired.push_back(fired[l]);
    }
    const Tensor<T> logits = output_logits(state[n_spiking - 1].spk, net.back());
    Tensor<T> probs(logits.shape());
    for (std::size_t tok = 0; tok < batch * len; ++tok) {
      softmax_into<T>(logits.values().subspan(tok * kNumClasses, kNumClasses),
                      probs.values().subspan(tok * kNumClasses, kNumClasses));
    }
    for (std::size_t i = 0; i < probs.size(); ++i) res.prob_class[i] += probs[i];
    trace.probs.push_back(std::move(probs));
  }
  return res;
}

template <typename T>
ForwardResult<T> forward(const Tensor<T>& embeddings, const Network<T>& net,
                         const NetworkConfig& cfg) {
  return forward(embeddings,
                 Tensor<T>({embeddings.dim(0), embeddings.dim(1)}, T{1}), net,
                 cfg);
}

}  // namespace spiketag
