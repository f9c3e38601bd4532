#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "spiketag/config.hpp"
#include "spiketag/data.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/metrics.hpp"
#include "spiketag/neuron.hpp"
#include "spiketag/rng.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

enum class ParamClass { kernels, bias, w_scd, w_vd, w_fv_pos, w_fv_neg };

inline constexpr std::size_t kNumParamClasses = 6;

inline const char* to_string(ParamClass c) {
  switch (c) {
    case ParamClass::kernels: return "kernels";
    case ParamClass::bias: return "bias";
    case ParamClass::w_scd: return "w_scd";
    case ParamClass::w_vd: return "w_vd";
    case ParamClass::w_fv_pos: return "w_fv_pos";
    case ParamClass::w_fv_neg: return "w_fv_neg";
  }
  return "?";
}

template <typename V>
struct ParamView {
  std::string name;
  ParamClass cls;
  Shape shape;
  std::span<V> values;
};

// Every trainable parameter in a fixed order. Postsynaptic weights exist only
// on spiking conv layers (the encoding layer is driven by analog input).
template <typename Net>
auto parameter_views(Net& net) {
  using T = typename std::remove_cvref_t<Net>::value_type::value_type;
  using V = std::conditional_t<std::is_const_v<Net>, const T, T>;
  std::vector<ParamView<V>> views;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    views.push_back({p + "kernels", ParamClass::kernels, layer.kernels.shape(),
                     layer.kernels.values()});
    views.push_back({p + "bias", ParamClass::bias, layer.bias.shape(),
                     layer.bias.values()});
    if (!layer.neuron) continue;
    auto& n = *layer.neuron;
    views.push_back({p + "w_scd", ParamClass::w_scd, n.w_scd.shape(), n.w_scd.values()});
    views.push_back({p + "w_vd", ParamClass::w_vd, n.w_vd.shape(), n.w_vd.values()});
    if (layer.kind == LayerKind::spiking_conv) {
      views.push_back({p + "w_fv_pos", ParamClass::w_fv_pos, Shape{},
                       std::span<V>(&n.w_fv_pos, 1)});
      views.push_back({p + "w_fv_neg", ParamClass::w_fv_neg, Shape{},
                       std::span<V>(&n.w_fv_neg, 1)});
    }
  }
  return views;
}

// Gradients share the parameter layout.
template <typename T>
using Gradients = Network<T>;

template <typename T>
Network<T> zeros_like(const Network<T>& net) {
  Network<T> out = net;
  for (auto& view : parameter_views(out))
    std::fill(view.values.begin(), view.values.end(), T{0});
  return out;
}

namespace detail {

// Per-token loss weights 1/(N * R_i) on real tokens; N counts non-empty rows.
template <typename T>
std::vector<double> token_weights(const Tensor<T>& mask) {
  const std::size_t batch = mask.dim(0), len = mask.dim(1);
  std::vector<double> w(batch * len, 0.0);
  std::size_t rows = 0;
  std::vector<std::size_t> real(batch, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < len; ++j) real[b] += mask(b, j) != T{0};
    rows += real[b] > 0;
  }
  if (rows == 0) return w;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < len; ++j)
      if (mask(b, j) != T{0})
        w[b * len + j] = 1.0 / (static_cast<double>(rows) * static_cast<double>(real[b]));
  return w;
}

inline std::size_t label_index(double y) {
  const auto c = static_cast<long>(y);
  if (c < 0 || c > 2 || static_cast<double>(c) != y)
    throw ValidationError("label " + std::to_string(y) + " outside {0,1,2}");
  return static_cast<std::size_t>(c);
}

}  // namespace detail

struct LossOptions {
  // Divide prob_class by T before the log (shifts the loss by log T).
  bool normalize_by_steps = false;
  std::size_t time_steps = 1;
  double floor = 1e-12;
};

// L = -(1/N) sum_i (1/R_i) sum_j log prob_class[i, j, y_ij]
template <typename T>
double cross_entropy(const Tensor<T>& prob_class, const Tensor<T>& labels,
                     const Tensor<T>& mask, const LossOptions& opts = {}) {
  require(prob_class.rank() == 3 && prob_class.dim(2) == kNumClasses,
          "cross_entropy expects prob_class [B x R x 3]");
  require(labels.shape() == mask.shape() && mask.rank() == 2 &&
              mask.dim(0) == prob_class.dim(0) &&
              mask.dim(1) == prob_class.dim(1),
          "cross_entropy label/mask shape mismatch");
  const std::vector<double> w = detail::token_weights(mask);
  const double scale =
      opts.normalize_by_steps ? static_cast<double>(opts.time_steps) : 1.0;
  double loss = 0;
  for (std::size_t tok = 0; tok < w.size(); ++tok) {
    if (w[tok] == 0) continue;
    const std::size_t y = detail::label_index(static_cast<double>(labels[tok]));
    const double p = static_cast<double>(prob_class[tok * kNumClasses + y]) / scale;
    if (!(p > 0) && opts.floor <= 0)
      throw NumericError("zero probability at a labeled class");
    loss -= w[tok] * std::log(std::max(p, opts.floor));
  }
  return loss;
}

// Single-term corruptions of the backward pass, used to show that the
// finite-difference check is sensitive to each of them.
enum class GradientMutation {
  none,
  drop_voltage_recurrence,   // no w_vd * (1-|spk|) * dL/dV_{t+1} term
  drop_reset_factor,         // (1-|spk|) omitted from the voltage adjoint
  drop_current_recurrence,   // no w_scd * dL/dIsc_{t+1} term
  next_step_voltage_in_current,  // dL/dIsc_t uses dL/dV_{t+1}, not dL/dV_t
  drop_surrogate,            // dL/dV_t ignores dL/dSpk_t
  drop_postsynaptic_weight,  // dL/dSpk^{L-1} without the w_fv factor
};

inline constexpr GradientMutation kAllMutations[] = {
    GradientMutation::drop_voltage_recurrence,
    GradientMutation::drop_reset_factor,
    GradientMutation::drop_current_recurrence,
    GradientMutation::next_step_voltage_in_current,
    GradientMutation::drop_surrogate,
    GradientMutation::drop_postsynaptic_weight,
};

inline const char* to_string(GradientMutation m) {
  switch (m) {
    case GradientMutation::none: return "none";
    case GradientMutation::drop_voltage_recurrence: return "drop_voltage_recurrence";
    case GradientMutation::drop_reset_factor: return "drop_reset_factor";
    case GradientMutation::drop_current_recurrence: return "drop_current_recurrence";
    case GradientMutation::next_step_voltage_in_current: return "next_step_voltage_in_current";
    case GradientMutation::drop_surrogate: return "drop_surrogate";
    case GradientMutation::drop_postsynaptic_weight: return "drop_postsynaptic_weight";
  }
  return "?";
}

struct BackwardOptions {
  LossOptions loss;
  GradientMutation mutation = GradientMutation::none;
};

// Spatio-temporal backward pass. Per spiking layer, from t = T down to 1:
//   dL/dV_t   = G(V_t) * dL/dSpk_t + w_vd * (1 - |Spk_t|) * dL/dV_{t+1}
//   dL/dIsc_t = dL/dV_t + w_scd * dL/dIsc_{t+1}
//   dL/dW    += corr(presynaptic input_t, dL/dIsc_t),  dL/db += dL/dIsc_t
//   dL/dw_scd += Isc_{t-1} * dL/dIsc_t
//   dL/dw_vd  += V_{t-1} * (1 - |Spk_{t-1}|) * dL/dV_t
// Reset indicators are constants; adjoints beyond t = T are zero.
template <typename T>
Gradients<T> backward(const StateTrace<T>& trace, const Tensor<T>& labels,
                      const Tensor<T>& mask, const Network<T>& net,
                      const NetworkConfig& cfg, const BackwardOptions& opts = {}) {
  validate_network(net, cfg);
  const std::size_t steps = cfg.time_steps;
  const std::size_t n_spiking = net.size() - 1;
  if (trace.layers.size() != n_spiking || trace.probs.size() != steps)
    throw ConfigError("trace does not match network/config");
  for (const auto& lt : trace.layers)
    if (lt.states.size() != steps)
      throw ConfigError("trace does not cover all time steps");
  if (trace.mask.shape() != mask.shape())
    throw ConfigError("trace was produced for a different batch");

  const GradientMutation mut = opts.mutation;
  const std::size_t batch = mask.dim(0), len = mask.dim(1);
  const std::size_t tokens = batch * len;
  Gradients<T> grads = zeros_like(net);

  // dL/dProb_class at the labeled class only.
  Tensor<T> prob_sum({batch, len, kNumClasses});
  for (const auto& p : trace.probs)
    for (std::size_t i = 0; i < p.size(); ++i) prob_sum[i] += p[i];
  const std::vector<double> w = detail::token_weights(mask);
  const double scale = opts.loss.normalize_by_steps
                           ? static_cast<double>(opts.loss.time_steps)
                           : 1.0;
  std::vector<double> g_prob(tokens, 0.0);  // value at class y
  std::vector<std::size_t> y(tokens, 0);
  for (std::size_t tok = 0; tok < tokens; ++tok) {
    if (w[tok] == 0) continue;
    y[tok] = detail::label_index(static_cast<double>(labels[tok]));
    const double p = static_cast<double>(prob_sum[tok * kNumClasses + y[tok]]) / scale;
    g_prob[tok] = p < opts.loss.floor ? 0.0 : -w[tok] / p / scale;
  }

  // Output layer.
  const LayerParams<T>& out = net.back();
  LayerParams<T>& g_out = grads.back();
  const std::size_t c_top = out.kernels.dim(1);
  std::vector<std::vector<Tensor<T>>> g_spk(n_spiking);
  for (auto& v : g_spk) v.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor<T>& probs = trace.probs[t];
    const Tensor<T>& spk = trace.layers[n_spiking - 1].states[t].spk;
    Tensor<T> gs({batch, len, c_top});
    for (std::size_t tok = 0; tok < tokens; ++tok) {
      if (g_prob[tok] == 0) continue;
      const T* p = &probs[tok * kNumClasses];
      const T py = p[y[tok]];
      const T gp = static_cast<T>(g_prob[tok]);
      T g_logit[kNumClasses];
      for (std::size_t k = 0; k < kNumClasses; ++k)
        g_logit[k] = gp * p[k] * ((k == y[tok] ? T{1} : T{0}) - py);
      const T* x = &spk[tok * c_top];
      T* gx = &gs[tok * c_top];
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        g_out.bias[k] += g_logit[k];
        const T* wr = &out.kernels[k * c_top];
        T* gw = &g_out.kernels[k * c_top];
        for (std::size_t c = 0; c < c_top; ++c) {
          gw[c] += g_logit[k] * x[c];
          gx[c] += g_logit[k] * wr[c];
        }
      }
    }
    g_spk[n_spiking - 1][t] = std::move(gs);
  }

  const T alpha = static_cast<T>(cfg.alpha);
  for (std::size_t li = n_spiking; li-- > 0;) {
    const LayerParams<T>& layer = net[li];
    const NeuronParams<T>& n = *layer.neuron;
    LayerParams<T>& g_layer = grads[li];
    NeuronParams<T>& g_n = *g_layer.neuron;
    const LayerTrace<T>& lt = trace.layers[li];
    const Shape shape = lt.states[0].v.shape();
    const std::size_t size = shape_size(shape);
    const std::size_t c = shape.back();
    const std::size_t ps = detail::decay_period(n.w_scd, lt.states[0].v);
    const std::size_t pv = detail::decay_period(n.w_vd, lt.states[0].v);

    std::vector<Tensor<T>> g_drive(steps);
    Tensor<T> gv_next(shape), gi_next(shape);
    for (std::size_t t = steps; t-- > 0;) {
      const NeuronState<T>& st = lt.states[t];
      const Tensor<T>& gs = g_spk[li][t];
      Tensor<T> gv(shape), gi(shape);
      for (std::size_t i = 0; i < size; ++i) {
        const T m = trace.mask[i / c];
        T val{0};
        if (mut != GradientMutation::drop_surrogate)
          val = m * spike_surrogate(st.v[i], alpha, n.v_thr, cfg.spike_mode,
                                    cfg.surrogate_centering) *
                gs[i];
        if (mut != GradientMutation::drop_voltage_recurrence) {
          const T keep = mut == GradientMutation::drop_reset_factor
                             ? T{1}
                             : T{1} - lt.fired[t][i];
          val += n.w_vd[i % pv] * keep * gv_next[i];
        }
        gv[i] = val;
        const T v_term =
            mut == GradientMutation::next_step_voltage_in_current ? gv_next[i] : val;
        gi[i] = mut == GradientMutation::drop_current_recurrence
                    ? v_term
                    : v_term + n.w_scd[i % ps] * gi_next[i];
        if (t > 0) {
          const NeuronState<T>& prev = lt.states[t - 1];
          g_n.w_scd[i % ps] += prev.isc[i] * gi[i];
          g_n.w_vd[i % pv] += prev.v[i] * (T{1} - lt.fired[t - 1][i]) * gv[i];
        }
      }
      for (std::size_t i = 0; i < size; ++i) g_layer.bias[i % c] += gi[i];
      g_drive[t] = gi;
      gv_next = std::move(gv);
      gi_next = std::move(gi);
    }

    if (layer.kind == LayerKind::encoding) {
      // The drive is the same conv of the static input at every step.
      Tensor<T> total(shape);
      for (const auto& g : g_drive)
        for (std::size_t i = 0; i < size; ++i) total[i] += g[i];
      conv1d_kernel_grad_accumulate(trace.embeddings, total, cfg.padding,
                                    cfg.stride, g_layer.kernels);
      continue;
    }

    const LayerTrace<T>& below = trace.layers[li - 1];
    const std::size_t c_in = below.states[0].spk.shape().back();
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor<T>& x = below.states[t].spk;
      conv1d_kernel_grad_accumulate(weighted_spikes(x, n, cfg.spike_mode),
                                    g_drive[t], cfg.padding, cfg.stride,
                                    g_layer.kernels);
      Tensor<T> gx = conv1d_input_grad(g_drive[t], layer.kernels, len,
                                       cfg.padding, cfg.stride);
      const Tensor<T>& v_pre = below.states[t].v;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const bool negative_branch =
            cfg.spike_mode == SpikeMode::ternary && v_pre[i] < T{0};
        if (negative_branch)
          g_n.w_fv_neg += x[i] * gx[i];
        else
          g_n.w_fv_pos += x[i] * gx[i];
        if (mut != GradientMutation::drop_postsynaptic_weight)
          gx[i] *= negative_branch ? n.w_fv_neg : n.w_fv_pos;
      }
      (void)c_in;
      g_spk[li - 1][t] = std::move(gx);
    }
  }
  return grads;
}

template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  Network<T> m;  // adam first moments (empty for sgd)
  Network<T> v;  // adam second moments
};

// sgd: p -= lr * g.  adam: bias-corrected moment update.
template <typename T>
void optimizer_step(Network<T>& params, const Gradients<T>& grads,
                    OptimizerState<T>& state, const TrainConfig& cfg) {
  auto pv = parameter_views(params);
  const auto gv = parameter_views(grads);
  require(pv.size() == gv.size(), "gradient layout differs from parameters");
  for (std::size_t i = 0; i < pv.size(); ++i) {
    require(pv[i].values.size() == gv[i].values.size(),
            "gradient shape mismatch for " + pv[i].name);
    for (T g : gv[i].values)
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in " + pv[i].name);
  }
  ++state.step;
  const T lr = static_cast<T>(cfg.learning_rate);
  if (cfg.optimizer == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < pv.size(); ++i)
      for (std::size_t k = 0; k < pv[i].values.size(); ++k)
        pv[i].values[k] -= lr * gv[i].values[k];
    return;
  }
  if (state.m.empty()) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  auto mv = parameter_views(state.m);
  auto vv = parameter_views(state.v);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double step = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(b1, step));
  const T c2 = static_cast<T>(1.0 - std::pow(b2, step));
  const T eps = static_cast<T>(cfg.adam_eps);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    for (std::size_t k = 0; k < pv[i].values.size(); ++k) {
      const T g = gv[i].values[k];
      T& m = mv[i].values[k];
      T& v = vv[i].values[k];
      m = static_cast<T>(b1) * m + static_cast<T>(1 - b1) * g;
      v = static_cast<T>(b2) * v + static_cast<T>(1 - b2) * g * g;
      const T mhat = m / c1;
      const T vhat = v / c2;
      pv[i].values[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct Evaluation {
  SpanScore score;
  double loss = 0;
  std::vector<std::vector<Label>> predictions;  // in example order
};

template <typename T>
Evaluation evaluate(const Network<T>& net, const std::vector<Example>& examples,
                    const EmbeddingTable& table, const NetworkConfig& cfg,
                    std::size_t batch_size = 32) {
  Evaluation ev;
  ev.predictions.resize(examples.size());
  double loss_sum = 0;
  std::size_t n_batches = 0;
  for (const Batch<T>& b : batchify<T>(examples, table, batch_size)) {
    const ForwardResult<T> fr = forward(b.embeddings, b.mask, net, cfg);
    loss_sum += cross_entropy(fr.prob_class, b.labels, b.mask);
    ++n_batches;
    auto decoded = decode_bio(fr.prob_class, b.mask);
    for (std::size_t r = 0; r < b.size(); ++r)
      ev.predictions[b.indices[r]] = std::move(decoded[r]);
  }
  std::vector<std::vector<Label>> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) gold.push_back(ex.labels);
  ev.score = corpus_span_f1(gold, ev.predictions);
  ev.loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
  return ev;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  SpanScore val;
};

// epoch, train_loss, val_precision, val_recall, val_f1
inline std::string format_epoch_log(const EpochLog& e) {
  return std::to_string(e.epoch) + '\t' + format_real(e.train_loss) + '\t' +
         format_real(e.val.precision) + '\t' + format_real(e.val.recall) +
         '\t' + format_real(e.val.f1);
}

template <typename T>
struct TrainState {
  Network<T> params;
  OptimizerState<T> optimizer;
  std::size_t epochs_done = 0;
  Network<T> best;
  std::size_t best_epoch = 0;
  double best_f1 = -1;
  std::vector<EpochLog> log;
};

template <typename T>
double train_batch(Network<T>& params, OptimizerState<T>& opt,
                   const Batch<T>& batch, const TrainConfig& tcfg,
                   const NetworkConfig& ncfg) {
  const ForwardResult<T> fr = forward(batch.embeddings, batch.mask, params, ncfg);
  const double loss = cross_entropy(fr.prob_class, batch.labels, batch.mask);
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
  const Gradients<T> g = backward(fr.trace, batch.labels, batch.mask, params, ncfg);
  optimizer_step(params, g, opt, tcfg);
  return loss;
}

template <typename T>
TrainState<T> start_training(const NetworkConfig& ncfg, const TrainConfig& tcfg) {
  TrainState<T> s;
  s.params = init_network<T>(ncfg, tcfg.seed);
  s.best = s.params;
  return s;
}

// Mini-batch training with per-epoch seeded shuffling. Runs epochs
// state.epochs_done + 1 .. tcfg.epochs, so a saved state resumes exactly.
template <typename T>
void train(TrainState<T>& state, const std::vector<Example>& train_set,
           const std::vector<Example>& val_set, const EmbeddingTable& table,
           const TrainConfig& tcfg, const NetworkConfig& ncfg,
           const std::function<void(const EpochLog&)>& on_epoch = {}) {
  tcfg.validate();
  ncfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  while (state.epochs_done < tcfg.epochs) {
    const std::size_t epoch = state.epochs_done + 1;
    Rng rng(derive_seed(tcfg.seed, SeedStream::shuffle, epoch));
    double loss_sum = 0;
    std::size_t n = 0;
    for (const Batch<T>& b : batchify<T>(train_set, table, tcfg.batch_size, &rng)) {
      loss_sum += train_batch(state.params, state.optimizer, b, tcfg, ncfg);
      ++n;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(n);
    if (!val_set.empty())
      log.val = evaluate(state.params, val_set, table, ncfg).score;
    state.epochs_done = epoch;
    if (val_set.empty() || log.val.f1 > state.best_f1) {
      state.best = state.params;
      state.best_epoch = epoch;
      state.best_f1 = val_set.empty() ? 0.0 : log.val.f1;
    }
    state.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
}

template <typename T>
TrainState<T> train(const std::vector<Example>& train_set,
                    const std::vector<Example>& val_set,
                    const EmbeddingTable& table, const TrainConfig& tcfg,
                    NetworkConfig ncfg,
                    const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (ncfg.embedding_dim == 0) ncfg.embedding_dim = table.dim();
  TrainState<T> state = start_training<T>(ncfg, tcfg);
  train(state, train_set, val_set, table, tcfg, ncfg, on_epoch);
  return state;
}

}  // namespace spiketag
