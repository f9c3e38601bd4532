#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spiketag/config.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/rng.hpp"
#include "spiketag/training.hpp"

namespace spiketag {

struct GradCheckConfig {
  std::size_t batch = 1;
  std::size_t length = 3;
  std::size_t embedding_dim = 2;
  std::size_t channels = 2;
  std::size_t time_steps = 3;
  std::size_t n_spiking_conv = 2;
  std::size_t kernel = 5;
  SpikeMode spike_mode = SpikeMode::ternary;
  Centering centering = Centering::zero;
  double alpha = 2.0;
  double v_thr = 0.1;
  double step = 1e-5;
  double floor = 1e-7;  // relative error denominator floor
  std::uint64_t seed = 1;
  // Masks out the last token of every row after the first.
  bool pad_tail = false;
  GradientMutation mutation = GradientMutation::none;

  NetworkConfig network() const {
    NetworkConfig c;
    c.time_steps = time_steps;
    c.spike_mode = spike_mode;
    c.channels = channels;
    c.kernel = kernel;
    c.padding = kernel / 2;
    c.stride = 1;
    c.n_spiking_conv = n_spiking_conv;
    c.v_thr = v_thr;
    c.alpha = alpha;
    c.embedding_dim = embedding_dim;
    c.surrogate_centering = centering;
    return c;
  }
};

struct GradCheckEntry {
  std::string name;
  ParamClass cls;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::array<double, kNumParamClasses> max_rel{};  // indexed by ParamClass
  std::array<bool, kNumParamClasses> present{};
  double loss = 0;

  double max_error() const {
    return *std::max_element(max_rel.begin(), max_rel.end());
  }
};

inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// A small random problem with every parameter moved off its initial value so
// that all gradient paths are exercised.
struct GradCheckProblem {
  NetworkConfig cfg;
  Network<double> net;
  Tensor<double> embeddings;
  Tensor<double> labels;
  Tensor<double> mask;
};

inline GradCheckProblem make_gradcheck_problem(const GradCheckConfig& gc) {
  GradCheckProblem p;
  p.cfg = gc.network();
  p.net = init_network<double>(p.cfg, gc.seed);
  Rng rng(derive_seed(gc.seed, SeedStream::gradcheck));
  for (auto& layer : p.net) {
    for (double& b : layer.bias.values()) b = rng.uniform(-0.1, 0.1);
    for (double& k : layer.kernels.values()) k *= 2.0;
    if (!layer.neuron) continue;
    for (double& d : layer.neuron->w_scd.values()) d = rng.uniform(0.05, 0.9);
    for (double& d : layer.neuron->w_vd.values()) d = rng.uniform(0.05, 0.9);
    if (layer.kind == LayerKind::spiking_conv) {
      layer.neuron->w_fv_pos = rng.uniform(0.5, 1.5);
      layer.neuron->w_fv_neg = rng.uniform(0.5, 1.5);
    }
  }
  p.embeddings = Tensor<double>({gc.batch, gc.length, gc.embedding_dim});
  for (double& x : p.embeddings.values()) x = rng.normal();
  p.labels = Tensor<double>({gc.batch, gc.length});
  for (double& y : p.labels.values()) y = static_cast<double>(rng.below(3));
  p.mask = Tensor<double>({gc.batch, gc.length}, 1.0);
  if (gc.pad_tail)
    for (std::size_t b = 1; b < gc.batch; ++b) p.mask(b, gc.length - 1) = 0.0;
  return p;
}

// Central finite differences of the soft-spike loss against backward(), with
// the base run's reset indicators held fixed.
inline GradCheckReport gradient_check(const GradCheckConfig& gc) {
  GradCheckProblem p = make_gradcheck_problem(gc);
  ForwardOptions<double> base_opts;
  base_opts.soft = true;
  const ForwardResult<double> base =
      forward(p.embeddings, p.mask, p.net, p.cfg, base_opts);

  std::vector<std::vector<Tensor<double>>> frozen;
  for (const auto& lt : base.trace.layers) frozen.push_back(lt.fired);
  ForwardOptions<double> fd_opts;
  fd_opts.soft = true;
  fd_opts.frozen_fired = &frozen;

  BackwardOptions bopts;
  bopts.mutation = gc.mutation;
  const Gradients<double> grads =
      backward(base.trace, p.labels, p.mask, p.net, p.cfg, bopts);

  GradCheckReport report;
  report.loss = cross_entropy(base.prob_class, p.labels, p.mask);
  auto loss_at = [&] {
    const auto r = forward(p.embeddings, p.mask, p.net, p.cfg, fd_opts);
    return cross_entropy(r.prob_class, p.labels, p.mask);
  };

  auto params = parameter_views(p.net);
  const auto gviews = parameter_views(grads);
  for (std::size_t v = 0; v < params.size(); ++v) {
    auto& view = params[v];
    const auto cls = static_cast<std::size_t>(view.cls);
    report.present[cls] = true;
    for (std::size_t i = 0; i < view.values.size(); ++i) {
      const double orig = view.values[i];
      view.values[i] = orig + gc.step;
      const double up = loss_at();
      view.values[i] = orig - gc.step;
      const double down = loss_at();
      view.values[i] = orig;
      const double numeric = (up - down) / (2 * gc.step);
      const double analytic = gviews[v].values[i];
      const double rel = relative_error(analytic, numeric, gc.floor);
      report.max_rel[cls] = std::max(report.max_rel[cls], rel);
      report.entries.push_back({view.name, view.cls, i, analytic, numeric, rel});
    }
  }
  return report;
}

}  // namespace spiketag
