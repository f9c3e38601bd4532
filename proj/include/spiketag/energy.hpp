#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spiketag/config.hpp"
#include "spiketag/data.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

inline constexpr double kFlopEnergy = 12.5e-12;  // J per FLOP
inline constexpr double kSopEnergy = 77e-15;     // J per synaptic operation
inline constexpr double kSignEnergy = 3.7e-12;   // J per negative-spike SOP

// c output channels, d input channels, (w_c x h_c) output map, (w_w x h_w)
// kernel.
inline double flops_conv(double c, double d, double w_c, double h_c,
                         double w_w, double h_w) {
  return c * d * w_c * h_c * w_w * h_w * 2;
}

inline double flops_fc(double u, double u_prev) { return u * u_prev * 2; }

inline double dnn_energy(double flops) { return kFlopEnergy * flops; }

// Fraction of (neuron, step) pairs with a non-zero spike; -1 counts. With a
// [B x R] mask only real tokens are counted.
template <typename T>
double firing_rate(const std::vector<Tensor<T>>& spikes,
                   const Tensor<T>* mask = nullptr) {
  if (spikes.empty()) return 0;
  double fired = 0, neurons = 0;
  for (const Tensor<T>& s : spikes) {
    const std::size_t c = s.rank() == 0 ? 1 : s.shape().back();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask && (*mask)[i / c] == T{0}) continue;
      neurons += 1;
      fired += s[i] != T{0};
    }
  }
  return neurons == 0 ? 0.0 : fired / neurons;
}

enum class CostModel { snn, dnn };

struct LayerProfile {
  std::string name;
  std::string kind;  // conv | fc
  double flops = 0;
  std::optional<double> gamma;  // spiking layers only
  double sops = 0;
  double neg_sops = 0;  // SOPs driven by -1 spikes
  bool flop_costed = true;
};

inline double layer_energy(const LayerProfile& p, CostModel model,
                           SpikeMode mode) {
  if (model == CostModel::dnn || p.flop_costed) return kFlopEnergy * p.flops;
  double e = kSopEnergy * p.sops;
  if (mode == SpikeMode::ternary) e += kSignEnergy * p.neg_sops;
  return e;
}

struct EnergyReport {
  SpikeMode mode = SpikeMode::ternary;
  std::size_t sentences = 0;
  std::vector<LayerProfile> layers;

  double energy(const LayerProfile& p) const {
    return layer_energy(p, CostModel::snn, mode);
  }
  double total_flops() const {
    double s = 0;
    for (const auto& l : layers) s += l.flops;
    return s;
  }
  double total_sops() const {
    double s = 0;
    for (const auto& l : layers) s += l.sops;
    return s;
  }
  double total_energy() const {
    double s = 0;
    for (const auto& l : layers) s += energy(l);
    return s;
  }
};

// Per-sentence averages over `examples`. The encoding conv runs once per
// sentence and the decoder once per step, both FLOP-costed; spiking conv
// layers cost T * gamma * FLOPs SOPs where gamma is the firing rate of the
// spikes they receive.
template <typename T>
EnergyReport profile_network(const Network<T>& net,
                             const std::vector<Example>& examples,
                             const EmbeddingTable& table,
                             const NetworkConfig& cfg,
                             std::size_t batch_size = 32) {
  validate_network(net, cfg);
  if (examples.empty()) throw ConfigError("energy profile needs at least one sentence");
  const std::size_t n_spiking = net.size() - 1;
  const double steps = static_cast<double>(cfg.time_steps);
  const double k = static_cast<double>(cfg.kernel);

  std::vector<double> spikes(n_spiking, 0), neg(n_spiking, 0);
  double tokens = 0;
  for (const Batch<T>& b : batchify<T>(examples, table, batch_size)) {
    const ForwardResult<T> fr = forward(b.embeddings, b.mask, net, cfg);
    for (std::size_t l = 0; l < n_spiking; ++l)
      for (const auto& st : fr.trace.layers[l].states)
        for (T x : st.spk.values()) {
          spikes[l] += x != T{0};
          neg[l] += x < T{0};
        }
    for (T m : b.mask.values()) tokens += m != T{0};
  }
  const double n = static_cast<double>(examples.size());
  const double r_mean = tokens / n;

  EnergyReport rep;
  rep.mode = cfg.spike_mode;
  rep.sentences = examples.size();
  {
    LayerProfile p;
    p.name = "encoding";
    p.kind = "conv";
    p.flops = flops_conv(static_cast<double>(net[0].kernels.dim(0)),
                         static_cast<double>(net[0].kernels.dim(1)), r_mean, 1, k, 1);
    rep.layers.push_back(p);
  }
  for (std::size_t l = 1; l < n_spiking; ++l) {
    const double c = static_cast<double>(net[l].kernels.dim(0));
    const double d = static_cast<double>(net[l].kernels.dim(1));
    LayerProfile p;
    p.name = "conv" + std::to_string(l);
    p.kind = "conv";
    p.flop_costed = false;
    p.flops = flops_conv(c, d, r_mean, 1, k, 1);
    p.gamma = tokens == 0 ? 0.0 : spikes[l - 1] / (steps * tokens * d);
    // T * gamma * FLOPs reduces to (spikes received) * fan-out per spike.
    p.sops = spikes[l - 1] * c * k * 2 / n;
    p.neg_sops = neg[l - 1] * c * k * 2 / n;
    rep.layers.push_back(p);
  }
  {
    const LayerParams<T>& out = net.back();
    LayerProfile p;
    p.name = "output";
    p.kind = "fc";
    p.flops = steps * r_mean *
              flops_fc(static_cast<double>(out.kernels.dim(0)),
                       static_cast<double>(out.kernels.dim(1)));
    rep.layers.push_back(p);
  }
  return rep;
}

inline void write_energy_tsv(std::ostream& out, const EnergyReport& rep) {
  out << "name\tkind\tflops\tgamma\tsops\tenergy_mJ\n";
  for (const auto& l : rep.layers)
    out << l.name << '\t' << l.kind << '\t' << format_real(l.flops) << '\t'
        << (l.gamma ? format_real(*l.gamma) : "-") << '\t'
        << format_real(l.sops) << '\t' << format_real(rep.energy(l) * 1e3)
        << '\n';
  out << "TOTAL\t-\t" << format_real(rep.total_flops()) << "\t-\t"
      << format_real(rep.total_sops()) << '\t'
      << format_real(rep.total_energy() * 1e3) << '\n';
}

inline nlohmann::json energy_json(const EnergyReport& rep) {
  nlohmann::json j;
  j["spike_mode"] = to_string(rep.mode);
  j["sentences"] = rep.sentences;
  j["constants"] = {{"flop_J", kFlopEnergy},
                    {"sop_J", kSopEnergy},
                    {"sign_J", kSignEnergy}};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : rep.layers) {
    nlohmann::json e;
    e["name"] = l.name;
    e["kind"] = l.kind;
    e["flops"] = l.flops;
    e["gamma"] = l.gamma ? nlohmann::json(*l.gamma) : nlohmann::json(nullptr);
    e["sops"] = l.sops;
    e["neg_sops"] = l.neg_sops;
    e["sign_energy_mJ"] =
        (!l.flop_costed && rep.mode == SpikeMode::ternary)
            ? kSignEnergy * l.neg_sops * 1e3
            : 0.0;
    e["energy_mJ"] = rep.energy(l) * 1e3;
    layers.push_back(e);
  }
  j["layers"] = layers;
  j["total"] = {{"flops", rep.total_flops()},
                {"sops", rep.total_sops()},
                {"energy_mJ", rep.total_energy() * 1e3}};
  return j;
}

}  // namespace spiketag
