#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "spiketag/error.hpp"
#include "spiketag/neuron.hpp"

namespace spiketag {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Shortest representation that parses back to the same double.
inline std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general);
  return std::string(buf, res.ptr);
}

inline std::string format_real(float x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general);
  return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& key, const std::string& s) {
  double x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
  }
  return x;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& s) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" +
                      s + "'");
  }
  return x;
}

struct NetworkConfig {
  std::size_t time_steps = 6;
  SpikeMode spike_mode = SpikeMode::ternary;
  std::size_t channels = 128;
  std::size_t kernel = 5;
  std::size_t padding = 2;
  std::size_t stride = 1;
  std::size_t n_spiking_conv = 3;
  double v_thr = 0.1;
  double decay_init = 0.1;
  double alpha = 2.0;
  // 0 means "take it from the embedding table".
  std::size_t embedding_dim = 0;
  Centering surrogate_centering = Centering::zero;

  void validate() const {
    if (time_steps < 1) throw ConfigError("time_steps must be >= 1");
    if (n_spiking_conv < 1 || n_spiking_conv > 4)
      throw ConfigError("n_spiking_conv must be in [1, 4]");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (kernel < 1) throw ConfigError("kernel must be >= 1");
    if (padding >= kernel)
      throw ConfigError("padding must be smaller than kernel");
    if (stride != 1 || 2 * padding + 1 != kernel)
      throw ConfigError(
          "token labeling needs length-preserving convolutions: stride=1 and "
          "kernel = 2*padding + 1");
    if (!(v_thr > 0)) throw ConfigError("v_thr must be positive");
    if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  }

  bool set(const std::string& key, const std::string& value) {
    if (key == "time_steps") time_steps = parse_count(key, value);
    else if (key == "spike_mode") spike_mode = parse_spike_mode(value);
    else if (key == "channels") channels = parse_count(key, value);
    else if (key == "kernel") kernel = parse_count(key, value);
    else if (key == "padding") padding = parse_count(key, value);
    else if (key == "stride") stride = parse_count(key, value);
    else if (key == "n_spiking_conv") n_spiking_conv = parse_count(key, value);
    else if (key == "v_thr") v_thr = parse_real(key, value);
    else if (key == "decay_init") decay_init = parse_real(key, value);
    else if (key == "alpha") alpha = parse_real(key, value);
    else if (key == "embedding_dim") embedding_dim = parse_count(key, value);
    else if (key == "surrogate_centering") surrogate_centering = parse_centering(value);
    else return false;
    return true;
  }

  KeyValues to_key_values() const {
    return {
        {"time_steps", std::to_string(time_steps)},
        {"spike_mode", to_string(spike_mode)},
        {"channels", std::to_string(channels)},
        {"kernel", std::to_string(kernel)},
        {"padding", std::to_string(padding)},
        {"stride", std::to_string(stride)},
        {"n_spiking_conv", std::to_string(n_spiking_conv)},
        {"v_thr", format_real(v_thr)},
        {"decay_init", format_real(decay_init)},
        {"alpha", format_real(alpha)},
        {"embedding_dim", std::to_string(embedding_dim)},
        {"surrogate_centering", to_string(surrogate_centering)},
    };
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("optimizer must be sgd or adam, got '" + s + "'");
}

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t n_val = 150;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 &&
          adam_beta2 < 1))
      throw ConfigError("adam betas must be in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  }

  bool set(const std::string& key, const std::string& value) {
    if (key == "batch_size") batch_size = parse_count(key, value);
    else if (key == "learning_rate") learning_rate = parse_real(key, value);
    else if (key == "epochs") epochs = parse_count(key, value);
    else if (key == "seed") seed = parse_count(key, value);
    else if (key == "optimizer") optimizer = parse_optimizer(value);
    else if (key == "adam_beta1") adam_beta1 = parse_real(key, value);
    else if (key == "adam_beta2") adam_beta2 = parse_real(key, value);
    else if (key == "adam_eps") adam_eps = parse_real(key, value);
    else if (key == "n_val") n_val = parse_count(key, value);
    else return false;
    return true;
  }

  KeyValues to_key_values() const {
    return {
        {"batch_size", std::to_string(batch_size)},
        {"learning_rate", format_real(learning_rate)},
        {"epochs", std::to_string(epochs)},
        {"seed", std::to_string(seed)},
        {"optimizer", to_string(optimizer)},
        {"adam_beta1", format_real(adam_beta1)},
        {"adam_beta2", format_real(adam_beta2)},
        {"adam_eps", format_real(adam_eps)},
        {"n_val", std::to_string(n_val)},
    };
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace spiketag
