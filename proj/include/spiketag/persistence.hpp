#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "spiketag/config.hpp"
#include "spiketag/error.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/training.hpp"

namespace spiketag {

// Layout: 8-byte magic, u64 LE header length, JSON header, then raw float32
// LE tensor payloads at the offsets listed in the header manifest.
inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'P', 'I', 'K',
                                                         'E', 'A', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epoch = 0;
  double val_f1 = 0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double best_f1 = -1;
};

struct Checkpoint {
  NetworkConfig network;
  TrainConfig train;
  CheckpointMeta meta;
  Network<float> params;
  Network<float> best;  // empty when not stored
  OptimizerState<float> optimizer;
};

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

inline void put_u64(std::ostream& out, std::uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(const char* b) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i)
    x |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return x;
}

inline void put_f32(std::string& buf, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline float get_f32(const char* b) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i)
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return std::bit_cast<float>(u);
}

inline nlohmann::json kv_json(const KeyValues& kv) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

template <typename Cfg>
Cfg cfg_from_json(const nlohmann::json& j) {
  Cfg c;
  for (const auto& [k, v] : j.items())
    if (!c.set(k, v.template get<std::string>()))
      throw FormatError("checkpoint has unknown config key '" + k + "'");
  return c;
}

// Structure of a parameter set with the same layer layout as `net`.
inline Network<float> network_skeleton(const NetworkConfig& cfg) {
  return init_network<float>(cfg, 0);
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["network"] = detail::kv_json(ck.network.to_key_values());
  header["train"] = detail::kv_json(ck.train.to_key_values());
  header["meta"] = {{"epoch", ck.meta.epoch},
                    {"val_f1", ck.meta.val_f1},
                    {"seed", ck.meta.seed},
                    {"best_epoch", ck.meta.best_epoch},
                    {"best_f1", ck.meta.best_f1}};
  header["optimizer_step"] = ck.optimizer.step;

  std::string payload;
  nlohmann::json manifest = nlohmann::json::array();
  auto add_set = [&](const std::string& prefix, const Network<float>& net) {
    for (const auto& v : parameter_views(net)) {
      manifest.push_back({{"name", prefix + v.name},
                          {"shape", v.shape},
                          {"offset", payload.size()},
                          {"count", v.values.size()}});
      for (float x : v.values) detail::put_f32(payload, x);
    }
  };
  add_set("params.", ck.params);
  if (!ck.best.empty()) add_set("best.", ck.best);
  if (!ck.optimizer.m.empty()) {
    add_set("adam_m.", ck.optimizer.m);
    add_set("adam_v.", ck.optimizer.v);
  }
  header["tensors"] = manifest;
  header["payload_bytes"] = payload.size();

  const std::string h = header.dump();
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u64(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing checkpoint");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  const std::uint64_t hlen = detail::get_u64(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw FormatError("checkpoint truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    if (header.at("format_version").get<int>() != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " +
                        header.at("format_version").dump());
    ck.network = detail::cfg_from_json<NetworkConfig>(header.at("network"));
    ck.train = detail::cfg_from_json<TrainConfig>(header.at("train"));
    const auto& meta = header.at("meta");
    ck.meta.epoch = meta.at("epoch").get<std::size_t>();
    ck.meta.val_f1 = meta.at("val_f1").get<double>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.best_epoch = meta.at("best_epoch").get<std::size_t>();
    ck.meta.best_f1 = meta.at("best_f1").get<double>();
    ck.optimizer.step = header.at("optimizer_step").get<std::uint64_t>();
    const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const char* payload = bytes.data() + 16 + hlen;
    if (bytes.size() - 16 - hlen < payload_bytes)
      throw FormatError("checkpoint truncated: payload has " +
                        std::to_string(bytes.size() - 16 - hlen) + " of " +
                        std::to_string(payload_bytes) + " bytes");

    struct Entry {
      Shape shape;
      std::size_t offset, count;
    };
    std::unordered_map<std::string, Entry> entries;
    for (const auto& t : header.at("tensors")) {
      Entry e{t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>(),
              t.at("count").get<std::size_t>()};
      if (shape_size(e.shape) != e.count || e.offset + 4 * e.count > payload_bytes)
        throw FormatError("checkpoint tensor '" + t.at("name").get<std::string>() +
                          "' is inconsistent");
      entries.emplace(t.at("name").get<std::string>(), e);
    }
    ck.network.validate();
    auto fill = [&](const std::string& prefix, Network<float>& net) {
      net = detail::network_skeleton(ck.network);
      for (auto& v : parameter_views(net)) {
        auto it = entries.find(prefix + v.name);
        if (it == entries.end())
          throw FormatError("checkpoint is missing tensor '" + prefix + v.name + "'");
        if (it->second.shape != v.shape)
          throw FormatError("checkpoint tensor '" + prefix + v.name + "' has shape " +
                            shape_string(it->second.shape) + ", expected " +
                            shape_string(v.shape));
        for (std::size_t i = 0; i < v.values.size(); ++i)
          v.values[i] = detail::get_f32(payload + it->second.offset + 4 * i);
      }
    };
    fill("params.", ck.params);
    if (entries.count("best.layer0.kernels")) fill("best.", ck.best);
    if (entries.count("adam_m.layer0.kernels")) {
      fill("adam_m.", ck.optimizer.m);
      fill("adam_v.", ck.optimizer.v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("checkpoint tensors are inconsistent: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ostringstream buf(std::ios::binary);
  save_checkpoint(buf, ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  const std::string s = buf.str();
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

inline Checkpoint make_checkpoint(const TrainState<float>& state,
                                  const NetworkConfig& ncfg,
                                  const TrainConfig& tcfg) {
  Checkpoint ck;
  ck.network = ncfg;
  ck.train = tcfg;
  ck.meta.epoch = state.epochs_done;
  ck.meta.val_f1 = state.log.empty() ? 0.0 : state.log.back().val.f1;
  ck.meta.seed = tcfg.seed;
  ck.meta.best_epoch = state.best_epoch;
  ck.meta.best_f1 = state.best_f1;
  ck.params = state.params;
  ck.best = state.best;
  ck.optimizer = state.optimizer;
  return ck;
}

// Inverse of make_checkpoint; the epoch log is not stored.
inline TrainState<float> resume_state(const Checkpoint& ck) {
  TrainState<float> s;
  s.params = ck.params;
  s.best = ck.best.empty() ? ck.params : ck.best;
  s.optimizer = ck.optimizer;
  s.epochs_done = ck.meta.epoch;
  s.best_epoch = ck.meta.best_epoch;
  s.best_f1 = ck.meta.best_f1;
  return s;
}

}  // namespace spiketag
