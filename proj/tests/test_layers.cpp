#include <gtest/gtest.h>

#include <vector>

#include "spiketag/layers.hpp"
#include "spiketag/rng.hpp"
#include "support/oracles.hpp"

using namespace spiketag;

namespace {

NetworkConfig small_config(SpikeMode mode = SpikeMode::ternary) {
  NetworkConfig c;
  c.spike_mode = mode;
  c.channels = 6;
  c.embedding_dim = 4;
  c.n_spiking_conv = 2;
  c.time_steps = 4;
  return c;
}

template <typename T>
Tensor<T> random_embeddings(std::size_t b, std::size_t r, std::size_t e, Rng& rng) {
  Tensor<T> x({b, r, e});
  for (T& v : x.values()) v = static_cast<T>(rng.normal());
  return x;
}

template <typename T>
Network<T> zero_network(const NetworkConfig& cfg) {
  Network<T> net = init_network<T>(cfg, 1);
  for (auto& layer : net) {
    layer.kernels.fill(T{0});
    layer.bias.fill(T{0});
  }
  return net;
}

}  // namespace

TEST(Encode, ZeroInputNeverSpikes) {
  NetworkConfig cfg = small_config();
  const Network<double> net = [&] {
    auto n = init_network<double>(cfg, 3);
    n[0].bias.fill(0);
    return n;
  }();
  auto state = NeuronState<double>::zeros({2, 5, cfg.channels});
  const Tensor<double> emb({2, 5, cfg.embedding_dim});
  for (std::size_t t = 0; t < 6; ++t) {
    const auto step = encode_step(emb, net[0], state, cfg);
    for (double s : step.spikes.values()) EXPECT_EQ(s, 0);
    state = step.next;
  }
}

TEST(Encode, ScalarCaseMatchesOracle) {
  NetworkConfig cfg;
  cfg.channels = 1;
  cfg.embedding_dim = 1;
  cfg.kernel = 1;
  cfg.padding = 0;
  cfg.n_spiking_conv = 1;
  Rng rng(8);
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    cfg.spike_mode = mode;
    for (int trial = 0; trial < 50; ++trial) {
      auto net = init_network<double>(cfg, static_cast<std::uint64_t>(trial));
      LayerParams<double>& enc = net[0];
      enc.kernels[0] = rng.uniform(-2, 2);
      enc.bias[0] = rng.uniform(-0.5, 0.5);
      enc.neuron->w_scd[0] = rng.uniform(0, 1);
      enc.neuron->w_vd[0] = rng.uniform(0, 1);
      const double x = rng.normal();
      const Tensor<double> emb({1, 1, 1}, x);
      const double drive = enc.kernels[0] * x + enc.bias[0];
      const auto ref = oracle::scalar_lif<double>(enc.neuron->w_scd[0], enc.neuron->w_vd[0],
                                                  enc.neuron->v_thr,
                                                  mode == SpikeMode::ternary,
                                                  std::vector<double>(10, drive));
      auto state = NeuronState<double>::zeros({1, 1, 1});
      for (std::size_t t = 0; t < 10; ++t) {
        state = encode_step(emb, enc, state, cfg).next;
        EXPECT_EQ(state.spk[0], ref.spk[t]);
        EXPECT_EQ(state.v[0], ref.v[t]);
      }
    }
  }
}

TEST(Encode, FirstStepIsThresholdedDrive) {
  NetworkConfig cfg = small_config(SpikeMode::binary);
  Rng rng(12);
  const auto net = init_network<double>(cfg, 5);
  const auto emb = random_embeddings<double>(2, 7, cfg.embedding_dim, rng);
  const auto drive = conv1d_same(emb, net[0].kernels, net[0].bias, 2, 1);
  const auto step = encode_step(emb, net[0], NeuronState<double>::zeros(drive.shape()), cfg);
  for (std::size_t i = 0; i < drive.size(); ++i)
    EXPECT_EQ(step.spikes[i], heaviside(drive[i] - 0.1));
}

TEST(SpikingConv, ZeroSpikesStaySilent) {
  NetworkConfig cfg = small_config();
  auto net = init_network<double>(cfg, 2);
  net[1].bias.fill(0);
  auto state = NeuronState<double>::zeros({1, 5, cfg.channels});
  const Tensor<double> in({1, 5, cfg.channels});
  for (int t = 0; t < 5; ++t) {
    const auto step = spiking_conv_step(in, net[1], state, cfg);
    for (double s : step.spikes.values()) EXPECT_EQ(s, 0);
    state = step.next;
  }
}

TEST(SpikingConv, RejectsOutOfAlphabetSpikes) {
  NetworkConfig cfg = small_config(SpikeMode::binary);
  const auto net = init_network<double>(cfg, 2);
  Tensor<double> in({1, 3, cfg.channels});
  in[4] = -1;
  EXPECT_THROW(spiking_conv_step(in, net[1], NeuronState<double>::zeros({1, 3, cfg.channels}), cfg),
               ValidationError);
  cfg.spike_mode = SpikeMode::ternary;
  in[4] = 0.5;
  EXPECT_THROW(spiking_conv_step(in, net[1], NeuronState<double>::zeros({1, 3, cfg.channels}), cfg),
               ValidationError);
}

TEST(SpikingConv, TernarySplitReconstructs) {
  Rng rng(3);
  Tensor<double> x({2, 4, 5});
  for (double& v : x.values()) v = static_cast<double>(rng.below(3)) - 1.0;
  const auto [pos, neg] = split_ternary(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(pos[i] + neg[i], x[i]);
    EXPECT_GE(pos[i], 0);
    EXPECT_LE(neg[i], 0);
  }
}

TEST(SpikingConv, EqualWeightsCollapseToSingleWeight) {
  NetworkConfig cfg = small_config(SpikeMode::ternary);
  auto net = init_network<double>(cfg, 4);
  net[1].neuron->w_fv_pos = 0.7;
  net[1].neuron->w_fv_neg = 0.7;
  Rng rng(6);
  Tensor<double> x({2, 6, cfg.channels});
  for (double& v : x.values()) v = static_cast<double>(rng.below(3)) - 1.0;
  const auto ternary = spiking_conv_drive(x, net[1], cfg);
  Tensor<double> scaled = x;
  for (double& v : scaled.values()) v *= 0.7;
  const auto single = conv1d_same(scaled, net[1].kernels, net[1].bias, 2, 1);
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_EQ(ternary[i], single[i]);

  // The split form w+ conv(pos) + w- conv(neg) agrees up to rounding.
  net[1].neuron->w_fv_neg = 1.3;
  const auto [pos, neg] = split_ternary(x);
  const Tensor<double> zero({cfg.channels});
  const auto cp = conv1d_same(pos, net[1].kernels, zero, 2, 1);
  const auto cn = conv1d_same(neg, net[1].kernels, zero, 2, 1);
  const auto drive = spiking_conv_drive(x, net[1], cfg);
  for (std::size_t i = 0; i < drive.size(); ++i)
    EXPECT_NEAR(drive[i], 0.7 * cp[i] + 1.3 * cn[i] + net[1].bias[i % cfg.channels], 1e-12);
}

TEST(Output, ZeroSpikesGiveBias) {
  NetworkConfig cfg = small_config();
  auto net = init_network<double>(cfg, 4);
  net.back().bias = Tensor<double>::vector({0.5, -1, 2});
  const auto logits = output_logits(Tensor<double>({2, 3, cfg.channels}), net.back());
  for (std::size_t tok = 0; tok < 6; ++tok)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(logits[tok * 3 + c], net.back().bias[c]);
}

TEST(Output, IdentityWeightCopiesChannels) {
  LayerParams<double> out;
  out.kind = LayerKind::output;
  out.kernels = Tensor<double>({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  out.bias = Tensor<double>({3});
  const Tensor<double> x({1, 2, 3}, std::vector<double>{1, -1, 0, 0, 1, 1});
  const auto y = output_logits(x, out);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Output, MatchesMatvecOracle) {
  NetworkConfig cfg = small_config();
  const auto net = init_network<double>(cfg, 9);
  Rng rng(10);
  Tensor<double> x({2, 5, cfg.channels});
  for (double& v : x.values()) v = static_cast<double>(rng.below(3)) - 1.0;
  const auto y = output_logits(x, net.back());
  const std::vector<double> w(net.back().kernels.values().begin(), net.back().kernels.values().end());
  const std::vector<double> b(net.back().bias.values().begin(), net.back().bias.values().end());
  for (std::size_t tok = 0; tok < 10; ++tok) {
    const std::vector<double> xin(x.data() + tok * cfg.channels, x.data() + (tok + 1) * cfg.channels);
    const auto ref = oracle::matvec(w, 3, cfg.channels, xin, b);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y[tok * 3 + c], ref[c], 1e-12);
  }
}

TEST(Forward, ProbabilitiesSumToT) {
  Rng rng(1);
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    NetworkConfig cfg = small_config(mode);
    const auto netf = init_network<float>(cfg, 2);
    const auto netd = init_network<double>(cfg, 2);
    const auto embd = random_embeddings<double>(3, 7, cfg.embedding_dim, rng);
    const auto pf = forward(embd.cast<float>(), netf, cfg).prob_class;
    const auto pd = forward(embd, netd, cfg).prob_class;
    for (std::size_t tok = 0; tok < 21; ++tok) {
      float sf = 0;
      double sd = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        sf += pf[tok * 3 + c];
        sd += pd[tok * 3 + c];
        EXPECT_GT(pd[tok * 3 + c], 0);
        EXPECT_LT(pd[tok * 3 + c], static_cast<double>(cfg.time_steps));
      }
      EXPECT_NEAR(sf, static_cast<float>(cfg.time_steps), 1e-5f);
      EXPECT_NEAR(sd, static_cast<double>(cfg.time_steps), 1e-10);
    }
  }
}

TEST(Forward, OutputBiasDecidesWhenWeightsAreZero) {
  NetworkConfig cfg = small_config();
  cfg.time_steps = 1;
  auto net = zero_network<double>(cfg);
  net.back().bias = Tensor<double>::vector({0, 10, -10});
  Rng rng(2);
  const auto p = forward(random_embeddings<double>(2, 4, cfg.embedding_dim, rng), net, cfg).prob_class;
  for (std::size_t tok = 0; tok < 8; ++tok) {
    EXPECT_LT(p[tok * 3 + 0], 1e-4);
    EXPECT_GT(p[tok * 3 + 1], 1 - 1e-4);
    EXPECT_LT(p[tok * 3 + 2], 1e-8);
  }
}

TEST(Forward, DoublingTDoublesConstantOutput) {
  NetworkConfig cfg = small_config();
  auto net = zero_network<double>(cfg);
  net.back().bias = Tensor<double>::vector({0.3, -0.2, 0.1});
  Rng rng(3);
  const auto emb = random_embeddings<double>(1, 5, cfg.embedding_dim, rng);
  const auto a = forward(emb, net, cfg).prob_class;
  cfg.time_steps *= 2;
  const auto b = forward(emb, net, cfg).prob_class;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(b[i], 2 * a[i]);
}

TEST(Forward, PreservesLengthAndSpikeAlphabet) {
  Rng rng(4);
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    NetworkConfig cfg = small_config(mode);
    const auto net = init_network<float>(cfg, 7);
    for (std::size_t r : {1u, 2u, 7u, 83u}) {
      const auto emb = random_embeddings<float>(2, r, cfg.embedding_dim, rng);
      const auto res = forward(emb, net, cfg);
      EXPECT_EQ(res.prob_class.dim(1), r);
      for (const auto& layer : res.trace.layers) {
        ASSERT_EQ(layer.states.size(), cfg.time_steps);
        for (const auto& st : layer.states) {
          EXPECT_EQ(st.spk.dim(1), r);
          EXPECT_NO_THROW(check_spike_alphabet(st.spk, mode));
        }
      }
    }
  }
}

TEST(Forward, Deterministic) {
  NetworkConfig cfg = small_config();
  Rng rng(5);
  const auto emb = random_embeddings<float>(2, 6, cfg.embedding_dim, rng);
  const auto a = forward(emb, init_network<float>(cfg, 42), cfg).prob_class;
  const auto b = forward(emb, init_network<float>(cfg, 42), cfg).prob_class;
  EXPECT_TRUE(a == b);
}

TEST(Forward, MaskedTokensAreInert) {
  NetworkConfig cfg = small_config();
  const auto net = init_network<double>(cfg, 8);
  Rng rng(6);
  auto emb = random_embeddings<double>(2, 6, cfg.embedding_dim, rng);
  Tensor<double> mask({2, 6}, 1.0);
  mask(1, 4) = mask(1, 5) = 0;
  const auto a = forward(emb, mask, net, cfg).prob_class;
  for (std::size_t j = 4; j < 6; ++j)
    for (std::size_t e = 0; e < cfg.embedding_dim; ++e) emb(1, j, e) = 100.0 * rng.normal();
  const auto b = forward(emb, mask, net, cfg).prob_class;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i / 3] != 0) EXPECT_EQ(a[i], b[i]);

  // A padded row equals the same sentence run alone.
  Tensor<double> alone({1, 4, cfg.embedding_dim});
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t e = 0; e < cfg.embedding_dim; ++e) alone(0, j, e) = emb(1, j, e);
  const auto c = forward(alone, net, cfg).prob_class;
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(c(0, j, k), a(1, j, k));
}

TEST(Network, InitMatchesConfig) {
  NetworkConfig cfg = small_config();
  const auto net = init_network<float>(cfg, 1);
  ASSERT_EQ(net.size(), cfg.n_spiking_conv + 2);
  EXPECT_EQ(net[0].kernels.shape(), (Shape{cfg.channels, cfg.embedding_dim, 5}));
  EXPECT_EQ(net[1].kernels.shape(), (Shape{cfg.channels, cfg.channels, 5}));
  EXPECT_EQ(net.back().kernels.shape(), (Shape{3, cfg.channels}));
  for (std::size_t i = 0; i + 1 < net.size(); ++i) {
    for (float d : net[i].neuron->w_scd.values()) EXPECT_FLOAT_EQ(d, 0.1f);
    for (float d : net[i].neuron->w_vd.values()) EXPECT_FLOAT_EQ(d, 0.1f);
    EXPECT_EQ(net[i].neuron->w_fv_pos, 1.0f);
    EXPECT_EQ(net[i].neuron->w_fv_neg, 1.0f);
    for (float b : net[i].bias.values()) EXPECT_EQ(b, 0.0f);
  }
  const float limit = std::sqrt(6.0f / (cfg.embedding_dim * 5 + cfg.channels * 5));
  for (float w : net[0].kernels.values()) EXPECT_LE(std::abs(w), limit);
  EXPECT_FALSE(net[0].kernels == init_network<float>(cfg, 2)[0].kernels);
}

TEST(Network, ConfigValidation) {
  NetworkConfig cfg = small_config();
  cfg.n_spiking_conv = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.time_steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.padding = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  auto net = init_network<float>(cfg, 1);
  net.pop_back();
  EXPECT_THROW(forward(Tensor<float>({1, 3, cfg.embedding_dim}), net, cfg), ConfigError);
}
