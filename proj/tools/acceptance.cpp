// Runs the eight acceptance criteria and prints one PASS/FAIL line for each.
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "spiketag/spiketag.hpp"
#include "support/oracles.hpp"

using namespace spiketag;

namespace {

const std::string kData = SPIKETAG_DATA_DIR;
const std::string kGolden = SPIKETAG_GOLDEN_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

Outcome gradient_validation() {
  double worst = 0;
  int runs = 0;
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary})
    for (Centering c : {Centering::zero, Centering::threshold})
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GradCheckConfig gc;
        gc.spike_mode = mode;
        gc.centering = c;
        gc.seed = seed;
        const auto r = gradient_check(gc);
        for (std::size_t k = 0; k < kNumParamClasses; ++k)
          if (!r.present[k])
            return {false, std::string("no entries for ") + to_string(static_cast<ParamClass>(k))};
        worst = std::max(worst, r.max_error());
        ++runs;
      }
  return {worst < 1e-4, std::to_string(runs) + " runs, max rel error " + fmt(worst, 3)};
}

Outcome lif_oracle() {
  Rng rng(2024);
  int configs = 0;
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    for (int trial = 0; trial < 100; ++trial, ++configs) {
      const std::size_t steps = 1 + rng.below(16);
      const std::size_t c = 1 + rng.below(6);
      const Shape shape{1 + rng.below(3), 1 + rng.below(5), c};
      NeuronParams<float> p;
      p.w_scd = Tensor<float>({c});
      p.w_vd = Tensor<float>({c});
      for (float& x : p.w_scd.values()) x = static_cast<float>(rng.uniform(0, 1));
      for (float& x : p.w_vd.values()) x = static_cast<float>(rng.uniform(0, 1));
      p.v_thr = static_cast<float>(rng.uniform(0.01, 0.5));
      std::vector<Tensor<float>> drives;
      for (std::size_t t = 0; t < steps; ++t) {
        Tensor<float> d(shape);
        for (float& x : d.values()) x = static_cast<float>(rng.uniform(-1, 1));
        drives.push_back(d);
      }
      std::vector<NeuronState<float>> states;
      auto state = NeuronState<float>::zeros(shape);
      for (const auto& d : drives) {
        state = lif_step(state, d, p, mode).next;
        states.push_back(state);
      }
      for (std::size_t i = 0; i < shape_size(shape); ++i) {
        std::vector<float> drive;
        for (const auto& d : drives) drive.push_back(d[i]);
        const auto ref = oracle::scalar_lif<float>(p.w_scd[i % c], p.w_vd[i % c], p.v_thr,
                                                   mode == SpikeMode::ternary, drive);
        for (std::size_t t = 0; t < steps; ++t) {
          const auto& s = states[t];
          if (std::bit_cast<std::uint32_t>(s.spk[i]) != std::bit_cast<std::uint32_t>(ref.spk[t]) ||
              std::bit_cast<std::uint32_t>(s.isc[i]) != std::bit_cast<std::uint32_t>(ref.isc[t]) ||
              std::bit_cast<std::uint32_t>(s.v[i]) != std::bit_cast<std::uint32_t>(ref.v[t]))
            return {false, std::string(to_string(mode)) + " config " + std::to_string(trial) +
                               " differs at step " + std::to_string(t + 1)};
        }
      }
    }
  }
  return {true, std::to_string(configs) + " configurations bit-exact"};
}

Outcome table5_energy() {
  struct Row {
    const char* name;
    double gflops, mj;
  };
  const Row rows[] = {{"HAST", 0.5232, 6.5412},       {"Seq2Seq4ATE", 2.4888, 31.1104},
                      {"DECNN", 0.2580, 3.2256},      {"CDA", 8.5409, 106.7618},
                      {"SoftProtoE", 0.2580, 3.2256}, {"BERT-RC", 7.6448, 95.5599},
                      {"BERT-PT", 7.6451, 95.5636},   {"Self-Training", 7.6451, 95.5636}};
  double worst = 0;
  for (const Row& r : rows) {
    const double mj = dnn_energy(r.gflops * 1e9) * 1e3;
    worst = std::max(worst, std::abs(mj - r.mj) / r.mj);
  }
  return {worst < 2e-3, "8 rows, max rel error " + fmt(worst, 3)};
}

Outcome review_fixtures() {
  const auto gold = load_corpus(kData + "/fixtures/reviews_gold.tsv").examples;
  const auto pred = load_corpus(kData + "/fixtures/reviews_pred.tsv").examples;
  if (gold.size() != 3 || pred.size() != 3) return {false, "fixtures must hold 3 reviews"};
  const double expect[3] = {1, 1, 0};
  std::string got;
  bool ok = true;
  for (std::size_t i = 0; i < 3; ++i) {
    const double f1 =
        span_f1(extract_spans(gold[i].labels), extract_spans(pred[i].labels)).f1;
    ok = ok && f1 == expect[i] && gold[i].tokens == pred[i].tokens;
    got += (i ? ", " : "") + fmt(f1);
  }
  return {ok, "F1 = " + got};
}

struct ToyTask {
  std::vector<Example> train, val;
  EmbeddingTable table;
};

ToyTask toy_task() {
  RunConfig rc;
  apply_config_file(rc, kData + "/toy/toy.conf");
  ToyTask t;
  const auto corpus = load_corpus(kData + "/../" + rc.data).examples;
  t.table = load_embeddings(kData + "/../" + rc.embeddings);
  std::tie(t.train, t.val) = split_validation(corpus, rc.train.n_val, rc.train.seed);
  return t;
}

Outcome toy_learning() {
  const ToyTask t = toy_task();
  NetworkConfig ncfg;
  ncfg.embedding_dim = t.table.dim();
  TrainConfig tcfg;
  TrainState<float> state = start_training<float>(ncfg, tcfg);
  for (std::size_t epoch = 1; epoch <= 50; ++epoch) {
    tcfg.epochs = epoch;
    train(state, t.train, t.val, t.table, tcfg, ncfg);
    if (state.log.back().val.f1 >= 0.9)
      return {true, "val F1 " + fmt(state.log.back().val.f1) + " at epoch " + std::to_string(epoch) +
                        " (" + std::to_string(t.train.size()) + " train / " +
                        std::to_string(t.val.size()) + " val)"};
  }
  return {false, "best val F1 " + fmt(state.best_f1) + " after 50 epochs"};
}

Outcome ablation() {
  constexpr std::size_t kEpochs = 8;
  const ToyTask t = toy_task();
  double mean[2][2] = {};  // [ternary?][T==6?]
  for (int ternary = 0; ternary < 2; ++ternary)
    for (int t6 = 0; t6 < 2; ++t6)
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        NetworkConfig ncfg;
        ncfg.embedding_dim = t.table.dim();
        ncfg.spike_mode = ternary ? SpikeMode::ternary : SpikeMode::binary;
        ncfg.time_steps = t6 ? 6 : 4;
        TrainConfig tcfg;
        tcfg.epochs = kEpochs;
        tcfg.seed = seed;
        const auto st = train<float>(t.train, t.val, t.table, tcfg, ncfg);
        mean[ternary][t6] += st.best_f1 / 3;
      }
  const double slack = -0.01;
  const bool ok = mean[1][1] - mean[0][1] >= slack && mean[1][0] - mean[0][0] >= slack &&
                  mean[1][1] - mean[1][0] >= slack && mean[0][1] - mean[0][0] >= slack;
  return {ok, "mean best val F1 over 3 seeds, " + std::to_string(kEpochs) +
                  " epochs: ternary T6 " + fmt(mean[1][1]) + ", binary T6 " + fmt(mean[0][1]) +
                  ", ternary T4 " + fmt(mean[1][0]) + ", binary T4 " + fmt(mean[0][0])};
}

Outcome structural() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  Rng rng(99);

  bool lengths = true, alphabet = true, sums = true;
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    NetworkConfig cfg;
    cfg.spike_mode = mode;
    cfg.channels = 16;
    cfg.embedding_dim = 8;
    const auto net = init_network<float>(cfg, 3);
    for (std::size_t r : {1u, 2u, 7u, 83u}) {
      Tensor<float> emb({2, r, 8});
      for (float& x : emb.values()) x = static_cast<float>(3 * rng.normal());
      const auto fr = forward(emb, net, cfg);
      lengths = lengths && fr.prob_class.dim(1) == r;
      for (const auto& layer : fr.trace.layers)
        for (const auto& st : layer.states) {
          lengths = lengths && st.spk.dim(1) == r;
          for (float s : st.spk.values())
            alphabet = alphabet && (s == 0 || s == 1 || (mode == SpikeMode::ternary && s == -1));
        }
      for (std::size_t tok = 0; tok < 2 * r; ++tok) {
        const float s = fr.prob_class[3 * tok] + fr.prob_class[3 * tok + 1] + fr.prob_class[3 * tok + 2];
        sums = sums && std::abs(s - 6.0f) <= 1e-5f;
      }
    }
  }
  check(lengths, "length preservation");
  check(alphabet, "spike alphabet");
  check(sums, "prob_class sums to T");

  {
    NetworkConfig cfg;
    cfg.channels = 6;
    cfg.embedding_dim = 4;
    cfg.n_spiking_conv = 2;
    const auto net = init_network<double>(cfg, 5);
    Tensor<double> emb({2, 5, 4}), labels({2, 5}), mask({2, 5}, 1.0);
    for (double& x : emb.values()) x = rng.normal();
    for (double& y : labels.values()) y = static_cast<double>(rng.below(3));
    mask(1, 3) = mask(1, 4) = 0;
    auto grads = [&] {
      std::vector<double> out;
      const auto g = backward(forward(emb, mask, net, cfg).trace, labels, mask, net, cfg);
      for (const auto& v : parameter_views(g)) out.insert(out.end(), v.values.begin(), v.values.end());
      return out;
    };
    const auto before = grads();
    for (std::size_t e = 0; e < 4; ++e) emb(1, 4, e) = 40 * rng.normal();
    labels(1, 3) = 2 - labels(1, 3);
    check(grads() == before, "masked-token gradient isolation");

    const auto fr = forward(emb, mask, net, cfg);
    BackwardOptions norm;
    norm.loss.normalize_by_steps = true;
    norm.loss.time_steps = cfg.time_steps;
    const auto a = backward(fr.trace, labels, mask, net, cfg);
    const auto b = backward(fr.trace, labels, mask, net, cfg, norm);
    const auto av = parameter_views(a), bv = parameter_views(b);
    double worst = 0;
    for (std::size_t i = 0; i < av.size(); ++i)
      for (std::size_t k = 0; k < av[i].values.size(); ++k)
        worst = std::max(worst, std::abs(av[i].values[k] - bv[i].values[k]));
    check(worst <= 1e-10, "gradient invariance under /T");
  }

  {
    NetworkConfig cfg;
    cfg.embedding_dim = 16;
    Checkpoint ck;
    ck.network = cfg;
    ck.params = init_network<float>(cfg, 8);
    ck.best = init_network<float>(cfg, 9);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_checkpoint(buf, ck);
    const Checkpoint back = load_checkpoint(buf);
    bool exact = back.network == ck.network;
    const auto a = parameter_views(ck.params);
    const auto b = parameter_views(back.params);
    for (std::size_t i = 0; i < a.size() && exact; ++i)
      for (std::size_t k = 0; k < a[i].values.size(); ++k)
        exact = exact && std::bit_cast<std::uint32_t>(a[i].values[k]) ==
                             std::bit_cast<std::uint32_t>(b[i].values[k]);
    check(exact, "checkpoint round trip");
  }

  {
    ToyCorpusConfig tc;
    tc.sentences = 24;
    const auto corpus = make_toy_corpus(tc);
    const std::vector<Example> tr(corpus.examples.begin(), corpus.examples.begin() + 18);
    const std::vector<Example> va(corpus.examples.begin() + 18, corpus.examples.end());
    NetworkConfig ncfg;
    ncfg.channels = 16;
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.learning_rate = 1e-3;
    const auto x = train<float>(tr, va, corpus.embeddings, tcfg, ncfg);
    const auto y = train<float>(tr, va, corpus.embeddings, tcfg, ncfg);
    bool same = x.log.size() == y.log.size();
    for (std::size_t i = 0; same && i < x.log.size(); ++i)
      same = x.log[i].train_loss == y.log[i].train_loss && x.log[i].val.f1 == y.log[i].val.f1;
    const auto a = parameter_views(x.params), b = parameter_views(y.params);
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin());
    check(same, "deterministic reruns");
  }

  if (failed.empty()) return {true, "7 invariant groups hold"};
  std::string msg = "failed:";
  for (const auto& f : failed) msg += " [" + f + "]";
  return {false, msg};
}

Outcome hyperparameters() {
  std::ostringstream out, err;
  const int code = run_cli({"--print-config", "gradcheck"}, out, err);
  std::ifstream f(kGolden + "/default_config.txt");
  std::stringstream golden;
  golden << f.rdbuf();
  if (code != 0 || out.str() != golden.str()) return {false, "effective config differs from golden"};
  const RunConfig rc;
  const bool values = rc.train.batch_size == 8 && rc.train.learning_rate == 1e-4 &&
                      rc.network.v_thr == 0.1 && rc.network.decay_init == 0.1 &&
                      rc.network.time_steps == 6 && rc.network.alpha == 2.0;
  return {values, "batch 8, lr 1e-4, v_thr 0.1, decays 0.1, T 6, alpha 2"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gradient validation", 30, gradient_validation},
      {2, "LIF oracle equivalence", 5, lif_oracle},
      {3, "energy arithmetic vs Table 5 DNN rows", 1, table5_energy},
      {4, "span-F1 on the three review fixtures", 1, review_fixtures},
      {5, "toy-corpus learning", 600, toy_learning},
      {6, "ablation direction", 3600, ablation},
      {7, "structural invariants", 60, structural},
      {8, "hyperparameter conformance", 1, hyperparameters},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.budget_s) + " s budget";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.title
              << " -- " << o.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
