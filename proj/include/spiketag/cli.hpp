#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spiketag/config.hpp"
#include "spiketag/data.hpp"
#include "spiketag/energy.hpp"
#include "spiketag/error.hpp"
#include "spiketag/gradcheck.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/metrics.hpp"
#include "spiketag/persistence.hpp"
#include "spiketag/training.hpp"

namespace spiketag {

// Everything a subcommand can be configured with. The config file is flat
// key=value text; command-line flags override it.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  std::string data;
  std::string embeddings;
  std::string checkpoint;
  std::string out;
  LabelMode label_mode = LabelMode::strict;

  void set(const std::string& key, const std::string& value) {
    if (network.set(key, value) || train.set(key, value)) return;
    if (key == "data") data = value;
    else if (key == "embeddings") embeddings = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "out") out = value;
    else if (key == "label_mode") label_mode = parse_label_mode(value);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  KeyValues to_key_values() const {
    KeyValues kv = network.to_key_values();
    const KeyValues t = train.to_key_values();
    kv.insert(kv.end(), t.begin(), t.end());
    kv.emplace_back("label_mode", label_mode == LabelMode::strict ? "strict" : "lenient");
    kv.emplace_back("data", data);
    kv.emplace_back("embeddings", embeddings);
    kv.emplace_back("checkpoint", checkpoint);
    kv.emplace_back("out", out);
    return kv;
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// '#' starts a comment; blank lines are ignored.
inline void apply_config_text(RunConfig& rc, std::istream& in) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
    rc.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(rc, in);
}

inline void write_config(std::ostream& out, const RunConfig& rc) {
  for (const auto& [k, v] : rc.to_key_values()) out << k << '=' << v << '\n';
}

namespace detail {

struct CliOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string data, embeddings, ckpt, out, spike_mode, input, predictions, sentence;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> epochs, time_steps;
  std::optional<double> dnn_flops;
  bool print_config = false;
};

inline RunConfig resolve(const CliOptions& o) {
  RunConfig rc;
  if (!o.config.empty()) apply_config_file(rc, o.config);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    rc.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (!o.data.empty()) rc.data = o.data;
  if (!o.embeddings.empty()) rc.embeddings = o.embeddings;
  if (!o.ckpt.empty()) rc.checkpoint = o.ckpt;
  if (!o.out.empty()) rc.out = o.out;
  if (!o.spike_mode.empty()) rc.network.spike_mode = parse_spike_mode(o.spike_mode);
  if (o.seed) rc.train.seed = *o.seed;
  if (o.lr) rc.train.learning_rate = *o.lr;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.time_steps) rc.network.time_steps = *o.time_steps;
  return rc;
}

inline void need(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing required setting: ") + what);
}

inline EmbeddingTable embeddings_for(const RunConfig& rc, NetworkConfig& ncfg) {
  need(rc.embeddings, "embeddings");
  EmbeddingTable table = load_embeddings(rc.embeddings);
  if (table.dim() == 0) throw ParseError("embeddings file '" + rc.embeddings + "' is empty");
  if (ncfg.embedding_dim == 0) ncfg.embedding_dim = table.dim();
  if (ncfg.embedding_dim != table.dim())
    throw ConfigError("embedding_dim " + std::to_string(ncfg.embedding_dim) +
                      " does not match the embeddings file (" +
                      std::to_string(table.dim()) + ")");
  return table;
}

// Trained weights from the checkpoint, or a fresh initialization.
struct Model {
  NetworkConfig cfg;
  Network<float> net;
};

inline Model model_for(const RunConfig& rc, std::size_t embedding_dim) {
  Model m;
  if (!rc.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(rc.checkpoint);
    m.cfg = ck.network;
    m.net = ck.best.empty() ? ck.params : ck.best;
  } else {
    m.cfg = rc.network;
    m.cfg.embedding_dim = embedding_dim;
    m.net = init_network<float>(m.cfg, rc.train.seed);
  }
  if (m.cfg.embedding_dim != embedding_dim)
    throw ConfigError("model expects embedding_dim " + std::to_string(m.cfg.embedding_dim) +
                      ", embeddings file has " + std::to_string(embedding_dim));
  return m;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path + "'");
  return f;
}

inline std::string join_path(const std::string& dir, const std::string& file) {
  if (dir.empty()) return file;
  return dir.back() == '/' ? dir + file : dir + "/" + file;
}

inline int cmd_train(const RunConfig& rc, std::ostream& out) {
  need(rc.data, "data");
  NetworkConfig ncfg = rc.network;
  const EmbeddingTable table = embeddings_for(rc, ncfg);
  const Corpus corpus = load_corpus(rc.data, rc.label_mode);
  if (corpus.examples.empty()) throw ParseError("corpus '" + rc.data + "' has no sentences");
  const auto [train_set, val_set] =
      split_validation(corpus.examples, rc.train.n_val, rc.train.seed);

  TrainState<float> state;
  if (!rc.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(rc.checkpoint);
    if (ck.meta.seed != rc.train.seed)
      throw ConfigError("resuming needs the checkpoint's seed (" +
                        std::to_string(ck.meta.seed) + ")");
    if (!(ck.network == ncfg))
      throw ConfigError("network settings differ from the checkpoint being resumed");
    state = resume_state(ck);
  } else {
    state = start_training<float>(ncfg, rc.train);
  }

  const std::string dir = rc.out.empty() ? "." : rc.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream log = open_output(join_path(dir, "train_log.tsv"));
  log << "epoch\ttrain_loss\tval_precision\tval_recall\tval_f1\n";
  out << "epoch\ttrain_loss\tval_precision\tval_recall\tval_f1\n";
  train(state, train_set, val_set, table, rc.train, ncfg, [&](const EpochLog& e) {
    const std::string line = format_epoch_log(e);
    log << line << '\n' << std::flush;
    out << line << '\n' << std::flush;
    save_checkpoint(join_path(dir, "last.ckpt"), make_checkpoint(state, ncfg, rc.train));
  });
  Checkpoint final_ck = make_checkpoint(state, ncfg, rc.train);
  save_checkpoint(join_path(dir, "last.ckpt"), final_ck);
  final_ck.params = state.best;
  final_ck.meta.epoch = state.best_epoch;
  final_ck.optimizer = OptimizerState<float>{};
  save_checkpoint(join_path(dir, "best.ckpt"), final_ck);
  out << "best_epoch=" << state.best_epoch << " best_val_f1=" << format_real(state.best_f1)
      << '\n';
  return 0;
}

inline int cmd_eval(const RunConfig& rc, const CliOptions& o, std::ostream& out) {
  need(rc.data, "data");
  const Corpus gold = load_corpus(rc.data, rc.label_mode);
  std::vector<std::vector<Label>> gold_labels, pred_labels;
  for (const auto& ex : gold.examples) gold_labels.push_back(ex.labels);
  if (!o.predictions.empty()) {
    const Corpus pred = load_corpus(o.predictions, LabelMode::lenient);
    if (pred.examples.size() != gold.examples.size())
      throw ParseError("predictions have " + std::to_string(pred.examples.size()) +
                       " sentences, gold has " + std::to_string(gold.examples.size()));
    for (std::size_t i = 0; i < pred.examples.size(); ++i) {
      if (pred.examples[i].tokens != gold.examples[i].tokens)
        throw ParseError("prediction sentence " + std::to_string(i + 1) +
                         " does not match the gold tokens");
      pred_labels.push_back(pred.examples[i].labels);
    }
  } else {
    NetworkConfig ncfg = rc.network;
    const EmbeddingTable table = embeddings_for(rc, ncfg);
    need(rc.checkpoint, "checkpoint");
    const Model m = model_for(rc, table.dim());
    pred_labels = evaluate(m.net, gold.examples, table, m.cfg).predictions;
  }
  const SpanScore s = corpus_span_f1(gold_labels, pred_labels);
  if (rc.out.empty()) {
    write_score(out, s);
  } else {
    std::ofstream f = open_output(rc.out);
    write_score(f, s);
    write_score(out, s);
  }
  return 0;
}

inline int cmd_predict(const RunConfig& rc, const CliOptions& o, std::ostream& out) {
  need(o.input, "input");
  need(rc.checkpoint, "checkpoint");
  NetworkConfig ncfg = rc.network;
  const EmbeddingTable table = embeddings_for(rc, ncfg);
  const Model m = model_for(rc, table.dim());
  std::vector<Example> examples;
  for (auto& tokens : load_sentences(o.input)) {
    Example ex;
    ex.labels.assign(tokens.size(), Label::O);
    ex.tokens = std::move(tokens);
    examples.push_back(std::move(ex));
  }
  const Evaluation ev = evaluate(m.net, examples, table, m.cfg);
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i].labels = ev.predictions[i];
  if (rc.out.empty()) {
    write_corpus(out, examples);
  } else {
    std::ofstream f = open_output(rc.out);
    write_corpus(f, examples);
  }
  return 0;
}

inline int cmd_energy(const RunConfig& rc, const CliOptions& o, std::ostream& out) {
  if (o.dnn_flops) {
    if (!(*o.dnn_flops >= 0)) throw ConfigError("--dnn-flops must be non-negative");
    out << "flops\tenergy_mJ\n"
        << format_real(*o.dnn_flops) << '\t' << format_real(dnn_energy(*o.dnn_flops) * 1e3)
        << '\n';
    return 0;
  }
  need(rc.data, "data");
  NetworkConfig ncfg = rc.network;
  const EmbeddingTable table = embeddings_for(rc, ncfg);
  const Model m = model_for(rc, table.dim());
  const Corpus corpus = load_corpus(rc.data, rc.label_mode);
  std::vector<Example> sample = corpus.examples;
  if (rc.train.n_val > 0 && rc.train.n_val < corpus.examples.size())
    sample = split_validation(corpus.examples, rc.train.n_val, rc.train.seed).second;
  const EnergyReport rep = profile_network(m.net, sample, table, m.cfg);
  write_energy_tsv(out, rep);
  if (!rc.out.empty()) {
    std::ofstream f = open_output(rc.out);
    f << energy_json(rep).dump(2) << '\n';
  }
  return 0;
}

inline int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  constexpr double tolerance = 1e-4;
  constexpr std::uint64_t n_seeds = 5;
  out << "mode\tcentering\tseed";
  for (std::size_t c = 0; c < kNumParamClasses; ++c)
    out << '\t' << to_string(static_cast<ParamClass>(c));
  out << '\n';
  double worst = 0;
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    for (Centering cen : {Centering::zero, Centering::threshold}) {
      for (std::uint64_t s = 0; s < n_seeds; ++s) {
        GradCheckConfig gc;
        gc.spike_mode = mode;
        gc.centering = cen;
        gc.seed = rc.train.seed + s;
        gc.alpha = rc.network.alpha;
        gc.v_thr = rc.network.v_thr;
        const GradCheckReport r = gradient_check(gc);
        out << to_string(mode) << '\t' << to_string(cen) << '\t' << gc.seed;
        for (std::size_t c = 0; c < kNumParamClasses; ++c) {
          std::ostringstream cell;
          cell << std::scientific << std::setprecision(2) << r.max_rel[c];
          out << '\t' << cell.str();
        }
        out << '\n';
        worst = std::max(worst, r.max_error());
      }
    }
  }
  const bool ok = worst < tolerance;
  out << "max_rel_error=" << format_real(worst) << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? 0 : 3;
}

inline int cmd_inspect(const RunConfig& rc, const CliOptions& o, std::ostream& out) {
  need(o.sentence, "sentence");
  NetworkConfig ncfg = rc.network;
  const EmbeddingTable table = embeddings_for(rc, ncfg);
  const Model m = model_for(rc, table.dim());
  Example ex;
  ex.tokens = split_whitespace(o.sentence);
  if (ex.tokens.empty()) throw ConfigError("--sentence is empty");
  ex.labels.assign(ex.tokens.size(), Label::O);
  const std::vector<std::size_t> idx{0};
  const Batch<float> b = make_batch<float>({ex}, idx, table);
  const ForwardResult<float> fr = forward(b.embeddings, b.mask, m.net, m.cfg);
  const auto& top = fr.trace.layers.back();
  const std::size_t c = top.states[0].spk.dim(2);
  out << "token\tpositive\tnegative\n";
  for (std::size_t j = 0; j < ex.tokens.size(); ++j) {
    std::size_t pos = 0, neg = 0;
    for (const auto& st : top.states)
      for (std::size_t k = 0; k < c; ++k) {
        const float s = st.spk(0, j, k);
        pos += s > 0;
        neg += s < 0;
      }
    out << ex.tokens[j] << '\t' << pos << '\t' << neg << '\n';
  }
  return 0;
}

}  // namespace detail

// Entry point shared by the executable and the tests. Returns the exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Spiking convolutional tagger for aspect-term extraction", "spiketag"};
  app.require_subcommand(1);
  detail::CliOptions o;
  app.add_option("--config", o.config, "key=value config file");
  app.add_option("--set", o.sets, "override one setting (key=value)")->take_all();
  app.add_option("--data", o.data, "labeled corpus (token<TAB>label)");
  app.add_option("--embeddings", o.embeddings, "word vector file");
  app.add_option("--ckpt", o.ckpt, "checkpoint to load (resume for train)");
  app.add_option("--out", o.out, "output path (directory for train)");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--lr", o.lr, "learning rate");
  app.add_option("--epochs", o.epochs, "number of epochs");
  app.add_option("--spike-mode", o.spike_mode, "binary or ternary");
  app.add_option("--time-steps", o.time_steps, "simulation steps T");
  app.add_flag("--print-config", o.print_config, "echo the effective config and exit");
  app.fallthrough();

  const std::vector<std::pair<const char*, const char*>> names = {
      {"train", "train a model, writing best.ckpt, last.ckpt and train_log.tsv"},
      {"eval", "score a checkpoint (or a prediction file) against a labeled corpus"},
      {"predict", "tag unlabeled sentences"},
      {"energy", "estimate per-layer operation counts and energy"},
      {"gradcheck", "compare analytic gradients with finite differences"},
      {"inspect", "per-token spike counts in the last spiking layer"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, desc] : names) subs.push_back(app.add_subcommand(name, desc));
  subs[1]->add_option("--predictions", o.predictions, "predicted labels to score");
  subs[2]->add_option("--input", o.input, "one token per line, blank line between sentences");
  subs[3]->add_option("--dnn-flops", o.dnn_flops, "print 12.5 pJ x FLOPs and exit");
  subs[5]->add_option("--sentence", o.sentence, "whitespace-separated tokens");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig rc = detail::resolve(o);
    write_config(err, rc);
    if (o.print_config) {
      write_config(out, rc);
      return 0;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train") return detail::cmd_train(rc, out);
    if (cmd == "eval") return detail::cmd_eval(rc, o, out);
    if (cmd == "predict") return detail::cmd_predict(rc, o, out);
    if (cmd == "energy") return detail::cmd_energy(rc, o, out);
    if (cmd == "gradcheck") return detail::cmd_gradcheck(rc, out);
    return detail::cmd_inspect(rc, o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace spiketag
