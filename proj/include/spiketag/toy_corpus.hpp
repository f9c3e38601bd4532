#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spiketag/data.hpp"
#include "spiketag/rng.hpp"

namespace spiketag {

// Synthetic aspect-labeled sentences. An aspect is 0-2 modifiers and a head
// noun right after a trigger word:
//   sentence := filler{1,3} trigger aspect filler{1,3} [trigger aspect filler{0,2}] "."
// Filler slots sometimes hold a head noun, which is then not an aspect.
struct ToyCorpusConfig {
  std::size_t sentences = 200;
  std::size_t heads = 12;
  std::size_t modifiers = 8;
  std::size_t triggers = 6;
  std::size_t fillers = 33;  // plus the full stop: 40 non-aspect words
  std::size_t embedding_dim = 16;
  // Word vectors are a per-class centroid plus noise of this scale, so words
  // of one class look alike the way pretrained vectors cluster.
  double word_spread = 0.5;
  double stray_noun_rate = 0.2;  // chance a filler slot holds a head noun
  std::uint64_t seed = 2024;
};

struct ToyCorpus {
  std::vector<Example> examples;
  EmbeddingTable embeddings;
  std::vector<std::string> vocabulary;
};

namespace detail {

inline std::string toy_word(const char* prefix, std::size_t i) {
  std::string s = prefix;
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

}  // namespace detail

inline ToyCorpus make_toy_corpus(const ToyCorpusConfig& cfg = {}) {
  std::vector<std::string> heads, mods, triggers, fillers;
  for (std::size_t i = 0; i < cfg.heads; ++i) heads.push_back(detail::toy_word("noun", i));
  for (std::size_t i = 0; i < cfg.modifiers; ++i) mods.push_back(detail::toy_word("mod", i));
  for (std::size_t i = 0; i < cfg.triggers; ++i) triggers.push_back(detail::toy_word("the", i));
  for (std::size_t i = 0; i < cfg.fillers; ++i) fillers.push_back(detail::toy_word("w", i));

  ToyCorpus out;
  for (const auto* group : {&heads, &mods, &triggers, &fillers})
    out.vocabulary.insert(out.vocabulary.end(), group->begin(), group->end());
  out.vocabulary.push_back(".");

  Rng rng(derive_seed(cfg.seed, SeedStream::toy_corpus));
  auto pick = [&](const std::vector<std::string>& words) {
    return words[rng.below(words.size())];
  };
  for (std::size_t s = 0; s < cfg.sentences; ++s) {
    Example ex;
    auto add = [&](std::string w, Label l) {
      ex.tokens.push_back(std::move(w));
      ex.labels.push_back(l);
    };
    auto filler = [&](std::size_t lo, std::size_t hi) {
      const std::size_t n = lo + rng.below(hi - lo + 1);
      for (std::size_t i = 0; i < n; ++i)
        add(rng.uniform() < cfg.stray_noun_rate ? pick(heads) : pick(fillers), Label::O);
    };
    auto phrase = [&] {
      add(pick(triggers), Label::O);
      const std::size_t n_mod = rng.below(3);
      for (std::size_t i = 0; i < n_mod; ++i)
        add(pick(mods), i == 0 ? Label::B : Label::I);
      add(pick(heads), n_mod == 0 ? Label::B : Label::I);
    };
    filler(1, 3);
    phrase();
    filler(1, 3);
    if (rng.below(2) == 1) {
      phrase();
      filler(0, 2);
    }
    add(".", Label::O);
    out.examples.push_back(std::move(ex));
  }

  Rng erng(derive_seed(cfg.seed, SeedStream::toy_embeddings));
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::vector<std::string> stop{"."};
  for (auto* group : {&heads, &mods, &triggers, &fillers, &stop}) {
    std::vector<double> centroid(cfg.embedding_dim);
    for (double& x : centroid) x = erng.normal();
    for (const auto& w : *group) {
      std::vector<float> v(cfg.embedding_dim);
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<float>(centroid[i] + cfg.word_spread * erng.normal());
      rows.emplace_back(w, std::move(v));
    }
  }
  out.embeddings = EmbeddingTable::from_rows(cfg.embedding_dim, rows);
  return out;
}

}  // namespace spiketag
