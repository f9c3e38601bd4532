// Writes the bundled synthetic corpora and their embeddings.
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spiketag/toy_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic aspect corpus"};
  std::string dir = "data/toy";
  std::uint64_t seed = spiketag::ToyCorpusConfig{}.seed;
  std::size_t smoke = 40;
  app.add_option("--out-dir", dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--smoke", smoke, "sentences in the smoke corpus");
  CLI11_PARSE(app, argc, argv);

  spiketag::ToyCorpusConfig cfg;
  cfg.seed = seed;
  const spiketag::ToyCorpus toy = spiketag::make_toy_corpus(cfg);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir + "/" + name);
    if (!f) {
      std::cerr << "cannot write " << dir << "/" << name << '\n';
      std::exit(1);
    }
    return f;
  };
  {
    auto f = open("corpus.tsv");
    spiketag::write_corpus(f, toy.examples);
  }
  {
    auto f = open("smoke.tsv");
    const std::vector<spiketag::Example> head(
        toy.examples.begin(),
        toy.examples.begin() + static_cast<std::ptrdiff_t>(std::min(smoke, toy.examples.size())));
    spiketag::write_corpus(f, head);
  }
  {
    auto f = open("embeddings.txt");
    spiketag::write_embeddings(f, toy.embeddings);
  }
  std::cout << toy.examples.size() << " sentences, " << toy.vocabulary.size()
            << " words\n";
  return 0;
}
