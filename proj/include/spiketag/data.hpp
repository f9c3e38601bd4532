#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spiketag/config.hpp"
#include "spiketag/error.hpp"
#include "spiketag/rng.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

enum class Label : std::uint8_t { O = 0, B = 1, I = 2 };

inline const char* to_string(Label l) {
  switch (l) {
    case Label::O: return "O";
    case Label::B: return "B";
    case Label::I: return "I";
  }
  return "?";
}

inline Label parse_label(std::string_view s) {
  if (s == "O") return Label::O;
  if (s == "B") return Label::B;
  if (s == "I") return Label::I;
  throw ParseError("invalid label '" + std::string(s) + "'");
}

struct Example {
  std::vector<std::string> tokens;
  std::vector<Label> labels;

  friend bool operator==(const Example&, const Example&) = default;
};

enum class LabelMode { strict, lenient };

inline LabelMode parse_label_mode(const std::string& s) {
  if (s == "strict") return LabelMode::strict;
  if (s == "lenient") return LabelMode::lenient;
  throw ConfigError("label mode must be strict or lenient, got '" + s + "'");
}

struct Corpus {
  std::vector<Example> examples;
  std::size_t repaired = 0;  // leading-I labels rewritten to B (lenient)
};

namespace detail {

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

inline std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

// I after O (or at sentence start) is illegal in BIO.
inline std::size_t repair_bio(Example& ex, LabelMode mode, std::size_t line) {
  std::size_t repaired = 0;
  for (std::size_t j = 0; j < ex.labels.size(); ++j) {
    const bool open = j > 0 && ex.labels[j - 1] != Label::O;
    if (ex.labels[j] == Label::I && !open) {
      if (mode == LabelMode::strict)
        throw ParseError("illegal I after O or sentence start at token '" +
                         ex.tokens[j] + "' (sentence ending near line " +
                         std::to_string(line) + ")");
      ex.labels[j] = Label::B;
      ++repaired;
    }
  }
  return repaired;
}

}  // namespace detail

// "token<TAB>label" per line, blank line between sentences.
inline Corpus parse_corpus(std::istream& in, LabelMode mode) {
  Corpus corpus;
  Example cur;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    corpus.repaired += detail::repair_bio(cur, mode, line_no);
    corpus.examples.push_back(std::move(cur));
    cur = Example{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (detail::is_blank(line)) {
      flush();
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected token<TAB>label");
    const std::string label = line.substr(tab + 1);
    try {
      cur.labels.push_back(parse_label(label));
    } catch (const ParseError&) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid label '" +
                       label + "'");
    }
    cur.tokens.push_back(line.substr(0, tab));
  }
  flush();
  return corpus;
}

inline Corpus load_corpus(const std::string& path,
                          LabelMode mode = LabelMode::strict) {
  auto in = detail::open_input(path, "corpus");
  return parse_corpus(in, mode);
}

inline void write_corpus(std::ostream& out, const std::vector<Example>& examples) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i != 0) out << '\n';
    for (std::size_t j = 0; j < examples[i].tokens.size(); ++j)
      out << examples[i].tokens[j] << '\t' << to_string(examples[i].labels[j])
          << '\n';
  }
}

// One token per line, blank line between sentences; no labels.
inline std::vector<std::vector<std::string>> load_sentences(
    const std::string& path) {
  auto in = detail::open_input(path, "input");
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> cur;
  std::string line;
  while (std::getline(in, line)) {
    detail::strip_cr(line);
    if (detail::is_blank(line)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    const auto tab = line.find('\t');
    cur.push_back(tab == std::string::npos ? line : line.substr(0, tab));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> split_whitespace(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  // Builds a table from (token, vector) rows; duplicates keep the first row.
  static EmbeddingTable from_rows(
      std::size_t dim,
      const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
    EmbeddingTable t;
    t.dim_ = dim;
    t.unk_.assign(dim, 0.0f);
    std::vector<double> sum(dim, 0.0);
    for (const auto& [token, vec] : rows) {
      if (vec.size() != dim)
        throw ParseError("embedding for '" + token + "' has length " +
                         std::to_string(vec.size()) + ", expected " +
                         std::to_string(dim));
      if (t.index_.count(token)) {
        ++t.duplicates_;
        continue;
      }
      t.index_.emplace(token, t.tokens_.size());
      t.tokens_.push_back(token);
      t.vectors_.insert(t.vectors_.end(), vec.begin(), vec.end());
      for (std::size_t i = 0; i < dim; ++i) sum[i] += vec[i];
    }
    if (!t.tokens_.empty())
      for (std::size_t i = 0; i < dim; ++i)
        t.unk_[i] = static_cast<float>(sum[i] / static_cast<double>(t.tokens_.size()));
    t.pad_.assign(dim, 0.0f);
    return t;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t duplicates() const noexcept { return duplicates_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::span<const float> unk() const noexcept { return unk_; }
  std::span<const float> pad() const noexcept { return pad_; }

  // Exact match first, then lowercase; nullopt-like `found=false` means unk.
  struct Lookup {
    std::span<const float> vector;
    bool found;
  };

  Lookup lookup(const std::string& token) const {
    if (auto it = index_.find(token); it != index_.end()) return {row(it->second), true};
    std::string lower = token;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (auto it = index_.find(lower); it != index_.end()) return {row(it->second), true};
    return {unk_, false};
  }

 private:
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(vectors_).subspan(i * dim_, dim_);
  }

  std::size_t dim_ = 0;
  std::size_t duplicates_ = 0;
  std::vector<std::string> tokens_;
  std::vector<float> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> unk_;
  std::vector<float> pad_;
};

// Optional "count dim" header, then "token v1 ... vE" per line.
inline EmbeddingTable parse_embeddings(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (detail::is_blank(line)) continue;
    std::vector<std::string> fields = split_whitespace(line);
    if (line_no == 1 && fields.size() == 2) {
      const auto is_int = [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
          return std::isdigit(c);
        });
      };
      if (is_int(fields[0]) && is_int(fields[1])) {
        dim = std::stoul(fields[1]);
        continue;
      }
    }
    if (fields.size() < 2)
      throw ParseError("embeddings line " + std::to_string(line_no) +
                       ": expected token and values");
    std::vector<float> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      float x = 0;
      const std::string& f = fields[i];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), x);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw ParseError("embeddings line " + std::to_string(line_no) +
                         ": bad number '" + f + "'");
      vec.push_back(x);
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim)
      throw ParseError("embeddings line " + std::to_string(line_no) +
                       ": vector length " + std::to_string(vec.size()) +
                       " != " + std::to_string(dim));
    rows.emplace_back(std::move(fields[0]), std::move(vec));
  }
  return EmbeddingTable::from_rows(dim, rows);
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  auto in = detail::open_input(path, "embeddings");
  return parse_embeddings(in);
}

inline void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (const auto& tok : table.tokens()) {
    out << tok;
    for (float x : table.lookup(tok).vector) out << ' ' << format_real(x);
    out << '\n';
  }
}

template <typename T>
struct Batch {
  Tensor<T> embeddings;  // [B x Rmax x E]
  Tensor<T> labels;      // [B x Rmax], class index
  Tensor<T> mask;        // [B x Rmax], 1 on real tokens
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> indices;  // positions in the source example list
  std::size_t oov = 0;

  std::size_t size() const { return lengths.size(); }
};

template <typename T>
Batch<T> make_batch(const std::vector<Example>& examples,
                    std::span<const std::size_t> indices,
                    const EmbeddingTable& table) {
  Batch<T> b;
  std::size_t rmax = 0;
  for (std::size_t i : indices) rmax = std::max(rmax, examples[i].tokens.size());
  const std::size_t e = table.dim();
  b.embeddings = Tensor<T>({indices.size(), rmax, e});
  b.labels = Tensor<T>({indices.size(), rmax});
  b.mask = Tensor<T>({indices.size(), rmax});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Example& ex = examples[indices[r]];
    b.lengths.push_back(ex.tokens.size());
    b.indices.push_back(indices[r]);
    for (std::size_t j = 0; j < ex.tokens.size(); ++j) {
      const auto hit = table.lookup(ex.tokens[j]);
      if (!hit.found) ++b.oov;
      for (std::size_t k = 0; k < e; ++k)
        b.embeddings(r, j, k) = static_cast<T>(hit.vector[k]);
      b.labels(r, j) = j < ex.labels.size()
                           ? static_cast<T>(static_cast<int>(ex.labels[j]))
                           : T{0};
      b.mask(r, j) = T{1};
    }
  }
  return b;
}

// Splits examples into padded batches in order, or in a shuffled order drawn
// from `rng` when given.
template <typename T>
std::vector<Batch<T>> batchify(const std::vector<Example>& examples,
                               const EmbeddingTable& table,
                               std::size_t batch_size, Rng* rng = nullptr) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (rng) rng->shuffle(order);
  std::vector<Batch<T>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    out.push_back(make_batch<T>(
        examples, std::span<const std::size_t>(order).subspan(start, n), table));
  }
  return out;
}

// Seeded uniform sample of n_val examples for validation; both parts keep
// corpus order.
inline std::pair<std::vector<Example>, std::vector<Example>> split_validation(
    const std::vector<Example>& examples, std::size_t n_val,
    std::uint64_t seed) {
  if (n_val == 0) return {examples, {}};
  if (n_val >= examples.size())
    throw ConfigError("n_val " + std::to_string(n_val) +
                      " must be smaller than the corpus size " +
                      std::to_string(examples.size()));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, SeedStream::split));
  // Partial Fisher-Yates: the first n_val slots are the sample.
  for (std::size_t i = 0; i < n_val; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<char> is_val(examples.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (is_val[i] ? out.second : out.first).push_back(examples[i]);
  return out;
}

}  // namespace spiketag
