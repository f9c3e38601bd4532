#pragma once

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <set>
#include <tuple>
#include <vector>

#include "spiketag/data.hpp"
#include "spiketag/tensor.hpp"

namespace spiketag {

// Inclusive token range of one aspect term.
struct Span {
  std::size_t sentence = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  friend auto operator<=>(const Span&, const Span&) = default;
};

// Per-token argmax; ties go to the smaller class index (O < B < I). Masked
// positions are dropped.
template <typename T>
std::vector<std::vector<Label>> decode_bio(const Tensor<T>& prob_class,
                                           const Tensor<T>& mask) {
  require(prob_class.rank() == 3 && prob_class.dim(2) == 3,
          "decode_bio expects [B x R x 3]");
  require(mask.rank() == 2 && mask.dim(0) == prob_class.dim(0) &&
              mask.dim(1) == prob_class.dim(1),
          "decode_bio mask shape mismatch");
  std::vector<std::vector<Label>> out(prob_class.dim(0));
  for (std::size_t b = 0; b < prob_class.dim(0); ++b) {
    for (std::size_t j = 0; j < prob_class.dim(1); ++j) {
      if (mask(b, j) == T{0}) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < 3; ++c)
        if (prob_class(b, j, c) > prob_class(b, j, best)) best = c;
      out[b].push_back(static_cast<Label>(best));
    }
  }
  return out;
}

// B opens a span, I extends it; an I with nothing open starts a new span.
inline std::vector<Span> extract_spans(const std::vector<Label>& labels,
                                       std::size_t sentence = 0) {
  std::vector<Span> spans;
  bool open = false;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    switch (labels[j]) {
      case Label::O:
        open = false;
        break;
      case Label::B:
        spans.push_back({sentence, j, j});
        open = true;
        break;
      case Label::I:
        if (open) {
          spans.back().end = j;
        } else {
          spans.push_back({sentence, j, j});
          open = true;
        }
        break;
    }
  }
  return spans;
}

// Canonical BIO labels for non-overlapping spans in a sentence of `length`.
inline std::vector<Label> render_bio(const std::vector<Span>& spans,
                                     std::size_t length) {
  std::vector<Label> labels(length, Label::O);
  for (const Span& s : spans) {
    labels.at(s.start) = Label::B;
    for (std::size_t j = s.start + 1; j <= s.end; ++j) labels.at(j) = Label::I;
  }
  return labels;
}

struct SpanScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

inline SpanScore score_counts(std::size_t tp, std::size_t n_pred,
                              std::size_t n_gold) {
  SpanScore s;
  s.tp = tp;
  s.fp = n_pred - tp;
  s.fn = n_gold - tp;
  const bool both_empty = n_pred == 0 && n_gold == 0;
  s.precision = n_pred == 0 ? (both_empty ? 1.0 : 0.0)
                            : static_cast<double>(tp) / static_cast<double>(n_pred);
  s.recall = n_gold == 0 ? (both_empty ? 1.0 : 0.0)
                         : static_cast<double>(tp) / static_cast<double>(n_gold);
  const double pr = s.precision + s.recall;
  s.f1 = pr == 0 ? 0.0 : 2 * s.precision * s.recall / pr;
  return s;
}

// Exact-match span scoring, micro-averaged over whatever span sets are given.
inline SpanScore span_f1(const std::vector<Span>& gold,
                         const std::vector<Span>& pred) {
  const std::set<Span> g(gold.begin(), gold.end());
  const std::set<Span> p(pred.begin(), pred.end());
  std::size_t tp = 0;
  for (const Span& s : p) tp += g.count(s);
  return score_counts(tp, p.size(), g.size());
}

// Scores aligned gold/predicted label sequences over a corpus.
inline SpanScore corpus_span_f1(const std::vector<std::vector<Label>>& gold,
                                const std::vector<std::vector<Label>>& pred) {
  require(gold.size() == pred.size(), "gold and predicted corpora differ in size");
  std::vector<Span> g, p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto gs = extract_spans(gold[i], i);
    const auto ps = extract_spans(pred[i], i);
    g.insert(g.end(), gs.begin(), gs.end());
    p.insert(p.end(), ps.begin(), ps.end());
  }
  return span_f1(g, p);
}

// Tab-separated P, R, F1, TP, FP, FN with a header line.
inline void write_score(std::ostream& out, const SpanScore& s) {
  out << "P\tR\tF1\tTP\tFP\tFN\n"
      << format_real(s.precision) << '\t' << format_real(s.recall) << '\t'
      << format_real(s.f1) << '\t' << s.tp << '\t' << s.fp << '\t' << s.fn
      << '\n';
}

}  // namespace spiketag
