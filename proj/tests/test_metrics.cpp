#include <gtest/gtest.h>

#include <sstream>

#include "spiketag/metrics.hpp"
#include "spiketag/rng.hpp"

using namespace spiketag;

namespace {

const std::string kFixtures = std::string(SPIKETAG_DATA_DIR) + "/fixtures/";

std::vector<Label> bio(const std::string& s) {
  std::vector<Label> out;
  for (char c : s) out.push_back(parse_label(std::string(1, c)));
  return out;
}

Tensor<double> one_hot(const std::vector<Label>& labels) {
  Tensor<double> p({1, labels.size(), 3});
  for (std::size_t j = 0; j < labels.size(); ++j) p(0, j, static_cast<std::size_t>(labels[j])) = 1;
  return p;
}

}  // namespace

TEST(Decode, OneHotRoundTrip) {
  const auto labels = bio("OBIIOOOOOOOOOOOBIO");
  const auto out = decode_bio(one_hot(labels), Tensor<double>({1, labels.size()}, 1.0));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], labels);
}

TEST(Decode, TiesGoToSmallerClass) {
  const Tensor<double> p({1, 3, 3}, std::vector<double>{1, 1, 1, 0, 2, 2, 0.5, 0.2, 0.5});
  const auto out = decode_bio(p, Tensor<double>({1, 3}, 1.0));
  EXPECT_EQ(out[0], bio("OBO"));
}

TEST(Decode, DropsMaskedPositions) {
  const Tensor<double> p({2, 2, 3}, std::vector<double>{0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0});
  const Tensor<double> mask({2, 2}, std::vector<double>{1, 1, 1, 0});
  const auto out = decode_bio(p, mask);
  EXPECT_EQ(out[0], bio("BI"));
  EXPECT_EQ(out[1], bio("I"));
}

TEST(Spans, Examples) {
  EXPECT_EQ(extract_spans(bio("OOOOOOOBO")), (std::vector<Span>{{0, 7, 7}}));
  EXPECT_EQ(extract_spans(bio("OBIIOOOOOOOOOOOBIO")), (std::vector<Span>{{0, 1, 3}, {0, 15, 16}}));
  EXPECT_EQ(extract_spans(bio("IIO")), (std::vector<Span>{{0, 0, 1}}));
  EXPECT_EQ(extract_spans(bio("BBI")), (std::vector<Span>{{0, 0, 0}, {0, 1, 2}}));
  EXPECT_EQ(extract_spans(bio("OIOI"), 4), (std::vector<Span>{{4, 1, 1}, {4, 3, 3}}));
  EXPECT_TRUE(extract_spans({}).empty());
}

TEST(Spans, RenderThenExtractIsIdentity) {
  Rng rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t len = 1 + rng.below(20);
    std::vector<Span> spans;
    for (std::size_t j = 0; j < len;) {
      if (rng.below(3) == 0) {
        const std::size_t end = std::min(len - 1, j + rng.below(4));
        spans.push_back({0, j, end});
        j = end + 1;
      } else {
        ++j;
      }
    }
    EXPECT_EQ(extract_spans(render_bio(spans, len)), spans);
  }
}

TEST(Score, Examples) {
  const auto s = span_f1({{0, 0, 1}, {0, 4, 4}}, {{0, 0, 1}});
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3);
  EXPECT_EQ(s.tp, 1u);
  EXPECT_EQ(s.fn, 1u);

  const auto wrong = span_f1({{0, 3, 7}}, {{0, 5, 7}});
  EXPECT_EQ(wrong.precision, 0);
  EXPECT_EQ(wrong.recall, 0);
  EXPECT_EQ(wrong.f1, 0);

  EXPECT_EQ(span_f1({}, {}).f1, 1.0);
  EXPECT_EQ(span_f1({{0, 1, 1}}, {}).f1, 0.0);
  EXPECT_EQ(span_f1({}, {{0, 1, 1}}).precision, 0.0);
}

TEST(Score, SentenceIndexMatters) {
  EXPECT_EQ(span_f1({{0, 1, 2}}, {{1, 1, 2}}).tp, 0u);
}

TEST(Score, ReviewFixtures) {
  const auto gold = load_corpus(kFixtures + "reviews_gold.tsv").examples;
  const auto pred = load_corpus(kFixtures + "reviews_pred.tsv").examples;
  ASSERT_EQ(gold.size(), 3u);
  ASSERT_EQ(pred.size(), 3u);
  const double expect[3] = {1, 1, 0};
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(gold[i].tokens, pred[i].tokens);
    const auto s = span_f1(extract_spans(gold[i].labels), extract_spans(pred[i].labels));
    EXPECT_EQ(s.f1, expect[i]) << "review " << i + 1;
  }
  EXPECT_EQ(extract_spans(gold[2].labels), (std::vector<Span>{{0, 3, 7}}));
  EXPECT_EQ(extract_spans(pred[2].labels), (std::vector<Span>{{0, 5, 7}}));

  std::vector<std::vector<Label>> g, p;
  for (std::size_t i = 0; i < 3; ++i) {
    g.push_back(gold[i].labels);
    p.push_back(pred[i].labels);
  }
  const auto total = corpus_span_f1(g, p);
  EXPECT_EQ(total.tp, 3u);
  EXPECT_EQ(total.fp, 1u);
  EXPECT_EQ(total.fn, 1u);
  EXPECT_DOUBLE_EQ(total.f1, 0.75);
}

TEST(Score, SwapAndBounds) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Span> a, b;
    for (std::size_t n = rng.below(6); n-- > 0;) a.push_back({rng.below(3), rng.below(4), 4 + rng.below(3)});
    for (std::size_t n = rng.below(6); n-- > 0;) b.push_back({rng.below(3), rng.below(4), 4 + rng.below(3)});
    const auto ab = span_f1(a, b), ba = span_f1(b, a);
    EXPECT_EQ(ab.precision, ba.recall);
    EXPECT_EQ(ab.recall, ba.precision);
    EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
    for (double x : {ab.precision, ab.recall, ab.f1}) {
      EXPECT_GE(x, 0);
      EXPECT_LE(x, 1);
    }
  }
}

TEST(Score, ReportFormat) {
  std::ostringstream out;
  write_score(out, score_counts(1, 2, 4));
  EXPECT_EQ(out.str(), "P\tR\tF1\tTP\tFP\tFN\n0.5\t0.25\t0.3333333333333333\t1\t1\t3\n");
}
