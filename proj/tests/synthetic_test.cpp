#include "telegraph/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace {

using namespace telegraph;
using namespace telegraph::synthetic;

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

class Benchmarks : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Benchmarks, CommunityShape) {
  auto cfg = planted_community(GetParam());
  auto b = make_benchmark(cfg);
  const std::size_t M = cfg.num_channels * cfg.messages_per_channel;
  EXPECT_EQ(b.graph.num_channels(), cfg.num_channels);
  EXPECT_EQ(b.graph.num_messages(), M);
  EXPECT_EQ(b.labels.size(), M);
  EXPECT_EQ(b.embeddings.messages.size(), M);
  EXPECT_EQ(b.embeddings.channels.size(), cfg.num_channels);
  EXPECT_TRUE(std::is_sorted(b.labels.begin(), b.labels.end(),
                             [](const auto& x, const auto& y) { return x.message_id < y.message_id; }));
  EXPECT_EQ(std::count(b.community.begin(), b.community.end(), 1), static_cast<long>(cfg.num_channels / 2));

  // labels agree with the channel community at the configured rate
  std::size_t agree = 0;
  for (const auto& l : b.labels) {
    auto c = b.graph.channel_of(b.graph.message_index(l.message_id));
    agree += (l.label == Label::Factual) == (b.community[c] == 1);
  }
  EXPECT_NEAR(static_cast<double>(agree) / M, cfg.label_agreement, 0.04);

  // forwards: cross-channel, roughly the configured share, mostly within one community
  double fwd = static_cast<double>(b.graph.num_forwarded_edges()) / M;
  EXPECT_GT(fwd, 0.15);
  EXPECT_LT(fwd, cfg.forward_fraction + 0.03);
  std::size_t same = 0, total = 0;
  for (std::size_t m = 0; m < M; ++m) {
    auto o = b.graph.origin_of(m);
    if (o == TelegraphGraph::npos) continue;
    EXPECT_NE(b.graph.channel_of(o), b.graph.channel_of(m));
    same += b.community[b.graph.channel_of(o)] == b.community[b.graph.channel_of(m)];
    ++total;
  }
  EXPECT_GT(static_cast<double>(same) / total, 0.8);

  // channel embeddings separate along a shared direction: the community means sit 2 * channel_signal apart
  std::vector<double> mu[2] = {std::vector<double>(cfg.dimension, 0.0), std::vector<double>(cfg.dimension, 0.0)};
  for (std::size_t c = 0; c < b.graph.num_channels(); ++c) {
    const auto& v = b.embeddings.channels.at(b.graph.channels()[c].channel_id).values;
    for (std::size_t k = 0; k < v.size(); ++k) mu[b.community[c]][k] += v[k] / (cfg.num_channels / 2.0);
  }
  double gap = 0.0;
  for (std::size_t k = 0; k < cfg.dimension; ++k) gap += (mu[1][k] - mu[0][k]) * (mu[1][k] - mu[0][k]);
  EXPECT_NEAR(std::sqrt(gap), 2.0 * cfg.channel_signal, 0.6);
}

TEST_P(Benchmarks, Deterministic) {
  auto a = make_benchmark(planted_community(GetParam()));
  auto b = make_benchmark(planted_community(GetParam()));
  EXPECT_TRUE(a.graph == b.graph);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.embeddings.serialize(), b.embeddings.serialize());
  auto c = make_benchmark(planted_community(GetParam() + 100));
  EXPECT_NE(a.embeddings.serialize(), c.embeddings.serialize());
}

TEST_P(Benchmarks, ViewCountsShiftWithLabel) {
  auto cfg = view_count_benchmark(GetParam());
  auto b = make_benchmark(cfg);
  std::vector<double> pos, neg;
  for (const auto& l : b.labels) {
    double v = std::log(static_cast<double>(b.graph.message(l.message_id).view_count));
    (l.label == Label::Factual ? pos : neg).push_back(v);
  }
  EXPECT_NEAR(mean(pos) - mean(neg), cfg.view_shift, 0.25);
  EXPECT_NEAR(static_cast<double>(pos.size()) / b.labels.size(), 0.5, 0.05);
}

TEST_P(Benchmarks, TextControlLabelsIndependentOfChannels) {
  auto b = make_benchmark(text_only_control(GetParam()));
  // balanced labels, no community signal in channel embeddings
  std::size_t pos = 0;
  for (const auto& l : b.labels) pos += l.label == Label::Factual;
  EXPECT_NEAR(static_cast<double>(pos) / b.labels.size(), 0.5, 0.05);
  for (const auto& [id, v] : b.embeddings.channels) EXPECT_EQ(v.dimension(), 16u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, Benchmarks, ::testing::Range<std::uint64_t>(1, 6));

TEST(Benchmark, InvalidConfig) {
  BenchmarkConfig c;
  c.num_channels = 1;
  EXPECT_THROW(make_benchmark(c), InvalidArgument);
  c = BenchmarkConfig{};
  c.dimension = 0;
  EXPECT_THROW(make_benchmark(c), InvalidArgument);
}

TEST(LabelNoise, Rates) {
  std::vector<LabeledMessage> labels;
  for (int i = 0; i < 4000; ++i)
    labels.push_back({"m" + std::to_string(i), i % 10 == 0 ? Label::Other : i % 2 ? Label::Factual : Label::Misinformation});
  EXPECT_EQ(inject_label_noise(labels, 0.0, 1), labels);
  auto all = inject_label_noise(labels, 1.0, 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].label == Label::Other) {
      EXPECT_EQ(all[i].label, Label::Other);
    } else {
      EXPECT_NE(all[i].label, labels[i].label);
    }
    EXPECT_EQ(all[i].message_id, labels[i].message_id);
  }
  auto some = inject_label_noise(labels, 0.2, 7);
  std::size_t flipped = 0, binary = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_binary(labels[i].label)) continue;
    ++binary;
    flipped += some[i].label != labels[i].label;
  }
  EXPECT_NEAR(static_cast<double>(flipped) / binary, 0.2, 0.03);
  EXPECT_EQ(inject_label_noise(labels, 0.2, 7), some);
  EXPECT_THROW(inject_label_noise(labels, 1.5, 7), InvalidArgument);
  EXPECT_THROW(inject_label_noise(labels, -0.1, 7), InvalidArgument);
}

TEST(Fixture, MessagesAndClaims) {
  FixtureConfig cfg;
  auto f = make_fixture(cfg);
  EXPECT_EQ(f.messages.size(), cfg.num_channels * cfg.messages_per_channel);
  EXPECT_EQ(f.claims.size(), cfg.num_claims);
  std::set<std::string> claim_texts;
  for (const auto& c : f.claims) {
    claim_texts.insert(c.text);
    if (c.source_kind == SourceKind::Newspaper) {
      EXPECT_EQ(c.verdict, Label::Factual);
    }
  }
  EXPECT_EQ(claim_texts.size(), f.claims.size());
  std::size_t quoting = 0, forwards = 0;
  std::map<std::string, const IngestRecord*> by_id;
  for (const auto& r : f.messages) by_id[r.message_id] = &r;
  for (const auto& r : f.messages) {
    if (r.forwarded_from_message_id) {
      ++forwards;
      const auto* o = by_id.at(*r.forwarded_from_message_id);
      EXPECT_NE(o->channel_id, r.channel_id);
      EXPECT_EQ(o->text, r.text);
      EXPECT_FALSE(o->forwarded_from_message_id);
    } else {
      quoting += claim_texts.count(r.text);
    }
  }
  EXPECT_GT(quoting, 0u);
  EXPECT_GT(forwards, 0u);

  auto built = build_graph_from_jsonl(f.messages_jsonl());
  EXPECT_TRUE(built.report.errors.empty());
  EXPECT_EQ(built.graph.num_messages(), f.messages.size());
  EXPECT_EQ(built.graph.num_forwarded_edges(), forwards);
  EXPECT_TRUE(built.report.unresolved_forwards.empty());

  auto kb = load_claims_from_string(f.claims_jsonl());
  EXPECT_TRUE(kb.errors.empty());
  EXPECT_EQ(kb.kb.size(), f.claims.size());
}

TEST(Fixture, Deterministic) {
  FixtureConfig cfg;
  EXPECT_EQ(make_fixture(cfg).messages_jsonl(), make_fixture(cfg).messages_jsonl());
  auto other = cfg;
  other.seed = 99;
  EXPECT_NE(make_fixture(other).messages_jsonl(), make_fixture(cfg).messages_jsonl());
}

}  // namespace
