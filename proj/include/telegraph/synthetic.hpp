#pragma once

// Seeded generators: planted benchmarks with a known label-generating structure, label-noise
// injection, and small record fixtures for the pipeline.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "telegraph/embedder.hpp"
#include "telegraph/graph_store.hpp"
#include "telegraph/io.hpp"
#include "telegraph/knowledge_base.hpp"
#include "telegraph/labels.hpp"
#include "telegraph/rng.hpp"
#include "telegraph/weak_label.hpp"

namespace telegraph::synthetic {

enum class SignalSource {
  Community,  // label follows the channel's community, text carries a faint community trace
  Text,       // label is readable from the message embedding alone, channels carry nothing
  ViewCount,  // label shifts the view-count distribution, embeddings are pure noise
};

struct BenchmarkConfig {
  SignalSource signal = SignalSource::Community;
  std::size_t num_channels = 200;
  std::size_t messages_per_channel = 10;
  std::size_t dimension = 16;
  double label_agreement = 0.8;     // P(message label == community label)
  double message_signal = 0.6;      // community or label direction scale in message embeddings
  double channel_signal = 1.0;      // community direction scale in channel embeddings
  double noise = 1.0;               // per-coordinate Gaussian noise
  double forward_fraction = 0.3;    // messages that are forwarded copies
  double forward_same_community = 0.9;
  double view_shift = 1.5;          // difference of mean log views between classes
  std::uint64_t seed = 0;
};

// Presets used by the hypothesis checks.
inline BenchmarkConfig planted_community(std::uint64_t seed) {
  BenchmarkConfig c;
  c.seed = seed;
  return c;
}

inline BenchmarkConfig text_only_control(std::uint64_t seed) {
  BenchmarkConfig c;
  c.signal = SignalSource::Text;
  c.message_signal = 1.5;
  c.seed = seed;
  return c;
}

inline BenchmarkConfig view_count_benchmark(std::uint64_t seed) {
  BenchmarkConfig c;
  c.signal = SignalSource::ViewCount;
  c.seed = seed;
  return c;
}

struct Benchmark {
  TelegraphGraph graph;
  EmbeddingStore embeddings;
  std::vector<LabeledMessage> labels;
  std::vector<int> community;  // per channel, graph order
};

namespace detail {
inline std::string padded(const char* prefix, std::size_t i, int width = 5) {
  std::string n = std::to_string(i);
  return prefix + std::string(n.size() < static_cast<std::size_t>(width) ? width - n.size() : 0, '0') + n;
}
}  // namespace detail

inline Benchmark make_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.num_channels < 2 || cfg.messages_per_channel < 1 || cfg.dimension < 1)
    throw InvalidArgument("benchmark needs >= 2 channels, >= 1 message per channel and dimension >= 1");
  SplitMix64 rng(io::mix_seed(cfg.seed, 0xbe7c));
  const std::size_t D = cfg.dimension, C = cfg.num_channels, M = C * cfg.messages_per_channel;

  // unit direction separating the two communities (or the two classes)
  std::vector<double> dir(D);
  for (auto& v : dir) v = rng.normal();
  {
    double n = l2_norm(dir);
    for (auto& v : dir) v /= n;
  }
  auto sample = [&](double sign, double scale) {
    EmbeddingVector e;
    e.values.resize(D);
    for (std::size_t k = 0; k < D; ++k) e.values[k] = sign * scale * dir[k] + cfg.noise * rng.normal();
    return e;
  };

  Benchmark b;
  b.embeddings.dimension = D;
  std::vector<int> community(C);
  for (std::size_t c = 0; c < C; ++c) community[c] = c < C / 2 ? 1 : 0;
  rng.shuffle(community);

  std::vector<IngestRecord> records;
  records.reserve(M);
  std::vector<std::vector<std::size_t>> originals_by_community(2);
  std::vector<int> label(M);
  for (std::size_t c = 0; c < C; ++c) {
    const std::string cid = detail::padded("ch", c, 4);
    const int comm = community[c];
    double subs_log = 6.0 + rng.normal();
    for (std::size_t j = 0; j < cfg.messages_per_channel; ++j) {
      const std::size_t m = c * cfg.messages_per_channel + j;
      IngestRecord r;
      r.message_id = detail::padded("m", m);
      r.channel_id = cid;
      r.channel_name = "channel " + std::to_string(c);
      r.subscriber_count = static_cast<std::uint64_t>(std::exp(subs_log));
      r.posted_at = static_cast<std::int64_t>(1600000000 + m * 60);
      int y = 0;
      switch (cfg.signal) {
        case SignalSource::Community:
          y = rng.bernoulli(cfg.label_agreement) ? comm : 1 - comm;
          break;
        case SignalSource::Text:
        case SignalSource::ViewCount:
          y = rng.bernoulli(0.5) ? 1 : 0;
          break;
      }
      label[m] = y;
      double sign = 0.0;
      if (cfg.signal == SignalSource::Community) sign = comm ? 1.0 : -1.0;
      if (cfg.signal == SignalSource::Text) sign = y ? 1.0 : -1.0;
      b.embeddings.messages[r.message_id] = sample(sign, cfg.message_signal);
      double view_log = 5.0 + rng.normal();
      if (cfg.signal == SignalSource::ViewCount) view_log += y ? cfg.view_shift / 2 : -cfg.view_shift / 2;
      r.view_count = static_cast<std::uint64_t>(std::exp(view_log));
      r.text = "synthetic message " + std::to_string(m);
      records.push_back(std::move(r));
    }
    double csign = cfg.signal == SignalSource::Community ? (comm ? 1.0 : -1.0) : 0.0;
    b.embeddings.channels[cid] = sample(csign, cfg.channel_signal);
  }
  // Forwards: a message becomes a copy of an earlier original, usually from the same community.
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t c = m / cfg.messages_per_channel;
    const int comm = community[c];
    if (m > 0 && rng.bernoulli(cfg.forward_fraction)) {
      int want = rng.bernoulli(cfg.forward_same_community) ? comm : 1 - comm;
      const auto& pool = originals_by_community[static_cast<std::size_t>(want)];
      if (!pool.empty()) {
        std::size_t o = pool[rng.below(pool.size())];
        if (o / cfg.messages_per_channel != c) {
          records[m].forwarded_from_message_id = records[o].message_id;
          continue;
        }
      }
    }
    originals_by_community[static_cast<std::size_t>(comm)].push_back(m);
  }
  auto built = build_graph(records);
  if (!built.report.errors.empty()) throw Error("benchmark generator produced invalid records");
  b.graph = std::move(built.graph);
  for (std::size_t m = 0; m < M; ++m)
    b.labels.push_back({records[m].message_id, label[m] ? Label::Factual : Label::Misinformation});
  std::sort(b.labels.begin(), b.labels.end(),
            [](const LabeledMessage& a, const LabeledMessage& c) { return a.message_id < c.message_id; });
  b.community.resize(C);
  for (std::size_t c = 0; c < C; ++c) b.community[b.graph.channel_index(detail::padded("ch", c, 4))] = community[c];
  return b;
}

// Flips each label independently with probability `rate`. "other" labels are left alone.
inline std::vector<LabeledMessage> inject_label_noise(std::vector<LabeledMessage> labels, double rate,
                                                      std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw InvalidArgument("noise rate must be in [0, 1]");
  SplitMix64 rng(io::mix_seed(seed, 0x9015e));
  for (auto& l : labels) {
    bool flip = rng.bernoulli(rate);
    if (flip && is_binary(l.label)) l.label = l.label == Label::Factual ? Label::Misinformation : Label::Factual;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Pipeline fixtures: a messages export and a claims export where some messages quote a claim
// verbatim (so an exact-text embedder still produces matches).

struct FixtureConfig {
  std::size_t num_channels = 12;
  std::size_t messages_per_channel = 15;
  std::size_t num_claims = 30;
  double quote_fraction = 0.5;
  double forward_fraction = 0.2;
  std::uint64_t seed = 7;
};

struct Fixture {
  std::vector<IngestRecord> messages;
  std::vector<Claim> claims;

  std::string messages_jsonl() const {
    std::string out;
    for (const auto& r : messages) {
      out += to_json(r).dump();
      out += '\n';
    }
    return out;
  }
  std::string claims_jsonl() const {
    std::string out;
    for (const auto& c : claims) {
      out += to_json(c).dump();
      out += '\n';
    }
    return out;
  }
};

inline Fixture make_fixture(const FixtureConfig& cfg) {
  SplitMix64 rng(io::mix_seed(cfg.seed, 0xf1c7));
  static const std::vector<std::string> words{
      "vaccine", "election", "border",  "energy", "report", "minister", "study",   "protest", "price",
      "virus",   "court",    "climate", "school", "police", "doctor",   "weather", "bank",    "army"};
  auto sentence = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + words[rng.below(words.size())];
    return s;
  };
  Fixture f;
  for (std::size_t i = 0; i < cfg.num_claims; ++i) {
    Claim c;
    c.claim_id = detail::padded("c", i, 3);
    c.text = "claim " + std::to_string(i) + ": " + sentence(6);
    if (i % 2 == 0) {
      c.source_kind = SourceKind::Newspaper;
      c.source_name = i % 4 == 0 ? "Tagesschau" : "Zeit";
      c.verdict = Label::Factual;
    } else {
      c.source_kind = SourceKind::FactCheck;
      c.source_name = i % 4 == 1 ? "Correctiv" : "Mimikama";
      c.verdict = i % 3 == 0 ? Label::Factual : Label::Misinformation;
    }
    f.claims.push_back(std::move(c));
  }
  std::vector<std::size_t> originals;
  std::size_t m = 0;
  for (std::size_t ch = 0; ch < cfg.num_channels; ++ch) {
    for (std::size_t j = 0; j < cfg.messages_per_channel; ++j, ++m) {
      IngestRecord r;
      r.message_id = detail::padded("m", m);
      r.channel_id = detail::padded("ch", ch, 3);
      r.channel_name = "Channel " + std::to_string(ch);
      r.channel_description = "fixture channel about " + words[ch % words.size()];
      r.subscriber_count = 100 + 37 * ch;
      r.posted_at = static_cast<std::int64_t>(1650000000 + 300 * m);
      r.view_count = 10 + rng.below(5000);
      if (!originals.empty() && rng.bernoulli(cfg.forward_fraction)) {
        auto o = originals[rng.below(originals.size())];
        const auto& orig = f.messages[o];
        if (orig.channel_id != r.channel_id) {
          r.forwarded_from_message_id = orig.message_id;
          r.text = orig.text;
          f.messages.push_back(std::move(r));
          continue;
        }
      }
      if (rng.bernoulli(cfg.quote_fraction)) r.text = f.claims[rng.below(f.claims.size())].text;
      else r.text = "message " + std::to_string(m) + ": " + sentence(8);
      originals.push_back(f.messages.size());
      f.messages.push_back(std::move(r));
    }
  }
  return f;
}

}  // namespace telegraph::synthetic
