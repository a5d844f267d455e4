#pragma once

// Heterogeneous GraphSAGE classifier over the Telegraph graph, its trainer, and the
// text-only baseline.
//
// Node types: message, channel. Relations used for message passing (edges undirected):
//   channel_to_message  IS_PART_OF seen from the message
//   message_to_channel  IS_PART_OF seen from the channel
//   forwarded           FORWARDED in either direction, message to message
//
// Layer update for node v of type t:
//   h'_v = act( W_self[t] h_v + b[t] + sum_r W_r agg_r({h_u : u in sampled N_r(v)}) )
// with agg = elementwise mean or the final hidden state of an LSTM run over a seeded
// permutation of the sampled neighbours. Inputs are projected per type to hidden_dim; the
// head is hidden -> hidden/2 -> 1 with a sigmoid giving p(factual).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "telegraph/embedder.hpp"
#include "telegraph/error.hpp"
#include "telegraph/graph_store.hpp"
#include "telegraph/io.hpp"
#include "telegraph/labels.hpp"
#include "telegraph/metrics.hpp"
#include "telegraph/nn.hpp"
#include "telegraph/rng.hpp"
#include "telegraph/weak_label.hpp"

namespace telegraph::sage {

using nn::Matrix;

// ---------------------------------------------------------------------------
// Features

struct NodeFeatures {
  Matrix messages;  // graph message order
  Matrix channels;  // graph channel order
  std::size_t embedding_dim = 0;
  bool has_counts = false;  // last column holds log(1 + count)
};

// Message rows: text embedding [+ log1p(view_count)]; channel rows: name/description embedding
// [+ log1p(subscriber_count)]. Standardization of the count slot is fitted by the trainer.
inline NodeFeatures build_node_features(const TelegraphGraph& g, const EmbeddingStore& emb, bool include_counts) {
  std::vector<std::string> missing;
  auto lookup = [&](const std::map<std::string, EmbeddingVector>& m, const std::string& id,
                    const char* kind) -> const EmbeddingVector* {
    auto it = m.find(id);
    if (it == m.end()) {
      missing.push_back(std::string(kind) + ":" + id);
      return nullptr;
    }
    return &it->second;
  };
  std::vector<const EmbeddingVector*> me, ce;
  for (const auto& m : g.messages()) me.push_back(lookup(emb.messages, m.message_id, "message"));
  for (const auto& c : g.channels()) ce.push_back(lookup(emb.channels, c.channel_id, "channel"));
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ... (" + std::to_string(missing.size()) + " total)";
    throw InvalidArgument("missing embeddings for: " + list);
  }
  std::size_t D = emb.dimension;
  if (D == 0 && !me.empty()) D = me.front()->dimension();
  if (D == 0 && !ce.empty()) D = ce.front()->dimension();
  NodeFeatures f;
  f.embedding_dim = D;
  f.has_counts = include_counts;
  const std::size_t width = D + (include_counts ? 1 : 0);
  f.messages = Matrix(g.num_messages(), width);
  f.channels = Matrix(g.num_channels(), width);
  auto fill = [&](Matrix& dst, std::size_t r, const EmbeddingVector& v, std::uint64_t count) {
    if (v.dimension() != D) throw ShapeError("embedding dimension " + std::to_string(v.dimension()) +
                                             " differs from " + std::to_string(D));
    std::copy(v.values.begin(), v.values.end(), dst.row(r).begin());
    if (include_counts) dst(r, D) = std::log1p(static_cast<double>(count));
  };
  for (std::size_t i = 0; i < me.size(); ++i) fill(f.messages, i, *me[i], g.messages()[i].view_count);
  for (std::size_t i = 0; i < ce.size(); ++i) fill(f.channels, i, *ce[i], g.channels()[i].subscriber_count);
  return f;
}

// z-scores for the log-count slot.
struct CountScaling {
  double view_mean = 0.0;
  double view_std = 1.0;
  double subscriber_mean = 0.0;
  double subscriber_std = 1.0;

  json to_json() const {
    return {{"view_mean", view_mean}, {"view_std", view_std},
            {"subscriber_mean", subscriber_mean}, {"subscriber_std", subscriber_std}};
  }
  static CountScaling from_json(const json& j) {
    return {j.at("view_mean").get<double>(), j.at("view_std").get<double>(), j.at("subscriber_mean").get<double>(),
            j.at("subscriber_std").get<double>()};
  }
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 1.0};
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}
}  // namespace detail

// Fits over the training messages and the channels that host them.
inline CountScaling fit_count_scaling(const TelegraphGraph& g, const NodeFeatures& f,
                                      std::span<const std::size_t> train_messages) {
  CountScaling s;
  if (!f.has_counts) return s;
  std::vector<double> views, subs;
  std::vector<bool> seen(g.num_channels(), false);
  for (auto m : train_messages) {
    views.push_back(f.messages(m, f.embedding_dim));
    auto c = g.channel_of(m);
    if (!seen[c]) {
      seen[c] = true;
      subs.push_back(f.channels(c, f.embedding_dim));
    }
  }
  std::tie(s.view_mean, s.view_std) = detail::mean_std(views);
  std::tie(s.subscriber_mean, s.subscriber_std) = detail::mean_std(subs);
  return s;
}

// ---------------------------------------------------------------------------
// Model topology

enum class Aggregator { Mean, Lstm };

inline std::string_view to_string(Aggregator a) { return a == Aggregator::Mean ? "mean" : "lstm"; }
inline Aggregator parse_aggregator(std::string_view s) {
  if (s == "mean") return Aggregator::Mean;
  if (s == "lstm") return Aggregator::Lstm;
  throw InvalidArgument("unknown aggregator '" + std::string(s) + "'");
}

enum Relation : std::size_t { kChannelToMessage = 0, kMessageToChannel = 1, kForwarded = 2, kNumRelations = 3 };
inline constexpr std::array<const char*, kNumRelations> kRelationNames{"channel_to_message", "message_to_channel",
                                                                       "forwarded"};
enum NodeKind : std::size_t { kMessage = 0, kChannel = 1, kNumKinds = 2 };
inline constexpr std::array<const char*, kNumKinds> kKindNames{"message", "channel"};

// Relations whose target is each node kind.
inline std::span<const std::size_t> relations_into(std::size_t kind) {
  static constexpr std::array<std::size_t, 2> msg{kChannelToMessage, kForwarded};
  static constexpr std::array<std::size_t, 1> chan{kMessageToChannel};
  if (kind == kMessage) return msg;
  return chan;
}

// Unified node index space: messages [0, M), channels [M, M + C), both in graph order.
struct ModelGraph {
  std::size_t num_messages = 0;
  std::size_t num_channels = 0;
  std::array<std::vector<std::vector<std::size_t>>, kNumRelations> adjacency;

  std::size_t size() const { return num_messages + num_channels; }
  std::size_t kind(std::size_t node) const { return node < num_messages ? kMessage : kChannel; }

  static ModelGraph from(const TelegraphGraph& g) {
    ModelGraph mg;
    mg.num_messages = g.num_messages();
    mg.num_channels = g.num_channels();
    for (auto& a : mg.adjacency) a.assign(mg.size(), {});
    const std::size_t M = mg.num_messages;
    for (std::size_t m = 0; m < M; ++m) {
      mg.adjacency[kChannelToMessage][m].push_back(M + g.channel_of(m));
      auto& fwd = mg.adjacency[kForwarded][m];
      if (g.origin_of(m) != TelegraphGraph::npos) fwd.push_back(g.origin_of(m));
      fwd.insert(fwd.end(), g.duplicates_of(m).begin(), g.duplicates_of(m).end());
      std::sort(fwd.begin(), fwd.end());
    }
    for (std::size_t c = 0; c < mg.num_channels; ++c) mg.adjacency[kMessageToChannel][M + c] = g.members(c);
    return mg;
  }
};

struct ModelConfig {
  std::size_t num_layers = 4;
  Aggregator aggregator = Aggregator::Lstm;
  std::size_t hidden_dim = 128;
  std::size_t head_dim = 0;  // 0 = hidden_dim / 2
  std::vector<std::size_t> fanout;  // per layer; empty = 10 everywhere
  nn::Activation activation = nn::Activation::Relu;
  std::uint64_t seed = 0;

  std::size_t head_width() const { return head_dim ? head_dim : std::max<std::size_t>(1, hidden_dim / 2); }
  std::size_t fanout_at(std::size_t layer) const {
    if (fanout.empty()) return 10;
    return layer < fanout.size() ? fanout[layer] : fanout.back();
  }

  void validate() const {
    if (num_layers < 1) throw InvalidArgument("num_layers must be >= 1");
    if (hidden_dim < 1) throw InvalidArgument("hidden_dim must be >= 1");
    for (auto f : fanout)
      if (f < 1) throw InvalidArgument("fanout must be >= 1 per layer");
  }

  json to_json() const {
    json fo = json::array();
    for (std::size_t l = 0; l < num_layers; ++l) fo.push_back(fanout_at(l));
    return {{"num_layers", num_layers}, {"aggregator", to_string(aggregator)}, {"hidden_dim", hidden_dim},
            {"head_dim", head_width()}, {"fanout", fo}, {"activation", nn::to_string(activation)}, {"seed", seed}};
  }
  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    c.num_layers = j.value("num_layers", c.num_layers);
    c.aggregator = parse_aggregator(j.value("aggregator", std::string(to_string(c.aggregator))));
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.head_dim = j.value("head_dim", c.head_dim);
    if (j.contains("fanout")) {
      if (j["fanout"].is_array()) c.fanout = j["fanout"].get<std::vector<std::size_t>>();
      else c.fanout = {j["fanout"].get<std::size_t>()};
    }
    c.activation = nn::parse_activation(j.value("activation", std::string("relu")));
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Neighbour sampling

// Sampled neighbours of one node for one relation at one layer. The draw depends only on
// (seed, layer, node, relation), so a node's neighbourhood is independent of the batch.
inline std::vector<std::size_t> sample_neighbors(const ModelGraph& mg, std::size_t relation, std::size_t node,
                                                 std::size_t layer, std::size_t fanout, std::uint64_t seed,
                                                 bool permute) {
  const auto& all = mg.adjacency[relation][node];
  std::vector<std::size_t> picked = all;
  SplitMix64 rng(io::mix_seed(io::mix_seed(io::mix_seed(seed, layer), node), relation));
  if (picked.size() > fanout) {
    for (std::size_t i = 0; i < fanout; ++i) std::swap(picked[i], picked[i + rng.below(picked.size() - i)]);
    picked.resize(fanout);
    if (!permute) std::sort(picked.begin(), picked.end());
  }
  if (permute) rng.shuffle(picked);
  return picked;
}

// Nodes needed at each depth. levels[N] holds the targets, levels[l-1] ⊇ levels[l].
struct ComputationPlan {
  std::vector<std::vector<std::size_t>> levels;  // sorted node ids per level
  // neighbors[l][r][i]: local rows in levels[l] for node i of levels[l+1]
  std::vector<std::array<std::vector<std::vector<std::size_t>>, kNumRelations>> neighbors;
  std::vector<std::vector<std::size_t>> self_rows;  // self_rows[l][i]: row of levels[l+1][i] inside levels[l]
  std::vector<std::size_t> target_rows;             // caller's target order -> row in levels[N]
};

inline std::size_t local_row(const std::vector<std::size_t>& level, std::size_t node) {
  auto it = std::lower_bound(level.begin(), level.end(), node);
  return static_cast<std::size_t>(it - level.begin());
}

inline ComputationPlan plan_computation(const ModelGraph& mg, const ModelConfig& cfg,
                                        std::span<const std::size_t> targets, std::uint64_t sample_seed) {
  const std::size_t N = cfg.num_layers;
  const bool permute = cfg.aggregator == Aggregator::Lstm;
  ComputationPlan plan;
  plan.levels.resize(N + 1);
  plan.levels[N].assign(targets.begin(), targets.end());
  std::sort(plan.levels[N].begin(), plan.levels[N].end());
  plan.levels[N].erase(std::unique(plan.levels[N].begin(), plan.levels[N].end()), plan.levels[N].end());

  // global neighbour lists per level, later mapped to local rows
  std::vector<std::array<std::vector<std::vector<std::size_t>>, kNumRelations>> sampled(N);
  for (std::size_t l = N; l-- > 0;) {
    const auto& upper = plan.levels[l + 1];
    std::vector<std::size_t> lower = upper;
    for (std::size_t r = 0; r < kNumRelations; ++r) sampled[l][r].assign(upper.size(), {});
    for (std::size_t i = 0; i < upper.size(); ++i) {
      const auto v = upper[i];
      for (auto r : relations_into(mg.kind(v))) {
        auto nb = sample_neighbors(mg, r, v, l, cfg.fanout_at(l), sample_seed, permute);
        lower.insert(lower.end(), nb.begin(), nb.end());
        sampled[l][r][i] = std::move(nb);
      }
    }
    std::sort(lower.begin(), lower.end());
    lower.erase(std::unique(lower.begin(), lower.end()), lower.end());
    plan.levels[l] = std::move(lower);
  }
  plan.neighbors.resize(N);
  plan.self_rows.resize(N);
  for (std::size_t l = 0; l < N; ++l) {
    const auto& lower = plan.levels[l];
    const auto& upper = plan.levels[l + 1];
    plan.self_rows[l].resize(upper.size());
    for (std::size_t i = 0; i < upper.size(); ++i) plan.self_rows[l][i] = local_row(lower, upper[i]);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      plan.neighbors[l][r].resize(upper.size());
      for (std::size_t i = 0; i < upper.size(); ++i)
        for (auto u : sampled[l][r][i]) plan.neighbors[l][r][i].push_back(local_row(lower, u));
    }
  }
  plan.target_rows.reserve(targets.size());
  for (auto t : targets) plan.target_rows.push_back(local_row(plan.levels[N], t));
  return plan;
}

// ---------------------------------------------------------------------------
// Model

class SageModel {
 public:
  SageModel() = default;

  static SageModel create(const ModelConfig& cfg, std::size_t message_dim, std::size_t channel_dim, bool has_counts) {
    cfg.validate();
    SageModel m;
    m.config_ = cfg;
    m.message_dim_ = message_dim;
    m.channel_dim_ = channel_dim;
    m.has_counts_ = has_counts;
    m.build();
    m.params_.init_glorot(cfg.seed);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const CountScaling& count_scaling() const { return scaling_; }
  void set_count_scaling(const CountScaling& s) { scaling_ = s; }
  bool has_counts() const { return has_counts_; }

  // Logits for `targets` (unified ids), in the given order. With `grad_logits` set, also runs
  // the backward pass and accumulates parameter gradients.
  std::vector<double> run(const ModelGraph& mg, const NodeFeatures& f, std::span<const std::size_t> targets,
                          std::uint64_t sample_seed, std::span<const double> grad_logits = {}) {
    check_features(f);
    const std::size_t N = config_.num_layers, H = config_.hidden_dim;
    const auto act = config_.activation;
    auto plan = plan_computation(mg, config_, targets, sample_seed);

    // Level 0: per-type input projection.
    const auto& level0 = plan.levels[0];
    const std::size_t m0 = count_messages(level0, mg);
    std::array<Matrix, kNumKinds> inputs{gather_inputs(f, level0, 0, m0, kMessage, mg),
                                         gather_inputs(f, level0, m0, level0.size(), kChannel, mg)};
    std::vector<Matrix> hidden(N + 1);
    hidden[0] = stack(input_proj_[kMessage].forward(params_, inputs[kMessage]),
                      input_proj_[kChannel].forward(params_, inputs[kChannel]));

    struct LayerCache {
      std::size_t split = 0;                      // first channel row in the upper level
      std::array<Matrix, kNumKinds> self_in;      // gathered self rows
      std::array<Matrix, kNumKinds> out;          // post-activation per kind
      std::array<Matrix, kNumRelations> agg;      // aggregated neighbour rows
      std::array<std::vector<nn::LstmCache>, kNumRelations> lstm;
    };
    std::vector<LayerCache> caches(N);
    const bool need_grad = !grad_logits.empty();

    for (std::size_t l = 0; l < N; ++l) {
      auto& c = caches[l];
      const auto& upper = plan.levels[l + 1];
      c.split = count_messages(upper, mg);
      const Matrix& prev = hidden[l];
      for (std::size_t kind = 0; kind < kNumKinds; ++kind) {
        const std::size_t begin = kind == kMessage ? 0 : c.split;
        const std::size_t end = kind == kMessage ? c.split : upper.size();
        c.self_in[kind] = Matrix(end - begin, H);
        for (std::size_t i = begin; i < end; ++i) copy_row(prev, plan.self_rows[l][i], c.self_in[kind], i - begin);
        Matrix z = self_[l][kind].forward(params_, c.self_in[kind]);
        for (auto r : relations_into(kind)) {
          c.agg[r] = Matrix(end - begin, H);
          if (config_.aggregator == Aggregator::Lstm) c.lstm[r].resize(end - begin);
          for (std::size_t i = begin; i < end; ++i) {
            const auto& nb = plan.neighbors[l][r][i];
            if (config_.aggregator == Aggregator::Mean) {
              if (nb.empty()) continue;
              auto dst = c.agg[r].row(i - begin);
              for (auto u : nb) {
                auto src = prev.row(u);
                for (std::size_t k = 0; k < H; ++k) dst[k] += src[k];
              }
              for (auto& v : dst) v /= static_cast<double>(nb.size());
            } else {
              Matrix seq(nb.size(), H);
              for (std::size_t s = 0; s < nb.size(); ++s) copy_row(prev, nb[s], seq, s);
              auto h = lstm_[l][r].forward(params_, seq, need_grad ? &c.lstm[r][i - begin] : nullptr);
              std::copy(h.begin(), h.end(), c.agg[r].row(i - begin).begin());
            }
          }
          z += relation_[l][r].forward(params_, c.agg[r]);
        }
        c.out[kind] = nn::activate(act, z);
      }
      hidden[l + 1] = stack(c.out[kMessage], c.out[kChannel]);
    }

    // Head on the requested targets.
    Matrix top(plan.target_rows.size(), H);
    for (std::size_t i = 0; i < plan.target_rows.size(); ++i) copy_row(hidden[N], plan.target_rows[i], top, i);
    Matrix a1 = nn::activate(act, head1_.forward(params_, top));
    Matrix logits = head2_.forward(params_, a1);
    std::vector<double> out(logits.values().begin(), logits.values().end());
    if (!need_grad) return out;
    if (grad_logits.size() != out.size()) throw ShapeError("run: one logit gradient per target required");

    // Backward.
    Matrix dlogits(out.size(), 1, std::vector<double>(grad_logits.begin(), grad_logits.end()));
    Matrix da1 = head2_.backward(params_, a1, dlogits);
    Matrix dtop = head1_.backward(params_, top, nn::activate_backward(act, a1, da1));
    Matrix dh(hidden[N].rows(), H);
    for (std::size_t i = 0; i < plan.target_rows.size(); ++i) add_row(dtop, i, dh, plan.target_rows[i]);

    for (std::size_t l = N; l-- > 0;) {
      auto& c = caches[l];
      const auto& upper = plan.levels[l + 1];
      Matrix dprev(hidden[l].rows(), H);
      for (std::size_t kind = 0; kind < kNumKinds; ++kind) {
        const std::size_t begin = kind == kMessage ? 0 : c.split;
        const std::size_t end = kind == kMessage ? c.split : upper.size();
        Matrix dout(end - begin, H);
        for (std::size_t i = begin; i < end; ++i) copy_row(dh, i, dout, i - begin);
        Matrix dz = nn::activate_backward(act, c.out[kind], dout);
        Matrix dself = self_[l][kind].backward(params_, c.self_in[kind], dz);
        for (std::size_t i = begin; i < end; ++i) add_row(dself, i - begin, dprev, plan.self_rows[l][i]);
        for (auto r : relations_into(kind)) {
          Matrix dagg = relation_[l][r].backward(params_, c.agg[r], dz);
          for (std::size_t i = begin; i < end; ++i) {
            const auto& nb = plan.neighbors[l][r][i];
            if (nb.empty()) continue;
            if (config_.aggregator == Aggregator::Mean) {
              const double inv = 1.0 / static_cast<double>(nb.size());
              auto g = dagg.row(i - begin);
              for (auto u : nb) {
                auto dst = dprev.row(u);
                for (std::size_t k = 0; k < H; ++k) dst[k] += g[k] * inv;
              }
            } else {
              Matrix dseq = lstm_[l][r].backward(params_, c.lstm[r][i - begin], dagg.row(i - begin));
              for (std::size_t s = 0; s < nb.size(); ++s) add_row(dseq, s, dprev, nb[s]);
            }
          }
        }
      }
      dh = std::move(dprev);
    }
    Matrix dmsg(m0, H), dchan(level0.size() - m0, H);
    for (std::size_t i = 0; i < level0.size(); ++i) {
      if (i < m0) copy_row(dh, i, dmsg, i);
      else copy_row(dh, i, dchan, i - m0);
    }
    input_proj_[kMessage].backward(params_, inputs[kMessage], dmsg);
    input_proj_[kChannel].backward(params_, inputs[kChannel], dchan);
    return out;
  }

  std::vector<double> predict(const ModelGraph& mg, const NodeFeatures& f, std::span<const std::size_t> targets,
                              std::uint64_t sample_seed) {
    auto logits = run(mg, f, targets, sample_seed);
    for (auto& z : logits) z = nn::sigmoid(z);
    return logits;
  }

  json checkpoint_config() const {
    return {{"format", "telegraph-sage/1"}, {"model", config_.to_json()}, {"message_dim", message_dim_},
            {"channel_dim", channel_dim_},  {"has_counts", has_counts_},   {"count_scaling", scaling_.to_json()}};
  }

  std::string serialize() const { return nn::serialize_checkpoint(params_, checkpoint_config()); }

  static SageModel deserialize(std::string_view text) {
    auto cp = nn::parse_checkpoint(text);
    if (cp.config.value("format", "") != "telegraph-sage/1") throw InvalidArgument("not a GraphSAGE checkpoint");
    SageModel m;
    m.config_ = ModelConfig::from_json(cp.config.at("model"));
    m.message_dim_ = cp.config.at("message_dim").get<std::size_t>();
    m.channel_dim_ = cp.config.at("channel_dim").get<std::size_t>();
    m.has_counts_ = cp.config.at("has_counts").get<bool>();
    m.scaling_ = CountScaling::from_json(cp.config.at("count_scaling"));
    m.build();
    nn::load_params(m.params_, cp);
    return m;
  }

 private:
  void build() {
    const std::size_t H = config_.hidden_dim, N = config_.num_layers;
    input_proj_[kMessage] = nn::Affine::create(params_, "input.message", message_dim_, H);
    input_proj_[kChannel] = nn::Affine::create(params_, "input.channel", channel_dim_, H);
    self_.resize(N);
    relation_.resize(N);
    lstm_.resize(N);
    for (std::size_t l = 0; l < N; ++l) {
      const std::string p = "layer" + std::to_string(l);
      for (std::size_t k = 0; k < kNumKinds; ++k) self_[l][k] = nn::Affine::create(params_, p + ".self." + kKindNames[k], H, H);
      for (std::size_t r = 0; r < kNumRelations; ++r) {
        relation_[l][r] = nn::Affine::create(params_, p + ".relation." + kRelationNames[r], H, H, false);
        if (config_.aggregator == Aggregator::Lstm)
          lstm_[l][r] = nn::Lstm::create(params_, p + ".lstm." + kRelationNames[r], H, H);
      }
    }
    head1_ = nn::Affine::create(params_, "head.fc1", H, config_.head_width());
    head2_ = nn::Affine::create(params_, "head.fc2", config_.head_width(), 1);
  }

  void check_features(const NodeFeatures& f) const {
    if (f.messages.cols() != message_dim_ || f.channels.cols() != channel_dim_ || f.has_counts != has_counts_)
      throw ShapeError("features " + f.messages.shape_string() + "/" + f.channels.shape_string() +
                       " do not match model input dims " + std::to_string(message_dim_) + "/" +
                       std::to_string(channel_dim_));
  }

  static std::size_t count_messages(const std::vector<std::size_t>& level, const ModelGraph& mg) {
    return static_cast<std::size_t>(std::lower_bound(level.begin(), level.end(), mg.num_messages) - level.begin());
  }

  Matrix gather_inputs(const NodeFeatures& f, const std::vector<std::size_t>& level, std::size_t begin,
                       std::size_t end, std::size_t kind, const ModelGraph& mg) const {
    const Matrix& src = kind == kMessage ? f.messages : f.channels;
    Matrix out(end - begin, src.cols());
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t row = kind == kMessage ? level[i] : level[i] - mg.num_messages;
      copy_row(src, row, out, i - begin);
      if (has_counts_) {
        double& slot = out(i - begin, src.cols() - 1);
        slot = kind == kMessage ? (slot - scaling_.view_mean) / scaling_.view_std
                                : (slot - scaling_.subscriber_mean) / scaling_.subscriber_std;
      }
    }
    return out;
  }

  static void copy_row(const Matrix& src, std::size_t r, Matrix& dst, std::size_t d) {
    auto s = src.row(r);
    std::copy(s.begin(), s.end(), dst.row(d).begin());
  }
  static void add_row(const Matrix& src, std::size_t r, Matrix& dst, std::size_t d) {
    auto s = src.row(r);
    auto t = dst.row(d);
    for (std::size_t k = 0; k < s.size(); ++k) t[k] += s[k];
  }
  static Matrix stack(const Matrix& a, const Matrix& b) {
    const std::size_t cols = a.rows() ? a.cols() : b.cols();
    Matrix out(a.rows() + b.rows(), cols);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
  }

  ModelConfig config_;
  std::size_t message_dim_ = 0;
  std::size_t channel_dim_ = 0;
  bool has_counts_ = false;
  CountScaling scaling_;
  nn::ParamSet params_;
  std::array<nn::Affine, kNumKinds> input_proj_{};
  std::vector<std::array<nn::Affine, kNumKinds>> self_;
  std::vector<std::array<nn::Affine, kNumRelations>> relation_;
  std::vector<std::array<nn::Lstm, kNumRelations>> lstm_;
  nn::Affine head1_{};
  nn::Affine head2_{};
};

// Probabilities p(factual) for message ids; unknown or non-message targets are lookup errors.
inline std::vector<double> model_forward(SageModel& model, const TelegraphGraph& g, const NodeFeatures& f,
                                         std::span<const std::string> target_message_ids,
                                         std::uint64_t sample_seed = 0) {
  std::vector<std::size_t> targets;
  targets.reserve(target_message_ids.size());
  for (const auto& id : target_message_ids) {
    auto i = g.message_index(id);
    if (i == TelegraphGraph::npos) throw LookupError("unknown target message '" + id + "'");
    targets.push_back(i);
  }
  return model.predict(ModelGraph::from(g), f, targets, sample_seed);
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { Channel, Message };

inline std::string_view to_string(SplitMode m) { return m == SplitMode::Channel ? "channel" : "message"; }
inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "channel") return SplitMode::Channel;
  if (s == "message") return SplitMode::Message;
  throw InvalidArgument("unknown split mode '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 0;  // 0 = every training target in one batch
  nn::OptimizerConfig optimizer;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  bool stratified = true;
  SplitMode split_mode = SplitMode::Channel;
  bool select_best = true;  // keep the epoch with the lowest validation loss
  std::uint64_t seed = 0;

  void validate() const {
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
      throw InvalidArgument("split fractions must sum to 1");
    if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0)
      throw InvalidArgument("split fractions must be non-negative with a positive train share");
  }

  json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"optimizer", optimizer.to_json()},
            {"train_fraction", train_fraction},
            {"val_fraction", val_fraction},
            {"test_fraction", test_fraction},
            {"stratified", stratified},
            {"split_mode", to_string(split_mode)},
            {"select_best", select_best},
            {"seed", seed}};
  }
  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) c.optimizer = nn::OptimizerConfig::from_json(j["optimizer"]);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.stratified = j.value("stratified", c.stratified);
    c.split_mode = parse_split_mode(j.value("split_mode", std::string("channel")));
    c.select_best = j.value("select_best", c.select_best);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

// Labeled message indices (graph order) with 1 = factual.
struct Example {
  std::size_t message = 0;
  int label = 0;
};

struct Split {
  std::vector<Example> train, val, test;
};

inline std::vector<Example> resolve_examples(const TelegraphGraph& g, std::span<const LabeledMessage> labeled) {
  std::vector<Example> out;
  out.reserve(labeled.size());
  for (const auto& l : labeled) {
    if (!is_binary(l.label)) continue;
    auto i = g.message_index(l.message_id);
    if (i == TelegraphGraph::npos) throw LookupError("labeled message '" + l.message_id + "' not in graph");
    out.push_back({i, l.label == Label::Factual ? 1 : 0});
  }
  std::sort(out.begin(), out.end(), [](const Example& a, const Example& b) { return a.message < b.message; });
  return out;
}

// Deterministic for a fixed seed. Channel mode keeps every channel's messages in one part;
// stratification then works on each channel's majority label.
inline Split make_split(const TelegraphGraph& g, std::vector<Example> examples, const TrainConfig& cfg) {
  cfg.validate();
  Split s;
  SplitMix64 rng(io::mix_seed(cfg.seed, 0x5b17));
  auto cut = [&](std::size_t n) {
    auto ntrain = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    auto nval = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
    ntrain = std::min(ntrain, n);
    nval = std::min(nval, n - ntrain);
    return std::pair{ntrain, nval};
  };
  if (cfg.split_mode == SplitMode::Message) {
    std::array<std::vector<Example>, 2> strata;
    for (const auto& e : examples) strata[cfg.stratified ? e.label : 0].push_back(e);
    for (auto& st : strata) {
      rng.shuffle(st);
      auto [ntrain, nval] = cut(st.size());
      for (std::size_t i = 0; i < st.size(); ++i)
        (i < ntrain ? s.train : i < ntrain + nval ? s.val : s.test).push_back(st[i]);
    }
  } else {
    std::map<std::size_t, std::vector<Example>> by_channel;
    for (const auto& e : examples) by_channel[g.channel_of(e.message)].push_back(e);
    std::array<std::vector<std::size_t>, 2> strata;
    std::array<std::size_t, 2> totals{0, 0};
    for (const auto& [ch, ex] : by_channel) {
      std::size_t pos = 0;
      for (const auto& e : ex) pos += static_cast<std::size_t>(e.label);
      int majority = cfg.stratified && 2 * pos >= ex.size() ? 1 : 0;
      strata[majority].push_back(ch);
      totals[majority] += ex.size();
    }
    for (std::size_t k = 0; k < 2; ++k) {
      auto& chans = strata[k];
      rng.shuffle(chans);
      auto [ntrain, nval] = cut(totals[k]);
      std::size_t assigned = 0;
      for (auto ch : chans) {
        auto& part = assigned < ntrain ? s.train : assigned < ntrain + nval ? s.val : s.test;
        for (const auto& e : by_channel[ch]) part.push_back(e);
        assigned += by_channel[ch].size();
      }
    }
  }
  auto by_msg = [](const Example& a, const Example& b) { return a.message < b.message; };
  std::sort(s.train.begin(), s.train.end(), by_msg);
  std::sort(s.val.begin(), s.val.end(), by_msg);
  std::sort(s.test.begin(), s.test.end(), by_msg);
  return s;
}

inline json split_to_json(const TelegraphGraph& g, const Split& s) {
  auto ids = [&](const std::vector<Example>& v) {
    json a = json::array();
    for (const auto& e : v) a.push_back(g.messages()[e.message].message_id);
    return a;
  };
  return {{"train", ids(s.train)}, {"val", ids(s.val)}, {"test", ids(s.test)}};
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<metrics::MetricsReport> val;
  double val_loss = 0.0;

  json to_json() const {
    json j = {{"epoch", epoch}, {"loss", loss}, {"lr", lr}};
    if (val) {
      j["val_loss"] = val_loss;
      j["val_mcc"] = val->mcc;
      j["val_ece"] = val->ece;
      j["val_factual_f1"] = val->classes.factual.f1;
      j["val_misinformation_f1"] = val->classes.misinformation.f1;
    } else {
      j["val_mcc"] = nullptr;
    }
    return j;
  }
};

inline std::string history_to_jsonl(std::span<const EpochRecord> h) {
  std::string out;
  for (const auto& r : h) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

inline constexpr std::uint64_t kEvalSampleSalt = 0xe7a1;

namespace detail {

inline std::vector<double> labels_of(std::span<const Example> ex) {
  std::vector<double> y;
  y.reserve(ex.size());
  for (const auto& e : ex) y.push_back(static_cast<double>(e.label));
  return y;
}

inline std::vector<int> int_labels_of(std::span<const Example> ex) {
  std::vector<int> y;
  y.reserve(ex.size());
  for (const auto& e : ex) y.push_back(e.label);
  return y;
}

inline void require_two_classes(const std::vector<Example>& train) {
  bool pos = false, neg = false;
  for (const auto& e : train) (e.label ? pos : neg) = true;
  if (!(pos && neg)) throw InvalidArgument("training split must contain both classes");
}

inline void check_loss(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
}

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
};

// Shared mini-batch loop. `step_fn(batch, batch_seed)` returns the batch loss after filling
// gradients; `logits_fn(examples)` scores the validation split. With select_best the parameters
// of the epoch with the lowest validation loss are restored at the end.
template <typename StepFn, typename LogitsFn>
FitResult fit(nn::ParamSet& params, const Split& split, const TrainConfig& cfg, StepFn&& step_fn,
              LogitsFn&& logits_fn) {
  nn::OptimizerState opt(cfg.optimizer);
  FitResult out;
  auto& history = out.history;
  std::vector<Matrix> best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Example> order = split.train;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SplitMix64 rng(io::mix_seed(cfg.seed, 1000 + epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    const double lr = opt.current_lr();
    std::size_t batches = 0;
    const std::size_t bs = cfg.batch_size ? cfg.batch_size : order.size();
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      std::size_t end = std::min(order.size(), begin + bs);
      std::span<const Example> batch(order.data() + begin, end - begin);
      params.zero_grad();
      double loss = step_fn(batch, io::mix_seed(io::mix_seed(cfg.seed, epoch), batches));
      check_loss(loss, epoch, batches);
      opt.step(params);
      loss_sum += loss * static_cast<double>(batch.size());
      ++batches;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), lr, std::nullopt};
    out.selected_epoch = epoch;
    if (!split.val.empty()) {
      auto z = logits_fn(std::span<const Example>(split.val));
      rec.val_loss = nn::bce_with_logits(z, labels_of(split.val)).loss;
      for (auto& v : z) v = nn::sigmoid(v);
      rec.val = metrics::evaluate(z, int_labels_of(split.val));
      if (cfg.select_best && rec.val_loss < best_loss) {
        best_loss = rec.val_loss;
        best.clear();
        for (const auto& p : params) best.push_back(p.value);
      }
    }
    history.push_back(std::move(rec));
    opt.advance_schedule();
  }
  if (!best.empty()) {
    std::size_t k = 0;
    for (auto& p : params) p.value = best[k++];
    for (const auto& r : history)
      if (r.val_loss == best_loss) {
        out.selected_epoch = r.epoch;
        break;
      }
  }
  return out;
}

}  // namespace detail

// Mean BCE over `batch` with gradients accumulated into the model.
inline double loss_and_grad(SageModel& model, const ModelGraph& mg, const NodeFeatures& f,
                            std::span<const Example> batch, std::uint64_t sample_seed) {
  std::vector<std::size_t> targets;
  for (const auto& e : batch) targets.push_back(e.message);
  auto logits = model.run(mg, f, targets, sample_seed);
  auto loss = nn::bce_with_logits(logits, detail::labels_of(batch));
  model.run(mg, f, targets, sample_seed, loss.grad);
  return loss.loss;
}

inline double loss_only(SageModel& model, const ModelGraph& mg, const NodeFeatures& f, std::span<const Example> batch,
                        std::uint64_t sample_seed) {
  std::vector<std::size_t> targets;
  for (const auto& e : batch) targets.push_back(e.message);
  auto logits = model.run(mg, f, targets, sample_seed);
  return nn::bce_with_logits(logits, detail::labels_of(batch)).loss;
}

inline std::vector<double> eval_logits(SageModel& model, const ModelGraph& mg, const NodeFeatures& f,
                                       std::span<const Example> examples) {
  std::vector<std::size_t> targets;
  for (const auto& e : examples) targets.push_back(e.message);
  return model.run(mg, f, targets, io::mix_seed(model.config().seed, kEvalSampleSalt));
}

inline metrics::MetricsReport evaluate_model(SageModel& model, const ModelGraph& mg, const NodeFeatures& f,
                                             std::span<const Example> examples) {
  auto p = eval_logits(model, mg, f, examples);
  for (auto& v : p) v = nn::sigmoid(v);
  return metrics::evaluate(p, detail::int_labels_of(examples));
}

struct TrainResult {
  SageModel model;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
  Split split;
  std::optional<metrics::MetricsReport> train_metrics;
  std::optional<metrics::MetricsReport> test_metrics;
};

// Trains on an explicit split (labels may differ from the ones used to build it).
inline TrainResult train_model_on_split(const TelegraphGraph& g, const NodeFeatures& f, const Split& split,
                                        const ModelConfig& model_config, const TrainConfig& train_config) {
  train_config.validate();
  detail::require_two_classes(split.train);
  TrainResult r;
  r.split = split;
  r.model = SageModel::create(model_config, f.messages.cols(), f.channels.cols(), f.has_counts);
  std::vector<std::size_t> train_msgs;
  for (const auto& e : split.train) train_msgs.push_back(e.message);
  r.model.set_count_scaling(fit_count_scaling(g, f, train_msgs));
  const auto mg = ModelGraph::from(g);
  auto fitted = detail::fit(
      r.model.params(), split, train_config,
      [&](std::span<const Example> batch, std::uint64_t seed) { return loss_and_grad(r.model, mg, f, batch, seed); },
      [&](std::span<const Example> ex) { return eval_logits(r.model, mg, f, ex); });
  r.history = std::move(fitted.history);
  r.selected_epoch = fitted.selected_epoch;
  r.train_metrics = evaluate_model(r.model, mg, f, split.train);
  if (!split.test.empty()) r.test_metrics = evaluate_model(r.model, mg, f, split.test);
  return r;
}

inline TrainResult train_model(const TelegraphGraph& g, const NodeFeatures& f, std::span<const LabeledMessage> labeled,
                               const ModelConfig& model_config, const TrainConfig& train_config) {
  auto split = make_split(g, resolve_examples(g, labeled), train_config);
  return train_model_on_split(g, f, split, model_config, train_config);
}

// ---------------------------------------------------------------------------
// Text-only baseline: one fully connected layer on the message embedding, then a sigmoid.

class TextBaseline {
 public:
  TextBaseline() = default;
  static TextBaseline create(std::size_t dim, std::uint64_t seed) {
    TextBaseline b;
    b.dim_ = dim;
    b.fc_ = nn::Affine::create(b.params_, "text.fc", dim, 1);
    b.params_.init_glorot(seed);
    return b;
  }

  nn::ParamSet& params() { return params_; }
  std::size_t dim() const { return dim_; }

  Matrix inputs(const NodeFeatures& f, std::span<const Example> ex) const {
    Matrix x(ex.size(), dim_);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      auto src = f.messages.row(ex[i].message);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(dim_), x.row(i).begin());
    }
    return x;
  }

  std::vector<double> logits(const Matrix& x) const { return fc_.forward(params_, x).values(); }

  double loss_and_grad(const Matrix& x, std::span<const double> y) {
    auto z = logits(x);
    auto loss = nn::bce_with_logits(z, y);
    fc_.backward(params_, x, Matrix(z.size(), 1, loss.grad));
    return loss.loss;
  }

  std::vector<double> predict(const NodeFeatures& f, std::span<const Example> ex) const {
    auto z = logits(inputs(f, ex));
    for (auto& v : z) v = nn::sigmoid(v);
    return z;
  }

  std::string serialize() const {
    return nn::serialize_checkpoint(params_, {{"format", "telegraph-text-baseline/1"}, {"dim", dim_}});
  }
  static TextBaseline deserialize(std::string_view text) {
    auto cp = nn::parse_checkpoint(text);
    if (cp.config.value("format", "") != "telegraph-text-baseline/1") throw InvalidArgument("not a baseline checkpoint");
    auto b = create(cp.config.at("dim").get<std::size_t>(), 0);
    nn::load_params(b.params_, cp);
    return b;
  }

 private:
  std::size_t dim_ = 0;
  nn::ParamSet params_;
  nn::Affine fc_{};
};

struct BaselineResult {
  TextBaseline model;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
  Split split;
  std::optional<metrics::MetricsReport> train_metrics;
  std::optional<metrics::MetricsReport> test_metrics;
};

inline metrics::MetricsReport evaluate_baseline(const TextBaseline& b, const NodeFeatures& f,
                                                std::span<const Example> ex) {
  return metrics::evaluate(b.predict(f, ex), detail::int_labels_of(ex));
}

// Same loss, optimizer, batches and split as the graph model. Uses only the embedding part of
// the message features.
inline BaselineResult train_text_baseline_on_split(const NodeFeatures& f, const Split& split,
                                                   const TrainConfig& train_config, std::uint64_t init_seed = 0) {
  train_config.validate();
  detail::require_two_classes(split.train);
  BaselineResult r;
  r.split = split;
  r.model = TextBaseline::create(f.embedding_dim, init_seed);
  auto fitted = detail::fit(
      r.model.params(), split, train_config,
      [&](std::span<const Example> batch, std::uint64_t) {
        return r.model.loss_and_grad(r.model.inputs(f, batch), detail::labels_of(batch));
      },
      [&](std::span<const Example> ex) { return r.model.logits(r.model.inputs(f, ex)); });
  r.history = std::move(fitted.history);
  r.selected_epoch = fitted.selected_epoch;
  r.train_metrics = evaluate_baseline(r.model, f, split.train);
  if (!split.test.empty()) r.test_metrics = evaluate_baseline(r.model, f, split.test);
  return r;
}

inline BaselineResult train_text_baseline(const TelegraphGraph& g, const NodeFeatures& f,
                                          std::span<const LabeledMessage> labeled, const TrainConfig& train_config,
                                          std::uint64_t init_seed = 0) {
  auto split = make_split(g, resolve_examples(g, labeled), train_config);
  return train_text_baseline_on_split(f, split, train_config, init_seed);
}

}  // namespace telegraph::sage
