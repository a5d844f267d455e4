#pragma once

// Degree, forward-degree and betweenness centrality over the Telegraph graph.
//
// Node index space for all measures: channels first (graph order), then messages.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "telegraph/graph_store.hpp"
#include "telegraph/io.hpp"

namespace telegraph::centrality {

struct ScoreEntry {
  NodeRef node;
  double score = 0.0;
  std::optional<double> in_score;
  std::optional<double> out_score;
};

struct CentralityScores {
  std::string measure;
  std::string edge_filter;
  double runtime_ms = 0.0;
  std::vector<NodeRef> nodes;  // index space shared by the score vectors
  std::vector<double> score;
  std::vector<double> in_score;   // forward-degree only
  std::vector<double> out_score;  // forward-degree only

  bool has_in_out() const { return !in_score.empty(); }

  // Descending score, ties by node type then id.
  std::vector<ScoreEntry> sorted() const {
    std::vector<std::size_t> order(nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return nodes[a] < nodes[b];
    });
    std::vector<ScoreEntry> out;
    out.reserve(order.size());
    for (auto i : order) {
      ScoreEntry e{nodes[i], score[i], std::nullopt, std::nullopt};
      if (has_in_out()) {
        e.in_score = in_score[i];
        e.out_score = out_score[i];
      }
      out.push_back(std::move(e));
    }
    return out;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : sorted()) {
      json j = {{"node_type", to_string(e.node.type)}, {"node_id", e.node.id}, {"score", e.score}};
      if (e.in_score) {
        j["in"] = *e.in_score;
        j["out"] = *e.out_score;
      }
      out += j.dump();
      out += '\n';
    }
    return out;
  }
};

inline std::vector<NodeRef> node_refs(const TelegraphGraph& g) {
  std::vector<NodeRef> refs;
  refs.reserve(g.num_channels() + g.num_messages());
  for (const auto& c : g.channels()) refs.push_back({NodeType::Channel, c.channel_id});
  for (const auto& m : g.messages()) refs.push_back({NodeType::Message, m.message_id});
  return refs;
}

namespace detail {
inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}
}  // namespace detail

// Incident edges of every kind. O(n + m).
inline CentralityScores degree_centrality(const TelegraphGraph& g) {
  auto start = std::chrono::steady_clock::now();
  CentralityScores s{"degree", "IS_PART_OF|FORWARDED", 0.0, node_refs(g), {}, {}, {}};
  const std::size_t C = g.num_channels();
  s.score.assign(s.nodes.size(), 0.0);
  for (std::size_t c = 0; c < C; ++c) s.score[c] = static_cast<double>(g.members(c).size());
  for (std::size_t m = 0; m < g.num_messages(); ++m) {
    double d = 1.0 + static_cast<double>(g.duplicates_of(m).size());
    if (g.origin_of(m) != TelegraphGraph::npos) d += 1.0;
    s.score[C + m] = d;
  }
  s.runtime_ms = detail::elapsed_ms(start);
  return s;
}

// FORWARDED edges only, projected onto channels. An original message's forwarded copies count
// as `out` for it and its channel; each copy counts as `in` for itself and the channel it landed in.
inline CentralityScores forward_degree_centrality(const TelegraphGraph& g) {
  auto start = std::chrono::steady_clock::now();
  CentralityScores s{"forward_degree", "FORWARDED", 0.0, node_refs(g), {}, {}, {}};
  const std::size_t C = g.num_channels(), n = s.nodes.size();
  s.in_score.assign(n, 0.0);
  s.out_score.assign(n, 0.0);
  for (std::size_t m = 0; m < g.num_messages(); ++m) {
    auto origin = g.origin_of(m);
    if (origin == TelegraphGraph::npos) continue;
    s.in_score[C + m] += 1.0;
    s.in_score[g.channel_of(m)] += 1.0;
    s.out_score[C + origin] += 1.0;
    s.out_score[g.channel_of(origin)] += 1.0;
  }
  s.score.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.score[i] = s.in_score[i] + s.out_score[i];
  s.runtime_ms = detail::elapsed_ms(start);
  return s;
}

// ---------------------------------------------------------------------------
// Betweenness (Brandes), undirected and unweighted.

// Compressed undirected adjacency.
struct Adjacency {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> targets;

  std::size_t num_nodes() const { return offsets.size() - 1; }
  std::span<const std::size_t> neighbors(std::size_t v) const {
    return {targets.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }

  // Builds from an undirected edge list; self-loops and repeated edges are dropped.
  static Adjacency from_edges(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges) {
    std::vector<std::vector<std::size_t>> lists(n);
    for (auto [a, b] : edges) {
      if (a >= n || b >= n) throw InvalidArgument("edge endpoint out of range");
      if (a == b) continue;
      lists[a].push_back(b);
      lists[b].push_back(a);
    }
    Adjacency adj;
    adj.offsets.reserve(n + 1);
    for (auto& l : lists) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
      adj.targets.insert(adj.targets.end(), l.begin(), l.end());
      adj.offsets.push_back(adj.targets.size());
    }
    return adj;
  }
};

inline Adjacency undirected_adjacency(const TelegraphGraph& g) {
  const std::size_t C = g.num_channels();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(g.num_edges());
  for (std::size_t m = 0; m < g.num_messages(); ++m) {
    edges.emplace_back(C + m, g.channel_of(m));
    if (g.origin_of(m) != TelegraphGraph::npos) edges.emplace_back(C + m, C + g.origin_of(m));
  }
  return Adjacency::from_edges(C + g.num_messages(), std::move(edges));
}

// Adds the single-source dependencies of `source` into `acc`.
inline void accumulate_source(const Adjacency& adj, std::size_t source, std::vector<double>& acc,
                              std::vector<std::size_t>& order, std::vector<double>& sigma,
                              std::vector<std::int64_t>& dist, std::vector<double>& delta,
                              std::vector<std::size_t>& queue) {
  const std::size_t n = adj.num_nodes();
  order.clear();
  sigma.assign(n, 0.0);
  dist.assign(n, -1);
  delta.assign(n, 0.0);
  queue.clear();
  sigma[source] = 1.0;
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    auto v = queue[head];
    order.push_back(v);
    for (auto w : adj.neighbors(v)) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
      if (dist[w] == dist[v] + 1) sigma[w] += sigma[v];
    }
  }
  for (std::size_t k = order.size(); k-- > 0;) {
    auto w = order[k];
    for (auto v : adj.neighbors(w))
      if (dist[v] == dist[w] - 1) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
    if (w != source) acc[w] += delta[w];
  }
}

struct BetweennessOptions {
  std::size_t sample_sources = 0;  // 0 = exact; otherwise a seeded source sample, scaled by n/k
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t block_size = 64;  // sources per reduction block; fixes the accumulation order
  std::function<void(std::size_t done, std::size_t total)> progress;
};

// Resumable Brandes run. Sources are processed in fixed blocks whose partial sums are reduced
// in block order, so the result does not depend on the thread count.
class BetweennessRun {
 public:
  BetweennessRun(Adjacency adj, BetweennessOptions options) : adj_(std::move(adj)), options_(std::move(options)) {
    const std::size_t n = adj_.num_nodes();
    sources_.resize(n);
    std::iota(sources_.begin(), sources_.end(), 0);
    if (options_.sample_sources > 0 && options_.sample_sources < n) {
      std::mt19937_64 rng(options_.seed);
      std::shuffle(sources_.begin(), sources_.end(), rng);
      sources_.resize(options_.sample_sources);
      std::sort(sources_.begin(), sources_.end());
    }
    sums_.assign(n, 0.0);
    if (options_.block_size == 0) options_.block_size = 1;
  }

  std::size_t total_sources() const { return sources_.size(); }
  std::size_t done_sources() const { return next_; }
  bool finished() const { return next_ >= sources_.size(); }

  // Processes up to `max_sources` more sources (rounded up to whole blocks); 0 means all.
  void run(std::size_t max_sources = 0) {
    std::size_t budget = max_sources == 0 ? sources_.size() : max_sources;
    const std::size_t threads = std::max<std::size_t>(1, options_.threads);
    while (!finished() && budget > 0) {
      // Up to `threads` blocks per round.
      std::vector<std::pair<std::size_t, std::size_t>> blocks;
      std::size_t pos = next_;
      while (blocks.size() < threads && pos < sources_.size() && budget > 0) {
        std::size_t end = std::min(sources_.size(), pos + options_.block_size);
        blocks.emplace_back(pos, end);
        budget = end - pos >= budget ? 0 : budget - (end - pos);
        pos = end;
      }
      std::vector<std::vector<double>> partial(blocks.size(), std::vector<double>(adj_.num_nodes(), 0.0));
      auto work = [&](std::size_t b) {
        std::vector<std::size_t> order, queue;
        std::vector<double> sigma, delta;
        std::vector<std::int64_t> dist;
        for (std::size_t i = blocks[b].first; i < blocks[b].second; ++i)
          accumulate_source(adj_, sources_[i], partial[b], order, sigma, dist, delta, queue);
      };
      if (blocks.size() == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t b = 0; b < blocks.size(); ++b) pool.emplace_back(work, b);
        for (auto& t : pool) t.join();
      }
      for (const auto& p : partial)
        for (std::size_t v = 0; v < p.size(); ++v) sums_[v] += p[v];
      next_ = pos;
      if (options_.progress) options_.progress(next_, sources_.size());
    }
  }

  // Final scores: pair sums halved (each unordered pair is seen from both ends), scaled for sampling.
  std::vector<double> scores() const {
    std::vector<double> out(sums_.size());
    const double n = static_cast<double>(adj_.num_nodes());
    const double scale = sources_.empty() ? 0.0 : n / static_cast<double>(sources_.size());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = sums_[v] * 0.5 * scale;
    return out;
  }

  json checkpoint() const {
    std::vector<std::string> sums;
    sums.reserve(sums_.size());
    for (double v : sums_) sums.push_back(io::format_double(v));
    return {{"format", "telegraph-betweenness/1"}, {"nodes", adj_.num_nodes()},
            {"sources", sources_},                 {"next", next_},
            {"block_size", options_.block_size},   {"partial_sums", sums}};
  }

  void restore(const json& cp) {
    if (cp.value("format", "") != "telegraph-betweenness/1") throw InvalidArgument("not a betweenness checkpoint");
    if (cp.at("nodes").get<std::size_t>() != adj_.num_nodes()) throw InvalidArgument("checkpoint node count mismatch");
    if (cp.at("sources").get<std::vector<std::size_t>>() != sources_)
      throw InvalidArgument("checkpoint source order mismatch");
    if (cp.at("block_size").get<std::size_t>() != options_.block_size)
      throw InvalidArgument("checkpoint block size mismatch");
    auto sums = cp.at("partial_sums").get<std::vector<std::string>>();
    if (sums.size() != sums_.size()) throw InvalidArgument("checkpoint sum count mismatch");
    for (std::size_t v = 0; v < sums.size(); ++v) sums_[v] = io::parse_double(sums[v]);
    next_ = cp.at("next").get<std::size_t>();
  }

  void save_checkpoint(const std::filesystem::path& path) const { io::write_file(path, checkpoint().dump() + "\n"); }
  void load_checkpoint(const std::filesystem::path& path) { restore(json::parse(io::read_file(path))); }

 private:
  Adjacency adj_;
  BetweennessOptions options_;
  std::vector<std::size_t> sources_;
  std::vector<double> sums_;
  std::size_t next_ = 0;
};

inline std::vector<double> betweenness(const Adjacency& adj, const BetweennessOptions& options = {}) {
  BetweennessRun run(adj, options);
  run.run();
  return run.scores();
}

inline CentralityScores betweenness_centrality(const TelegraphGraph& g, const BetweennessOptions& options = {}) {
  auto start = std::chrono::steady_clock::now();
  CentralityScores s{options.sample_sources ? "betweenness_sampled" : "betweenness", "IS_PART_OF|FORWARDED", 0.0,
                     node_refs(g), {}, {}, {}};
  s.score = betweenness(undirected_adjacency(g), options);
  s.runtime_ms = detail::elapsed_ms(start);
  return s;
}

// ---------------------------------------------------------------------------
// Top-k channel tables. Ties broken by channel name ascending.

inline std::string top_k_table(const TelegraphGraph& g, const CentralityScores& s, std::size_t k,
                               const std::string& score_header) {
  std::vector<std::size_t> idx(g.num_channels());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s.score[a] != s.score[b]) return s.score[a] > s.score[b];
    const auto& ca = g.channels()[a];
    const auto& cb = g.channels()[b];
    if (ca.name != cb.name) return ca.name < cb.name;
    return ca.channel_id < cb.channel_id;
  });
  if (idx.size() > k) idx.resize(k);

  auto fmt = [](double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{score_header};
  if (s.has_in_out()) {
    header.emplace_back("Out");
    header.emplace_back("In");
  }
  header.emplace_back("Channel");
  header.emplace_back("Subscribers");
  rows.push_back(header);
  for (auto i : idx) {
    std::vector<std::string> r{fmt(s.score[i])};
    if (s.has_in_out()) {
      r.push_back(fmt(s.out_score[i]));
      r.push_back(fmt(s.in_score[i]));
    }
    const auto& ch = g.channels()[i];
    r.push_back(ch.name.empty() ? ch.channel_id : ch.name);
    r.push_back(std::to_string(ch.subscriber_count));
    rows.push_back(std::move(r));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::string out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    out += "|";
    for (std::size_t c = 0; c < r.size(); ++c) {
      out += ' ';
      out += r[c];
      out.append(width[c] - r[c].size(), ' ');
      out += " |";
    }
    out += '\n';
    if (ri == 0) {
      out += "|";
      for (auto w : width) out += std::string(w + 2, '-') + "|";
      out += '\n';
    }
  }
  return out;
}

}  // namespace telegraph::centrality
