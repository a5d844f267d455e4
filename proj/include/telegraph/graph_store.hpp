#pragma once

// Typed property graph of Telegram channels and messages.
//
// Two edge kinds are stored:
//   IS_PART_OF  message -> channel, exactly one per message
//   FORWARDED   duplicate message -> root original message
// Channel-level forwarding adjacency is derived from these on demand.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "telegraph/error.hpp"
#include "telegraph/io.hpp"

namespace telegraph {

enum class NodeType { Channel, Message };
enum class EdgeKind { IsPartOf, Forwarded };
enum class Direction { In, Out, Both };

inline std::string_view to_string(NodeType t) { return t == NodeType::Channel ? "channel" : "message"; }
inline std::string_view to_string(EdgeKind k) { return k == EdgeKind::IsPartOf ? "IS_PART_OF" : "FORWARDED"; }

inline NodeType parse_node_type(std::string_view s) {
  if (s == "channel") return NodeType::Channel;
  if (s == "message") return NodeType::Message;
  throw InvalidArgument("unknown node type '" + std::string(s) + "'");
}

inline EdgeKind parse_edge_kind(std::string_view s) {
  if (s == "IS_PART_OF") return EdgeKind::IsPartOf;
  if (s == "FORWARDED") return EdgeKind::Forwarded;
  throw InvalidArgument("unknown edge kind '" + std::string(s) + "'");
}

struct ChannelNode {
  std::string channel_id;
  std::string name;
  std::string description;
  std::uint64_t subscriber_count = 0;

  friend bool operator==(const ChannelNode&, const ChannelNode&) = default;
};

struct MessageNode {
  std::string message_id;
  std::string text;
  std::uint64_t view_count = 0;
  std::int64_t posted_at = 0;  // UTC seconds
  std::optional<std::string> origin_message_id;  // set iff forwarded duplicate

  bool is_duplicate() const { return origin_message_id.has_value(); }
  friend bool operator==(const MessageNode&, const MessageNode&) = default;
};

struct NodeRef {
  NodeType type = NodeType::Message;
  std::string id;

  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

struct Edge {
  NodeRef source;
  EdgeKind kind = EdgeKind::IsPartOf;
  NodeRef target;

  friend auto operator<=>(const Edge& a, const Edge& b) {
    if (auto c = a.source.id <=> b.source.id; c != 0) return c;
    if (auto c = a.source.type <=> b.source.type; c != 0) return c;
    if (auto c = a.kind <=> b.kind; c != 0) return c;
    if (auto c = a.target.id <=> b.target.id; c != 0) return c;
    return a.target.type <=> b.target.type;
  }
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Normalized form of one exported message.
struct IngestRecord {
  std::string message_id;
  std::string channel_id;
  std::string text;
  std::uint64_t view_count = 0;
  std::int64_t posted_at = 0;
  std::optional<std::string> forwarded_from_message_id;
  std::string channel_name;
  std::string channel_description;
  std::uint64_t subscriber_count = 0;
};

struct IngestError {
  std::size_t line = 0;  // 0 when records did not come from a file
  std::string message_id;
  std::string reason;
};

struct IngestReport {
  std::size_t records_read = 0;
  std::size_t messages_added = 0;
  std::size_t forwards_resolved = 0;
  std::vector<std::string> unresolved_forwards;
  std::vector<IngestError> errors;

  bool empty() const { return records_read == 0 && errors.empty() && unresolved_forwards.empty(); }

  json to_json() const {
    json errs = json::array();
    for (const auto& e : errors) errs.push_back({{"line", e.line}, {"message_id", e.message_id}, {"reason", e.reason}});
    return {{"records_read", records_read},
            {"messages_added", messages_added},
            {"forwards_resolved", forwards_resolved},
            {"unresolved_forwards", unresolved_forwards},
            {"errors", errs}};
  }
};

class TelegraphGraph {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  TelegraphGraph() = default;

  // Validates and indexes a node set. `message_channels[i]` is the channel id of `messages[i]`.
  static TelegraphGraph assemble(std::vector<ChannelNode> channels, std::vector<MessageNode> messages,
                                 std::vector<std::string> message_channels) {
    if (messages.size() != message_channels.size())
      throw InvalidArgument("assemble: one channel id required per message");
    TelegraphGraph g;
    std::vector<std::size_t> order(messages.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return messages[a].message_id < messages[b].message_id; });

    std::sort(channels.begin(), channels.end(),
              [](const ChannelNode& a, const ChannelNode& b) { return a.channel_id < b.channel_id; });
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (i > 0 && channels[i].channel_id == channels[i - 1].channel_id)
        throw InvalidArgument("duplicate channel_id '" + channels[i].channel_id + "'");
      g.channel_index_.emplace(channels[i].channel_id, i);
    }
    g.channels_ = std::move(channels);

    g.messages_.reserve(messages.size());
    g.message_channel_.reserve(messages.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto& m = messages[order[k]];
      if (k > 0 && m.message_id == g.messages_.back().message_id)
        throw InvalidArgument("duplicate message_id '" + m.message_id + "'");
      auto ch = g.channel_index_.find(message_channels[order[k]]);
      if (ch == g.channel_index_.end())
        throw InvalidArgument("message '" + m.message_id + "' refers to unknown channel '" +
                              message_channels[order[k]] + "'");
      g.message_index_.emplace(m.message_id, k);
      g.message_channel_.push_back(ch->second);
      g.messages_.push_back(std::move(m));
    }

    g.members_.assign(g.channels_.size(), {});
    for (std::size_t i = 0; i < g.messages_.size(); ++i) g.members_[g.message_channel_[i]].push_back(i);

    g.origin_.assign(g.messages_.size(), npos);
    g.duplicates_.assign(g.messages_.size(), {});
    for (std::size_t i = 0; i < g.messages_.size(); ++i) {
      const auto& origin = g.messages_[i].origin_message_id;
      if (!origin) continue;
      auto it = g.message_index_.find(*origin);
      if (it == g.message_index_.end())
        throw InvalidArgument("message '" + g.messages_[i].message_id + "' has unknown origin '" + *origin + "'");
      if (it->second == i) throw InvalidArgument("message '" + *origin + "' is its own origin");
      if (g.messages_[it->second].origin_message_id)
        throw InvalidArgument("message '" + g.messages_[i].message_id + "' points at duplicate '" + *origin + "'");
      g.origin_[i] = it->second;
      g.duplicates_[it->second].push_back(i);
      ++g.num_forwarded_;
    }
    return g;
  }

  const std::vector<ChannelNode>& channels() const { return channels_; }
  const std::vector<MessageNode>& messages() const { return messages_; }
  std::size_t num_channels() const { return channels_.size(); }
  std::size_t num_messages() const { return messages_.size(); }
  std::size_t num_forwarded_edges() const { return num_forwarded_; }
  std::size_t num_edges() const { return messages_.size() + num_forwarded_; }
  bool empty() const { return channels_.empty() && messages_.empty(); }

  std::size_t channel_index(std::string_view id) const {
    auto it = channel_index_.find(std::string(id));
    return it == channel_index_.end() ? npos : it->second;
  }
  std::size_t message_index(std::string_view id) const {
    auto it = message_index_.find(std::string(id));
    return it == message_index_.end() ? npos : it->second;
  }

  const ChannelNode& channel(std::string_view id) const {
    auto i = channel_index(id);
    if (i == npos) throw LookupError("unknown channel '" + std::string(id) + "'");
    return channels_[i];
  }
  const MessageNode& message(std::string_view id) const {
    auto i = message_index(id);
    if (i == npos) throw LookupError("unknown message '" + std::string(id) + "'");
    return messages_[i];
  }

  bool contains(const NodeRef& ref) const {
    return ref.type == NodeType::Channel ? channel_index(ref.id) != npos : message_index(ref.id) != npos;
  }

  // Index-level topology.
  std::size_t channel_of(std::size_t message) const { return message_channel_[message]; }
  const std::vector<std::size_t>& members(std::size_t channel) const { return members_[channel]; }
  std::size_t origin_of(std::size_t message) const { return origin_[message]; }
  const std::vector<std::size_t>& duplicates_of(std::size_t message) const { return duplicates_[message]; }

  // All stored edges in canonical order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t i = 0; i < messages_.size(); ++i) {
      NodeRef src{NodeType::Message, messages_[i].message_id};
      out.push_back({src, EdgeKind::IsPartOf, {NodeType::Channel, channels_[message_channel_[i]].channel_id}});
      if (origin_[i] != npos)
        out.push_back({src, EdgeKind::Forwarded, {NodeType::Message, messages_[origin_[i]].message_id}});
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const TelegraphGraph& a, const TelegraphGraph& b) {
    return a.channels_ == b.channels_ && a.messages_ == b.messages_ && a.message_channel_ == b.message_channel_;
  }

 private:
  std::vector<ChannelNode> channels_;
  std::vector<MessageNode> messages_;
  std::unordered_map<std::string, std::size_t> channel_index_;
  std::unordered_map<std::string, std::size_t> message_index_;
  std::vector<std::size_t> message_channel_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> origin_;
  std::vector<std::vector<std::size_t>> duplicates_;
  std::size_t num_forwarded_ = 0;
};

struct BuildResult {
  TelegraphGraph graph;
  IngestReport report;
};

namespace detail {

inline std::string id_field(const json& obj, const char* key, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw InvalidArgument(std::string("missing field '") + key + "'");
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw InvalidArgument(std::string("field '") + key + "' must be a string or integer");
}

inline std::string text_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw InvalidArgument(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

inline std::uint64_t count_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer()) {
    auto v = it->get<std::int64_t>();
    if (v < 0) throw InvalidArgument(std::string("field '") + key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  throw InvalidArgument(std::string("field '") + key + "' must be a non-negative integer");
}

}  // namespace detail

// Parses one export line. Unknown keys are ignored.
inline IngestRecord parse_ingest_record(const json& obj) {
  if (!obj.is_object()) throw InvalidArgument("record is not an object");
  IngestRecord r;
  r.message_id = detail::id_field(obj, "message_id", true);
  r.channel_id = detail::id_field(obj, "channel_id", true);
  r.text = detail::text_field(obj, "text");
  r.view_count = detail::count_field(obj, "view_count");
  if (auto it = obj.find("posted_at"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw InvalidArgument("field 'posted_at' must be an integer timestamp");
    r.posted_at = it->get<std::int64_t>();
  }
  auto fwd = detail::id_field(obj, "forwarded_from_message_id", false);
  if (!fwd.empty()) r.forwarded_from_message_id = fwd;
  r.channel_name = detail::text_field(obj, "channel_name");
  r.channel_description = detail::text_field(obj, "channel_description");
  r.subscriber_count = detail::count_field(obj, "subscriber_count");
  if (r.message_id.empty()) throw InvalidArgument("empty message_id");
  if (r.channel_id.empty()) throw InvalidArgument("empty channel_id");
  return r;
}

inline json to_json(const IngestRecord& r) {
  json j = {{"message_id", r.message_id}, {"channel_id", r.channel_id}, {"text", r.text},
            {"view_count", r.view_count}, {"posted_at", r.posted_at}};
  if (r.forwarded_from_message_id) j["forwarded_from_message_id"] = *r.forwarded_from_message_id;
  j["channel_name"] = r.channel_name;
  j["channel_description"] = r.channel_description;
  j["subscriber_count"] = r.subscriber_count;
  return j;
}

// Builds the graph from normalized records. `lines[i]`, when given, is the source line of records[i].
//
// Forwarded records become duplicates whose origin is the transitive root of the forward chain.
// Forwards that do not resolve (missing target or a cycle) leave the message as an original.
inline BuildResult build_graph(std::span<const IngestRecord> records, std::span<const std::size_t> lines = {}) {
  BuildResult result;
  auto& report = result.report;
  report.records_read = records.size();

  std::vector<const IngestRecord*> accepted;
  std::vector<std::size_t> accepted_lines;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::size_t line = i < lines.size() ? lines[i] : 0;
    if (r.message_id.empty() || r.channel_id.empty()) {
      report.errors.push_back({line, r.message_id, "message_id and channel_id are required"});
      continue;
    }
    if (by_id.count(r.message_id)) {
      report.errors.push_back({line, r.message_id, "duplicate message_id; first occurrence kept"});
      continue;
    }
    by_id.emplace(r.message_id, accepted.size());
    accepted.push_back(&r);
    accepted_lines.push_back(line);
  }

  // root[i]: index of the root original, or i itself when the record is an original.
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> root(accepted.size(), kUnset);
  std::vector<bool> unresolved(accepted.size(), false);
  std::vector<std::size_t> path;
  std::vector<std::size_t> on_path(accepted.size(), kUnset);
  for (std::size_t start = 0; start < accepted.size(); ++start) {
    if (root[start] != kUnset) continue;
    path.clear();
    std::size_t cur = start;
    std::size_t found = kUnset;
    while (true) {
      if (root[cur] != kUnset) {
        found = root[cur];
        break;
      }
      if (on_path[cur] != kUnset) {
        // Cycle: every member becomes an unresolved original; the entry point is the root for the prefix.
        const std::size_t cycle_start = on_path[cur];
        for (std::size_t k = cycle_start; k < path.size(); ++k) {
          root[path[k]] = path[k];
          unresolved[path[k]] = true;
          on_path[path[k]] = kUnset;
        }
        found = cur;
        path.resize(cycle_start);
        break;
      }
      on_path[cur] = path.size();
      path.push_back(cur);
      const auto& fwd = accepted[cur]->forwarded_from_message_id;
      if (!fwd) {
        root[cur] = cur;
        found = cur;
        on_path[cur] = kUnset;
        path.pop_back();
        break;
      }
      auto it = by_id.find(*fwd);
      if (it == by_id.end()) {
        root[cur] = cur;
        unresolved[cur] = true;
        found = cur;
        on_path[cur] = kUnset;
        path.pop_back();
        break;
      }
      cur = it->second;
    }
    for (auto p : path) {
      root[p] = found;
      on_path[p] = kUnset;
    }
  }

  std::unordered_map<std::string, ChannelNode> channels;
  std::vector<std::string> channel_order;
  std::vector<MessageNode> messages;
  std::vector<std::string> message_channels;
  messages.reserve(accepted.size());
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    const auto& r = *accepted[i];
    if (!channels.count(r.channel_id)) {
      channels.emplace(r.channel_id, ChannelNode{r.channel_id, r.channel_name, r.channel_description, r.subscriber_count});
      channel_order.push_back(r.channel_id);
    }
    MessageNode m{r.message_id, r.text, r.view_count, r.posted_at, std::nullopt};
    if (root[i] != i) {
      m.origin_message_id = accepted[root[i]]->message_id;
      ++report.forwards_resolved;
    }
    if (unresolved[i]) report.unresolved_forwards.push_back(r.message_id);
    messages.push_back(std::move(m));
    message_channels.push_back(r.channel_id);
  }
  report.messages_added = messages.size();

  std::vector<ChannelNode> channel_list;
  channel_list.reserve(channel_order.size());
  for (const auto& id : channel_order) channel_list.push_back(std::move(channels[id]));
  result.graph = TelegraphGraph::assemble(std::move(channel_list), std::move(messages), std::move(message_channels));
  return result;
}

// Parses a line-delimited export and builds the graph; malformed lines land in the report.
inline BuildResult build_graph_from_jsonl(std::string_view content) {
  std::vector<IngestRecord> records;
  std::vector<std::size_t> lines;
  std::vector<IngestError> parse_errors;
  std::size_t total = 0;
  io::for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    ++total;
    try {
      auto obj = json::parse(line);
      records.push_back(parse_ingest_record(obj));
      lines.push_back(line_no);
    } catch (const std::exception& e) {
      parse_errors.push_back({line_no, {}, std::string("malformed record: ") + e.what()});
    }
  });
  auto result = build_graph(records, lines);
  result.report.records_read = total;
  result.report.errors.insert(result.report.errors.end(), parse_errors.begin(), parse_errors.end());
  std::stable_sort(result.report.errors.begin(), result.report.errors.end(),
                   [](const IngestError& a, const IngestError& b) { return a.line < b.line; });
  return result;
}

// Adjacent nodes along edges of `kind`, sorted by id.
inline std::vector<NodeRef> neighbors(const TelegraphGraph& g, const NodeRef& node, EdgeKind kind, Direction dir) {
  std::vector<NodeRef> out;
  bool want_out = dir != Direction::In;
  bool want_in = dir != Direction::Out;
  if (node.type == NodeType::Channel) {
    auto c = g.channel_index(node.id);
    if (c == TelegraphGraph::npos) throw LookupError("unknown channel '" + node.id + "'");
    if (kind == EdgeKind::IsPartOf && want_in)
      for (auto m : g.members(c)) out.push_back({NodeType::Message, g.messages()[m].message_id});
  } else {
    auto m = g.message_index(node.id);
    if (m == TelegraphGraph::npos) throw LookupError("unknown message '" + node.id + "'");
    if (kind == EdgeKind::IsPartOf) {
      if (want_out) out.push_back({NodeType::Channel, g.channels()[g.channel_of(m)].channel_id});
    } else {
      if (want_out && g.origin_of(m) != TelegraphGraph::npos)
        out.push_back({NodeType::Message, g.messages()[g.origin_of(m)].message_id});
      if (want_in)
        for (auto d : g.duplicates_of(m)) out.push_back({NodeType::Message, g.messages()[d].message_id});
    }
  }
  std::sort(out.begin(), out.end(), [](const NodeRef& a, const NodeRef& b) { return a.id < b.id; });
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot persistence: channels.jsonl, messages.jsonl, edges.jsonl and manifest.json.

inline constexpr std::string_view kGraphFormat = "telegraph-graph/1";

struct SnapshotFiles {
  std::string channels;
  std::string messages;
  std::string edges;
  std::string manifest;
};

inline SnapshotFiles serialize_graph(const TelegraphGraph& g) {
  SnapshotFiles f;
  for (const auto& c : g.channels()) {
    json j = {{"channel_id", c.channel_id}, {"name", c.name}, {"description", c.description},
              {"subscriber_count", c.subscriber_count}};
    f.channels += j.dump();
    f.channels += '\n';
  }
  for (const auto& m : g.messages()) {
    json j = {{"message_id", m.message_id}, {"text", m.text}, {"view_count", m.view_count},
              {"posted_at", m.posted_at}};
    if (m.origin_message_id) j["origin_message_id"] = *m.origin_message_id;
    f.messages += j.dump();
    f.messages += '\n';
  }
  for (const auto& e : g.edges()) {
    json j = {{"source", e.source.id}, {"source_type", to_string(e.source.type)}, {"kind", to_string(e.kind)},
              {"target", e.target.id}, {"target_type", to_string(e.target.type)}};
    f.edges += j.dump();
    f.edges += '\n';
  }
  json manifest = {{"format", kGraphFormat},
                   {"channels", g.num_channels()},
                   {"messages", g.num_messages()},
                   {"edges", {{"IS_PART_OF", g.num_messages()}, {"FORWARDED", g.num_forwarded_edges()}}},
                   {"content_hash", io::sha256_hex(f.channels + f.messages + f.edges)}};
  f.manifest = manifest.dump(2) + "\n";
  return f;
}

inline void save_graph(const TelegraphGraph& g, const std::filesystem::path& dir) {
  auto f = serialize_graph(g);
  io::write_file(dir / "channels.jsonl", f.channels);
  io::write_file(dir / "messages.jsonl", f.messages);
  io::write_file(dir / "edges.jsonl", f.edges);
  io::write_file(dir / "manifest.json", f.manifest);
}

inline TelegraphGraph load_graph(const std::filesystem::path& dir) {
  auto channels_txt = io::read_file(dir / "channels.jsonl");
  auto messages_txt = io::read_file(dir / "messages.jsonl");
  auto edges_txt = io::read_file(dir / "edges.jsonl");
  auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw PersistenceError(manifest_path.string(), e.what());
  }
  if (manifest.value("format", "") != kGraphFormat)
    throw PersistenceError(manifest_path.string(), "unsupported snapshot format");
  if (manifest.value("content_hash", "") != io::sha256_hex(channels_txt + messages_txt + edges_txt))
    throw PersistenceError(dir.string(), "content hash mismatch");

  auto parse_lines = [&](const std::string& content, const std::filesystem::path& path, auto&& fn) {
    io::for_each_line(content, [&](std::size_t line_no, std::string_view line) {
      try {
        fn(json::parse(line));
      } catch (const std::exception& e) {
        throw PersistenceError(path.string(), "line " + std::to_string(line_no) + ": " + e.what());
      }
    });
  };

  std::vector<ChannelNode> channels;
  parse_lines(channels_txt, dir / "channels.jsonl", [&](const json& j) {
    channels.push_back({j.at("channel_id").get<std::string>(), j.at("name").get<std::string>(),
                        j.at("description").get<std::string>(), j.at("subscriber_count").get<std::uint64_t>()});
  });
  std::vector<MessageNode> messages;
  std::unordered_map<std::string, std::size_t> msg_pos;
  parse_lines(messages_txt, dir / "messages.jsonl", [&](const json& j) {
    MessageNode m{j.at("message_id").get<std::string>(), j.at("text").get<std::string>(),
                  j.at("view_count").get<std::uint64_t>(), j.at("posted_at").get<std::int64_t>(), std::nullopt};
    if (j.contains("origin_message_id")) m.origin_message_id = j["origin_message_id"].get<std::string>();
    msg_pos.emplace(m.message_id, messages.size());
    messages.push_back(std::move(m));
  });
  std::vector<std::string> membership(messages.size());
  std::vector<std::string> forwarded(messages.size());
  parse_lines(edges_txt, dir / "edges.jsonl", [&](const json& j) {
    auto kind = parse_edge_kind(j.at("kind").get<std::string>());
    auto src = j.at("source").get<std::string>();
    auto it = msg_pos.find(src);
    if (parse_node_type(j.at("source_type").get<std::string>()) != NodeType::Message || it == msg_pos.end())
      throw InvalidArgument("edge source '" + src + "' is not a stored message");
    auto& slot = kind == EdgeKind::IsPartOf ? membership[it->second] : forwarded[it->second];
    if (!slot.empty()) throw InvalidArgument("message '" + src + "' has more than one " + std::string(to_string(kind)));
    slot = j.at("target").get<std::string>();
  });
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (membership[i].empty())
      throw PersistenceError(dir.string(), "message '" + messages[i].message_id + "' has no IS_PART_OF edge");
    if (forwarded[i] != messages[i].origin_message_id.value_or(""))
      throw PersistenceError(dir.string(), "FORWARDED edge of '" + messages[i].message_id + "' disagrees with its origin");
  }
  try {
    auto g = TelegraphGraph::assemble(std::move(channels), std::move(messages), std::move(membership));
    if (manifest.value("messages", std::size_t{0}) != g.num_messages() ||
        manifest.value("channels", std::size_t{0}) != g.num_channels())
      throw PersistenceError(manifest_path.string(), "node counts disagree with manifest");
    return g;
  } catch (const InvalidArgument& e) {
    throw PersistenceError(dir.string(), e.what());
  }
}

inline TelegraphGraph persist_roundtrip(const TelegraphGraph& g, const std::filesystem::path& dir) {
  save_graph(g, dir);
  return load_graph(dir);
}

}  // namespace telegraph
