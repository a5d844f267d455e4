#include "telegraph/graph_store.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "telegraph/rng.hpp"
#include "test_util.hpp"

namespace {

using namespace telegraph;
using telegraph::testing::TempDir;

IngestRecord rec(std::string msg, std::string ch, std::optional<std::string> fwd = std::nullopt) {
  IngestRecord r;
  r.message_id = std::move(msg);
  r.channel_id = std::move(ch);
  r.text = "text of " + r.message_id;
  r.view_count = 10;
  r.posted_at = 1650000000;
  r.forwarded_from_message_id = std::move(fwd);
  r.channel_name = "name " + r.channel_id;
  return r;
}

std::size_t count_kind(const TelegraphGraph& g, EdgeKind k) {
  std::size_t n = 0;
  for (const auto& e : g.edges()) n += e.kind == k;
  return n;
}

// Toy graph: one original in channel A forwarded once into channel B.
TelegraphGraph toy() {
  std::vector<IngestRecord> rs{rec("orig", "A"), rec("dup", "B", "orig")};
  return build_graph(rs).graph;
}

// Random record stream with forwards to earlier, later and missing messages.
std::vector<IngestRecord> random_records(std::size_t n, std::size_t channels, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<IngestRecord> rs;
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::string> fwd;
    double u = rng.uniform();
    if (u < 0.3) fwd = "m" + std::to_string(rng.below(n));
    else if (u < 0.35) fwd = "missing" + std::to_string(i);
    rs.push_back(rec("m" + std::to_string(i), "c" + std::to_string(rng.below(channels)), fwd));
  }
  return rs;
}

TEST(BuildGraph, EmptyStream) {
  auto r = build_graph(std::span<const IngestRecord>{});
  EXPECT_TRUE(r.graph.empty());
  EXPECT_TRUE(r.report.empty());
  EXPECT_EQ(r.graph.num_edges(), 0u);

  auto j = build_graph_from_jsonl("");
  EXPECT_TRUE(j.graph.empty());
  EXPECT_TRUE(j.report.empty());
}

TEST(BuildGraph, ToyForward) {
  std::vector<IngestRecord> rs{rec("orig", "A"), rec("dup", "B", "orig")};
  auto r = build_graph(rs);
  const auto& g = r.graph;
  EXPECT_EQ(g.num_channels(), 2u);
  EXPECT_EQ(g.num_messages(), 2u);
  EXPECT_EQ(count_kind(g, EdgeKind::IsPartOf), 2u);
  EXPECT_EQ(count_kind(g, EdgeKind::Forwarded), 1u);
  EXPECT_EQ(r.report.forwards_resolved, 1u);
  EXPECT_TRUE(r.report.unresolved_forwards.empty());
  EXPECT_EQ(g.message("dup").origin_message_id, "orig");
  EXPECT_FALSE(g.message("orig").origin_message_id.has_value());
}

TEST(Neighbors, ToyGraph) {
  auto g = toy();
  auto fwd_out = neighbors(g, {NodeType::Message, "dup"}, EdgeKind::Forwarded, Direction::Out);
  ASSERT_EQ(fwd_out.size(), 1u);
  EXPECT_EQ(fwd_out[0].id, "orig");

  auto members = neighbors(g, {NodeType::Channel, "B"}, EdgeKind::IsPartOf, Direction::In);
  ASSERT_EQ(members.size(), 1u);
  EXPECT_EQ(members[0].id, "dup");

  auto fwd_in = neighbors(g, {NodeType::Message, "orig"}, EdgeKind::Forwarded, Direction::In);
  ASSERT_EQ(fwd_in.size(), 1u);
  EXPECT_EQ(fwd_in[0].id, "dup");

  auto part = neighbors(g, {NodeType::Message, "dup"}, EdgeKind::IsPartOf, Direction::Both);
  ASSERT_EQ(part.size(), 1u);
  EXPECT_EQ(part[0], (NodeRef{NodeType::Channel, "B"}));
}

TEST(Neighbors, IsolatedChannelIsEmpty) {
  auto g = TelegraphGraph::assemble({ChannelNode{"lonely", "", "", 0}}, {}, {});
  for (auto k : {EdgeKind::IsPartOf, EdgeKind::Forwarded})
    for (auto d : {Direction::In, Direction::Out, Direction::Both})
      EXPECT_TRUE(neighbors(g, {NodeType::Channel, "lonely"}, k, d).empty());
}

TEST(Neighbors, UnknownNodeThrows) {
  auto g = toy();
  EXPECT_THROW(neighbors(g, {NodeType::Message, "nope"}, EdgeKind::Forwarded, Direction::Out), LookupError);
  EXPECT_THROW(neighbors(g, {NodeType::Channel, "orig"}, EdgeKind::IsPartOf, Direction::In), LookupError);
}

TEST(Neighbors, SortedById) {
  std::vector<IngestRecord> rs{rec("z", "A"), rec("a", "A"), rec("m", "A")};
  auto g = build_graph(rs).graph;
  auto out = neighbors(g, {NodeType::Channel, "A"}, EdgeKind::IsPartOf, Direction::In);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].id, "a");
  EXPECT_EQ(out[1].id, "m");
  EXPECT_EQ(out[2].id, "z");
}

TEST(BuildGraph, ChainedForwardResolvesToRoot) {
  std::vector<IngestRecord> rs{rec("c", "C", "b"), rec("b", "B", "a"), rec("a", "A")};
  auto r = build_graph(rs);
  EXPECT_EQ(r.graph.message("b").origin_message_id, "a");
  EXPECT_EQ(r.graph.message("c").origin_message_id, "a");
  EXPECT_EQ(r.report.forwards_resolved, 2u);
  EXPECT_EQ(r.graph.duplicates_of(r.graph.message_index("a")).size(), 2u);
}

TEST(BuildGraph, UnresolvedForwardStaysOriginal) {
  std::vector<IngestRecord> rs{rec("x", "A", "gone")};
  auto r = build_graph(rs);
  EXPECT_FALSE(r.graph.message("x").is_duplicate());
  EXPECT_EQ(r.report.unresolved_forwards, std::vector<std::string>{"x"});
  EXPECT_EQ(r.report.forwards_resolved, 0u);
  EXPECT_EQ(count_kind(r.graph, EdgeKind::Forwarded), 0u);
}

TEST(BuildGraph, ForwardCycleIsLoggedAndBroken) {
  std::vector<IngestRecord> rs{rec("a", "A", "b"), rec("b", "B", "a"), rec("c", "C", "a")};
  auto r = build_graph(rs);
  EXPECT_FALSE(r.graph.message("a").is_duplicate());
  EXPECT_FALSE(r.graph.message("b").is_duplicate());
  EXPECT_EQ(r.graph.message("c").origin_message_id, "a");
  std::set<std::string> unresolved(r.report.unresolved_forwards.begin(), r.report.unresolved_forwards.end());
  EXPECT_EQ(unresolved, (std::set<std::string>{"a", "b"}));
}

TEST(BuildGraph, SelfForwardIsUnresolved) {
  std::vector<IngestRecord> rs{rec("a", "A", "a")};
  auto r = build_graph(rs);
  EXPECT_FALSE(r.graph.message("a").is_duplicate());
  EXPECT_EQ(r.report.unresolved_forwards.size(), 1u);
}

TEST(BuildGraph, DuplicateIdFirstWins) {
  auto first = rec("m", "A");
  first.text = "first";
  auto second = rec("m", "B");
  second.text = "second";
  std::vector<IngestRecord> rs{first, second};
  auto r = build_graph(rs);
  EXPECT_EQ(r.graph.num_messages(), 1u);
  EXPECT_EQ(r.graph.message("m").text, "first");
  ASSERT_EQ(r.report.errors.size(), 1u);
  EXPECT_EQ(r.report.errors[0].message_id, "m");
  EXPECT_EQ(r.graph.num_channels(), 1u);
}

TEST(BuildGraphJsonl, MalformedLinesAreReported) {
  std::string content =
      R"({"message_id":"1","channel_id":"A","text":"hi","view_count":3,"posted_at":5})" "\n"
      "not json\n"
      R"({"channel_id":"A"})" "\n"
      R"({"message_id":2,"channel_id":"A","forwarded_from_message_id":1,"unknown":true,"subscriber_count":42})" "\n"
      R"({"message_id":"3","channel_id":"B","view_count":-1})" "\n";
  auto r = build_graph_from_jsonl(content);
  EXPECT_EQ(r.report.records_read, 5u);
  EXPECT_EQ(r.graph.num_messages(), 2u);
  ASSERT_EQ(r.report.errors.size(), 3u);
  EXPECT_EQ(r.report.errors[0].line, 2u);
  EXPECT_EQ(r.report.errors[1].line, 3u);
  EXPECT_EQ(r.report.errors[2].line, 5u);
  EXPECT_EQ(r.graph.message("2").origin_message_id, "1");
  EXPECT_EQ(r.graph.message("1").view_count, 3u);
  EXPECT_EQ(r.graph.channel("A").subscriber_count, 0u);
}

TEST(BuildGraphJsonl, BlankLinesSkipped) {
  auto r = build_graph_from_jsonl("\n" R"({"message_id":"1","channel_id":"A"})" "\n\n");
  EXPECT_EQ(r.graph.num_messages(), 1u);
  EXPECT_TRUE(r.report.errors.empty());
}

TEST(Assemble, RejectsDanglingAndChainedOrigins) {
  std::vector<ChannelNode> cs{{"A", "", "", 0}};
  MessageNode a{"a", "", 0, 0, std::nullopt};
  MessageNode b{"b", "", 0, 0, std::string("a")};
  MessageNode c{"c", "", 0, 0, std::string("b")};
  EXPECT_THROW(TelegraphGraph::assemble(cs, {a, b, c}, {"A", "A", "A"}), InvalidArgument);
  EXPECT_THROW(TelegraphGraph::assemble(cs, {b}, {"A"}), InvalidArgument);
  EXPECT_THROW(TelegraphGraph::assemble(cs, {a}, {"Z"}), InvalidArgument);
  EXPECT_THROW(TelegraphGraph::assemble(cs, {a, a}, {"A", "A"}), InvalidArgument);
  EXPECT_NO_THROW(TelegraphGraph::assemble(cs, {a, b}, {"A", "A"}));
}

class RandomStream : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomStream, Invariants) {
  auto rs = random_records(300, 12, GetParam());
  auto r = build_graph(rs);
  const auto& g = r.graph;

  std::map<std::string, int> part_of;
  std::size_t forwarded = 0;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : g.edges()) {
    EXPECT_EQ(e.source.type, NodeType::Message);
    EXPECT_TRUE(g.contains(e.source));
    EXPECT_TRUE(g.contains(e.target));
    EXPECT_TRUE(seen.insert({e.source.id + "|" + std::string(to_string(e.kind)), e.target.id}).second);
    if (e.kind == EdgeKind::IsPartOf) {
      EXPECT_EQ(e.target.type, NodeType::Channel);
      ++part_of[e.source.id];
    } else {
      ++forwarded;
      EXPECT_EQ(g.message(e.source.id).origin_message_id, e.target.id);
      EXPECT_FALSE(g.message(e.target.id).is_duplicate());
    }
  }
  for (const auto& m : g.messages()) EXPECT_EQ(part_of[m.message_id], 1) << m.message_id;
  EXPECT_EQ(part_of.size(), g.num_messages());
  EXPECT_EQ(forwarded, r.report.forwards_resolved);
  EXPECT_EQ(g.num_messages(), r.report.messages_added);

  std::set<std::string> channel_ids;
  for (const auto& x : rs) channel_ids.insert(x.channel_id);
  EXPECT_EQ(g.num_channels(), channel_ids.size());

  EXPECT_EQ(build_graph(rs).graph, g);
  EXPECT_EQ(serialize_graph(build_graph(rs).graph).edges, serialize_graph(g).edges);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomStream, ::testing::Range<std::uint64_t>(1, 21));

TEST(Persistence, EmptyGraph) {
  TempDir dir;
  auto back = persist_roundtrip(TelegraphGraph{}, dir.path());
  EXPECT_TRUE(back.empty());
  auto manifest = json::parse(io::read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["format"], "telegraph-graph/1");
  EXPECT_EQ(manifest["messages"], 0);
}

TEST(Persistence, ToyGraphRoundtrip) {
  TempDir dir;
  auto g = toy();
  auto back = persist_roundtrip(g, dir.path());
  EXPECT_EQ(back, g);
  EXPECT_EQ(back.edges(), g.edges());
  std::set<std::string> ids;
  for (const auto& m : back.messages()) ids.insert(m.message_id);
  EXPECT_EQ(ids, (std::set<std::string>{"dup", "orig"}));
}

TEST(Persistence, LargeGraphByteIdentical) {
  auto rs = random_records(9800, 200, 2024);
  auto g = build_graph(rs).graph;
  ASSERT_EQ(g.num_messages() + g.num_channels(), 10000u);
  TempDir a, b;
  save_graph(g, a.path());
  save_graph(build_graph(rs).graph, b.path());
  for (const char* f : {"channels.jsonl", "messages.jsonl", "edges.jsonl", "manifest.json"})
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
  EXPECT_EQ(load_graph(a.path()), g);
}

TEST(Persistence, CanonicalOrder) {
  std::vector<IngestRecord> rs{rec("b", "Z"), rec("a", "Y", "b")};
  auto f = serialize_graph(build_graph(rs).graph);
  EXPECT_LT(f.channels.find("\"Y\""), f.channels.find("\"Z\""));
  EXPECT_LT(f.messages.find("\"a\""), f.messages.find("\"b\""));
}

TEST(Persistence, TamperedSnapshotFails) {
  TempDir dir;
  save_graph(toy(), dir.path());
  auto text = io::read_file(dir / "messages.jsonl");
  io::write_file(dir / "messages.jsonl", text + text);
  EXPECT_THROW(load_graph(dir.path()), PersistenceError);
}

TEST(Persistence, MissingDirectoryFails) {
  TempDir dir;
  try {
    load_graph(dir / "absent");
    FAIL() << "expected PersistenceError";
  } catch (const PersistenceError& e) {
    EXPECT_NE(e.path().find("absent"), std::string::npos);
  }
}

TEST(Persistence, UnwritablePathFails) {
  TempDir dir;
  io::write_file(dir / "file", "x");
  EXPECT_THROW(save_graph(toy(), dir / "file" / "sub"), PersistenceError);
}

}  // namespace
