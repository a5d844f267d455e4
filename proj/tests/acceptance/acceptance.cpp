// Acceptance checks. One PASS/FAIL line per criterion; nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "grad_cases.hpp"
#include "oracles.hpp"
#include "telegraph/centrality.hpp"
#include "telegraph/experiments.hpp"
#include "telegraph/metrics.hpp"
#include "telegraph/nn.hpp"
#include "telegraph/pipeline.hpp"
#include "telegraph/rng.hpp"
#include "telegraph/synthetic.hpp"
#include "telegraph/weak_label.hpp"

namespace {

using namespace telegraph;
namespace fs = std::filesystem;
namespace oracle = telegraph::testing;
namespace ex = telegraph::experiments;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      if (!ok) detail << "; ";
      else detail.str("");
      ok = false;
      detail << what;
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.ok = false;
    o.detail.str("");
    o.detail << "exception: " << e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0 && secs > time_limit_s) {
    std::ostringstream s;
    s << "runtime " << secs << "s over the " << time_limit_s << "s budget";
    o.require(false, s.str());
  }
  if (!o.ok) ++failures;
  std::printf("%s  %-28s %7.1fs  %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), secs, o.detail.str().c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("telegraph-accept-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

json fixture_pipeline_json() {
  return json::parse(R"({
    "messages": "messages.jsonl",
    "claims": "claims.jsonl",
    "workdir": "work",
    "embedding": {"mode": "deterministic_test", "dimension": 32, "seed": 1},
    "threshold": 0.7,
    "model": {"num_layers": 2, "aggregator": "lstm", "hidden_dim": 16, "fanout": 10, "seed": 3},
    "train": {"epochs": 5, "batch_size": 16, "seed": 3},
    "centrality": {"top_k": 5, "betweenness": true}
  })");
}

pipeline::PipelineConfig prepare_fixture(const fs::path& dir) {
  auto fx = synthetic::make_fixture({});
  io::write_file(dir / "messages.jsonl", fx.messages_jsonl());
  io::write_file(dir / "claims.jsonl", fx.claims_jsonl());
  return pipeline::PipelineConfig::from_json(fixture_pipeline_json(), dir);
}

// Every file under `root` except the per-stage manifests, which carry wall-clock timestamps.
std::map<std::string, std::string> artifact_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), root);
    if (rel.filename() == "manifest.json" && rel.parent_path().parent_path().empty()) continue;
    out[rel.string()] = io::read_file(e.path());
  }
  return out;
}

void gradients(Outcome& o) {
  constexpr std::uint64_t kSeeds = 20;
  double worst_affine = 0, worst_bce = 0, worst_lstm = 0, worst_model = 0;
  std::size_t corrupted_caught = 0;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    auto a = oracle::affine_chain_case(s, 1e-6);
    auto b = oracle::bce_case(s, 1e-6);
    auto l = oracle::lstm_case(s, 1e-4);
    auto mm = oracle::sage_case(s, sage::Aggregator::Mean, 1e-4);
    auto ml = oracle::sage_case(s, sage::Aggregator::Lstm, 1e-4);
    worst_affine = std::max(worst_affine, a.max_relative_error);
    worst_bce = std::max(worst_bce, b.max_relative_error);
    worst_lstm = std::max(worst_lstm, l.max_relative_error);
    worst_model = std::max({worst_model, mm.max_relative_error, ml.max_relative_error});
    o.require(a.passed, "affine seed " + std::to_string(s) + ": " + a.worst);
    o.require(b.passed, "bce seed " + std::to_string(s) + ": " + b.worst);
    o.require(l.passed, "lstm seed " + std::to_string(s) + ": " + l.worst);
    o.require(mm.passed, "model(mean) seed " + std::to_string(s) + ": " + mm.worst);
    o.require(ml.passed, "model(lstm) seed " + std::to_string(s) + ": " + ml.worst);
    corrupted_caught += !oracle::corrupted_case(s).passed;
  }
  o.require(corrupted_caught == kSeeds, "the checker missed a corrupted gradient");
  if (o.ok)
    o.detail << kSeeds << " seeds; max rel err affine " << worst_affine << ", bce " << worst_bce << ", lstm "
             << worst_lstm << ", model " << worst_model;
}

void centrality_oracles(Outcome& o) {
  std::size_t graphs = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    SplitMix64 rng(seed);
    std::size_t n = 5 + rng.below(46);
    double p = 0.05 + 0.3 * rng.uniform();
    auto edges = oracle::random_graph(n, p, seed);
    auto expected = oracle::betweenness_oracle(n, edges);
    auto got = centrality::betweenness(centrality::Adjacency::from_edges(n, edges));
    for (std::size_t v = 0; v < n; ++v) worst = std::max(worst, std::abs(got[v] - expected[v]));
    ++graphs;
  }
  o.require(worst <= 1e-9, "betweenness deviates from the oracle by " + std::to_string(worst));

  std::size_t nodes_checked = 0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    auto b = synthetic::make_benchmark([&] {
      auto c = synthetic::planted_community(seed);
      c.num_channels = 20;
      c.messages_per_channel = 5;
      return c;
    }());
    auto s = centrality::forward_degree_centrality(b.graph);
    o.require(s.has_in_out(), "forward-degree has no in/out split");
    for (std::size_t v = 0; v < s.score.size(); ++v) {
      ++nodes_checked;
      if (s.score[v] != s.in_score[v] + s.out_score[v])
        o.require(false, "in + out != total at node " + std::to_string(v) + " of graph " + std::to_string(seed));
    }
  }
  if (o.ok)
    o.detail << graphs << " graphs, max |diff| " << worst << "; in+out=total on " << nodes_checked << " nodes";
}

void metric_oracles(Outcome& o) {
  double m = metrics::mcc({2, 1, 3, 0});
  o.require(std::abs(m - 0.7071) <= 1e-4, "MCC(2,1,3,0) = " + fmt(m));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_ece = 0.0, worst_f1 = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 300;
    std::vector<double> conf(n);
    std::vector<int> correct(n);
    double sc = 0, sa = 0;
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = u(rng);
      correct[i] = u(rng) < 0.5 + 0.4 * (conf[i] - 0.5);
      sc += conf[i];
      sa += correct[i];
    }
    double expected = std::abs(sa / n - sc / n);
    worst_ece = std::max(worst_ece, std::abs(metrics::ece(conf, correct, 1) - expected));

    std::vector<int> pred(n), label(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = u(rng) < 0.5;
      label[i] = u(rng) < 0.5;
    }
    auto r = metrics::class_prf1(pred, label);
    for (const auto* cs : {&r.factual, &r.misinformation}) {
      double hm = cs->precision + cs->recall > 0 ? 2 * cs->precision * cs->recall / (cs->precision + cs->recall) : 0.0;
      worst_f1 = std::max(worst_f1, std::abs(cs->f1 - hm));
    }
  }
  o.require(worst_ece <= 1e-12, "ECE(B=1) off by " + std::to_string(worst_ece));
  o.require(worst_f1 <= 1e-12, "F1 differs from the harmonic mean by " + std::to_string(worst_f1));
  if (o.ok) o.detail << "MCC " << fmt(m) << "; ECE(B=1) max diff " << worst_ece << "; F1 max diff " << worst_f1;
}

void hypothesis_graph_vs_text(Outcome& o) {
  auto s = ex::default_settings();
  auto planted = ex::graph_vs_text(synthetic::planted_community, s);
  auto control = ex::graph_vs_text(synthetic::text_only_control, s, "text_control");
  auto cfg = synthetic::planted_community(1);
  o.require(cfg.num_channels == 200 && cfg.num_channels * cfg.messages_per_channel == 2000, "benchmark size");
  o.require(planted.runs.size() == 5, "expected 5 seeds");
  o.require(planted.mean_gap() >= 0.15, "planted gap " + fmt(planted.mean_gap()) + " < 0.15");
  o.require(control.mean_gap() <= 0.05, "control gap " + fmt(control.mean_gap()) + " > 0.05");
  if (o.ok)
    o.detail << "graph " << fmt(planted.mean_mcc_a()) << " vs text " << fmt(planted.mean_mcc_b()) << " (gap "
             << fmt(planted.mean_gap()) << "); control gap " << fmt(control.mean_gap());
}

void hypothesis_counts(Outcome& o) {
  auto c = ex::counts_ablation(synthetic::view_count_benchmark, ex::default_settings());
  o.require(c.runs.size() == 5, "expected 5 seeds");
  o.require(c.mean_gap() >= 0.1, "counts gain " + fmt(c.mean_gap()) + " < 0.1");
  if (o.ok)
    o.detail << "with counts " << fmt(c.mean_mcc_a()) << " vs without " << fmt(c.mean_mcc_b()) << " (gain "
             << fmt(c.mean_gap()) << ")";
}

void hypothesis_noise(Outcome& o) {
  auto s = ex::default_settings();
  o.require(s.noise_rate == 0.15, "noise rate");
  auto c = ex::label_noise(synthetic::planted_community, s);
  double drop = c.mean_gap();
  o.require(drop <= 0.15, "MCC drop " + fmt(drop) + " > 0.15");
  o.require(c.mean_ece_b() <= 0.1, "noisy ECE " + fmt(c.mean_ece_b()) + " > 0.1");
  if (o.ok)
    o.detail << "clean " << fmt(c.mean_mcc_a()) << " vs noisy " << fmt(c.mean_mcc_b()) << " (drop " << fmt(drop)
             << "); ECE clean " << fmt(c.mean_ece_a()) << ", noisy " << fmt(c.mean_ece_b());
}

void weak_labeling(Outcome& o) {
  ScratchDir dir("weak");
  auto cfg = prepare_fixture(dir.path());
  pipeline::Pipeline p(cfg);
  for (auto s : {pipeline::Stage::Ingest, pipeline::Stage::BuildKb, pipeline::Stage::Embed}) p.run(s);
  auto g = load_graph(p.stage_dir(pipeline::Stage::Ingest) / "graph");
  auto kb = load_claims_from_string(io::read_file(p.stage_dir(pipeline::Stage::BuildKb) / "claims.jsonl")).kb;
  auto emb = EmbeddingStore::parse(io::read_file(p.stage_dir(pipeline::Stage::Embed) / "embeddings.jsonl"));
  std::vector<std::string> ids;
  for (const auto& m : g.messages()) ids.push_back(m.message_id);

  using Key = std::tuple<std::string, std::string>;
  std::set<Key> previous;
  std::size_t previous_size = 0;
  bool first = true;
  std::ostringstream sizes;
  for (double th : {0.9, 0.8, 0.7, 0.6, 0.5}) {
    std::set<Key> brute;
    for (const auto& m : g.messages())
      for (const auto& c : kb.claims()) {
        const auto& a = emb.messages.at(m.message_id).values;
        const auto& b = emb.claims.at(c.claim_id).values;
        double dot = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          dot += a[k] * b[k];
          na += a[k] * a[k];
          nb += b[k] * b[k];
        }
        if (dot / std::sqrt(na * nb) >= th) brute.emplace(m.message_id, c.claim_id);
      }
    auto r = match_messages(ids, kb, emb, {th, 0});
    std::set<Key> got;
    for (const auto& q : r.pairs) got.emplace(q.message_id, q.claim_id);
    o.require(got == brute, "match set differs from brute force at threshold " + fmt(th));
    o.require(got.size() == r.pairs.size(), "duplicate pairs at threshold " + fmt(th));
    if (!first) {
      o.require(std::includes(got.begin(), got.end(), previous.begin(), previous.end()),
                "lowering the threshold to " + fmt(th) + " dropped a pair");
      o.require(got.size() >= previous_size, "pair count shrank at threshold " + fmt(th));
    }
    sizes << (first ? "" : "/") << got.size();
    previous = got;
    previous_size = got.size();
    first = false;
  }

  // 868 adjudicated pairs, 589 confirmed
  std::vector<MessageClaimPair> pairs;
  std::vector<Decision> decisions;
  for (std::size_t i = 0; i < 868; ++i) {
    auto mid = "m" + std::to_string(i);
    auto pid = make_pair_id(mid, "c" + std::to_string(i % 31));
    pairs.push_back({pid, mid, "c" + std::to_string(i % 31), 0.75, Label::Misinformation, std::nullopt,
                     PairStatus::Pending});
    decisions.push_back({pid, i < 589 ? std::optional<Label>(Label::Misinformation) : std::nullopt});
  }
  auto applied = apply_annotations(pairs, decisions);
  double wp = weak_precision(applied.pairs);
  o.require(std::abs(wp - 0.6786) <= 1e-4, "weak precision " + fmt(wp));
  if (o.ok) o.detail << "pairs at 0.9/0.8/0.7/0.6/0.5: " << sizes.str() << "; weak precision " << fmt(wp);
}

void lr_schedule(Outcome& o) {
  nn::OptimizerConfig c;
  o.require(nn::scheduled_lr(c, 0) == 1e-3, "lr(0) = " + std::to_string(nn::scheduled_lr(c, 0)));
  for (std::size_t k : {100u, 101u, 250u, 100000u})
    o.require(nn::scheduled_lr(c, k) == 1e-5, "lr(" + std::to_string(k) + ") != 1e-5");
  for (std::size_t k = 1; k < 300; ++k)
    o.require(nn::scheduled_lr(c, k) <= nn::scheduled_lr(c, k - 1), "lr increases at " + std::to_string(k));
  nn::OptimizerState st(c);
  o.require(st.current_lr() == 1e-3, "optimizer starts off the schedule");
  for (int i = 0; i < 120; ++i) st.advance_schedule();
  o.require(st.current_lr() == 1e-5, "optimizer does not settle at 1e-5");
  if (o.ok) o.detail << "lr(0)=" << nn::scheduled_lr(c, 0) << " lr(50)=" << nn::scheduled_lr(c, 50) << " lr(100)=" << nn::scheduled_lr(c, 100);
}

void pipeline_determinism(Outcome& o) {
  ScratchDir a("run-a"), b("run-b");
  auto ca = prepare_fixture(a.path()), cb = prepare_fixture(b.path());
  pipeline::Pipeline pa(ca), pb(cb);
  pa.run_all();
  pb.run_all();
  auto fa = artifact_bytes(ca.workdir), fb = artifact_bytes(cb.workdir);
  o.require(!fa.empty(), "no artifacts produced");
  for (const auto& [rel, bytes] : fa) {
    auto it = fb.find(rel);
    if (it == fb.end()) o.require(false, rel + " missing from the second run");
    else if (it->second != bytes) o.require(false, rel + " differs");
  }
  o.require(fa.size() == fb.size(), "runs produced different file sets");
  if (o.ok) o.detail << fa.size() << " artifact files byte-identical across two runs";
}

}  // namespace

int main() {
  criterion("gradient-correctness", 60, gradients);
  criterion("centrality-oracles", 60, centrality_oracles);
  criterion("metric-oracles", 10, metric_oracles);
  criterion("hypothesis-graph-vs-text", 600, hypothesis_graph_vs_text);
  criterion("hypothesis-view-counts", 600, hypothesis_counts);
  criterion("hypothesis-label-noise", 0, hypothesis_noise);
  criterion("weak-labeling", 0, weak_labeling);
  criterion("lr-schedule", 0, lr_schedule);
  criterion("pipeline-determinism", 0, pipeline_determinism);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
