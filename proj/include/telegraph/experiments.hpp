#pragma once

// Paired seed sweeps on the synthetic benchmarks:
//   graph_vs_text      graph model against the text-only baseline on one split per seed
//   counts_ablation    graph model with and without the log-count feature slot
//   label_noise        graph model trained on clean labels against one trained on flipped labels,
//                      both scored on the clean test split
// Seeds run concurrently as independent model instances.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "telegraph/io.hpp"
#include "telegraph/sage.hpp"
#include "telegraph/synthetic.hpp"

namespace telegraph::experiments {

struct Settings {
  sage::ModelConfig model;
  sage::TrainConfig train;
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency
  double noise_rate = 0.15;
};

// Used by the hypothesis checks.
inline Settings default_settings() {
  Settings s;
  s.model.num_layers = 2;
  s.model.aggregator = sage::Aggregator::Lstm;
  s.model.hidden_dim = 32;
  s.model.fanout = {10};
  s.train.epochs = 20;
  s.train.batch_size = 16;
  s.train.select_best = true;
  return s;
}

struct Arm {
  double mcc = 0.0;
  double ece = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  Arm a, b;
};

struct Comparison {
  std::string name;
  std::string a_label, b_label;
  std::vector<SeedResult> runs;

  double mean_mcc_a() const { return mean([](const SeedResult& r) { return r.a.mcc; }); }
  double mean_mcc_b() const { return mean([](const SeedResult& r) { return r.b.mcc; }); }
  double mean_ece_a() const { return mean([](const SeedResult& r) { return r.a.ece; }); }
  double mean_ece_b() const { return mean([](const SeedResult& r) { return r.b.ece; }); }
  double mean_gap() const { return mean_mcc_a() - mean_mcc_b(); }

  json to_json() const {
    json rs = json::array();
    for (const auto& r : runs)
      rs.push_back({{"seed", r.seed},
                    {a_label + "_mcc", r.a.mcc},
                    {b_label + "_mcc", r.b.mcc},
                    {a_label + "_ece", r.a.ece},
                    {b_label + "_ece", r.b.ece}});
    return {{"experiment", name},       {"runs", rs},
            {a_label + "_mcc_mean", mean_mcc_a()}, {b_label + "_mcc_mean", mean_mcc_b()},
            {a_label + "_ece_mean", mean_ece_a()}, {b_label + "_ece_mean", mean_ece_b()},
            {"mcc_gap_mean", mean_gap()}};
  }

 private:
  template <typename F>
  double mean(F f) const {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) s += f(r);
    return s / static_cast<double>(runs.size());
  }
};

using Preset = std::function<synthetic::BenchmarkConfig(std::uint64_t)>;

namespace detail {

inline Arm arm_of(const std::optional<metrics::MetricsReport>& m) {
  if (!m) throw Error("experiment run produced no test metrics; the test split is empty");
  return {m->mcc, m->ece};
}

inline std::vector<SeedResult> sweep(const Settings& s, const std::function<SeedResult(std::uint64_t)>& one) {
  std::size_t threads = s.threads ? s.threads : std::max(1u, std::thread::hardware_concurrency());
  std::vector<SeedResult> out;
  for (std::size_t begin = 0; begin < s.seeds; begin += threads) {
    std::vector<std::future<SeedResult>> jobs;
    for (std::size_t i = begin; i < std::min(s.seeds, begin + threads); ++i)
      jobs.push_back(std::async(std::launch::async, one, s.first_seed + i));
    for (auto& j : jobs) out.push_back(j.get());
  }
  return out;
}

inline std::pair<sage::ModelConfig, sage::TrainConfig> seeded(const Settings& s, std::uint64_t seed) {
  auto m = s.model;
  auto t = s.train;
  m.seed = io::mix_seed(seed, 0x30de1);
  t.seed = io::mix_seed(seed, 0x7a17);
  return {m, t};
}

}  // namespace detail

inline Comparison graph_vs_text(const Preset& preset, const Settings& s, std::string name = "graph_vs_text") {
  Comparison c{std::move(name), "graph", "text", {}};
  c.runs = detail::sweep(s, [&](std::uint64_t seed) {
    auto b = synthetic::make_benchmark(preset(seed));
    auto f = sage::build_node_features(b.graph, b.embeddings, false);
    auto [mc, tc] = detail::seeded(s, seed);
    auto split = sage::make_split(b.graph, sage::resolve_examples(b.graph, b.labels), tc);
    auto g = sage::train_model_on_split(b.graph, f, split, mc, tc);
    auto t = sage::train_text_baseline_on_split(f, split, tc, mc.seed);
    return SeedResult{seed, detail::arm_of(g.test_metrics), detail::arm_of(t.test_metrics)};
  });
  return c;
}

inline Comparison counts_ablation(const Preset& preset, const Settings& s) {
  Comparison c{"counts_ablation", "with_counts", "without_counts", {}};
  c.runs = detail::sweep(s, [&](std::uint64_t seed) {
    auto b = synthetic::make_benchmark(preset(seed));
    auto [mc, tc] = detail::seeded(s, seed);
    auto split = sage::make_split(b.graph, sage::resolve_examples(b.graph, b.labels), tc);
    auto with = sage::build_node_features(b.graph, b.embeddings, true);
    auto without = sage::build_node_features(b.graph, b.embeddings, false);
    auto rw = sage::train_model_on_split(b.graph, with, split, mc, tc);
    auto ro = sage::train_model_on_split(b.graph, without, split, mc, tc);
    return SeedResult{seed, detail::arm_of(rw.test_metrics), detail::arm_of(ro.test_metrics)};
  });
  return c;
}

// Noise is applied to the train and validation labels; the test split keeps the clean labels.
inline Comparison label_noise(const Preset& preset, const Settings& s) {
  Comparison c{"label_noise", "clean", "noisy", {}};
  c.runs = detail::sweep(s, [&](std::uint64_t seed) {
    auto b = synthetic::make_benchmark(preset(seed));
    auto f = sage::build_node_features(b.graph, b.embeddings, false);
    auto [mc, tc] = detail::seeded(s, seed);
    auto clean = sage::make_split(b.graph, sage::resolve_examples(b.graph, b.labels), tc);
    auto noisy_labels = synthetic::inject_label_noise(b.labels, s.noise_rate, io::mix_seed(seed, 0x401e));
    auto noisy_examples = sage::resolve_examples(b.graph, noisy_labels);
    std::vector<int> noisy_of(b.graph.num_messages(), 0);
    for (const auto& e : noisy_examples) noisy_of[e.message] = e.label;
    auto noisy = clean;
    for (auto* part : {&noisy.train, &noisy.val})
      for (auto& e : *part) e.label = noisy_of[e.message];
    auto rc = sage::train_model_on_split(b.graph, f, clean, mc, tc);
    auto rn = sage::train_model_on_split(b.graph, f, noisy, mc, tc);
    return SeedResult{seed, detail::arm_of(rc.test_metrics), detail::arm_of(rn.test_metrics)};
  });
  return c;
}

}  // namespace telegraph::experiments
