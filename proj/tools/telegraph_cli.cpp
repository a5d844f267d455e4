// telegraph: pipeline stages, the annotation server and fixture generation.
//
//   telegraph <stage> --config pipeline.json
//   telegraph all --config pipeline.json
//   telegraph make-fixture --out DIR [--seed N]
//   telegraph experiment graph-vs-text|text-control|counts|label-noise [--seeds N] [--out FILE]
//
// Exit codes: 0 success, 1 usage or config error, 2 stage failure.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "telegraph/experiments.hpp"
#include "telegraph/pipeline.hpp"
#include "telegraph/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using telegraph::json;
namespace pl = telegraph::pipeline;

constexpr int kUsage = 1;
constexpr int kStageFailure = 2;

pl::Pipeline* g_serving = nullptr;

void on_signal(int) {
  if (g_serving && g_serving->stop_server) g_serving->stop_server();
}

json fixture_config() {
  return {{"messages", "messages.jsonl"},
          {"claims", "claims.jsonl"},
          {"workdir", "work"},
          {"embedding", {{"mode", "deterministic_test"}, {"dimension", 32}, {"seed", 1}}},
          {"threshold", 0.7},
          {"model", {{"num_layers", 2}, {"aggregator", "lstm"}, {"hidden_dim", 16}, {"fanout", 10}, {"seed", 3}}},
          {"train", {{"epochs", 5}, {"batch_size", 16}, {"seed", 3}, {"label_source", "weak"}}},
          {"centrality", {{"top_k", 5}, {"betweenness", true}}},
          {"annotation", {{"port", 8080}, {"page_size", 20}}}};
}

int make_fixture(const fs::path& out, std::uint64_t seed) {
  telegraph::synthetic::FixtureConfig fc;
  fc.seed = seed;
  auto f = telegraph::synthetic::make_fixture(fc);
  fs::create_directories(out);
  telegraph::io::write_file(out / "messages.jsonl", f.messages_jsonl());
  telegraph::io::write_file(out / "claims.jsonl", f.claims_jsonl());
  telegraph::io::write_file(out / "pipeline.json", fixture_config().dump(2) + "\n");
  std::cout << "wrote " << f.messages.size() << " messages and " << f.claims.size() << " claims to " << out.string()
            << "\n";
  return 0;
}

int run_experiment(const std::string& which, std::size_t seeds, const std::string& out) {
  namespace ex = telegraph::experiments;
  namespace sy = telegraph::synthetic;
  auto s = ex::default_settings();
  s.seeds = seeds;
  ex::Comparison c;
  if (which == "graph-vs-text") {
    c = ex::graph_vs_text(sy::planted_community, s);
  } else if (which == "text-control") {
    c = ex::graph_vs_text(sy::text_only_control, s, "text_control");
  } else if (which == "counts") {
    c = ex::counts_ablation(sy::view_count_benchmark, s);
  } else {
    c = ex::label_noise(sy::planted_community, s);
  }
  auto j = c.to_json();
  if (!out.empty()) telegraph::io::write_file(out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Telegram misinformation graph toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workdir;
  std::vector<std::pair<pl::Stage, CLI::App*>> stage_cmds;
  for (auto s : pl::kAllStages) {
    auto* cmd = app.add_subcommand(std::string(pl::to_string(s)), "run the " + std::string(pl::to_string(s)) + " stage");
    cmd->add_option("--config", config_path, "pipeline config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--workdir", workdir, "override the work directory");
    stage_cmds.emplace_back(s, cmd);
  }
  auto* all = app.add_subcommand("all", "run every batch stage in order");
  all->add_option("--config", config_path, "pipeline config file")->required()->check(CLI::ExistingFile);
  all->add_option("--workdir", workdir, "override the work directory");

  std::string fixture_out;
  std::uint64_t fixture_seed = 7;
  auto* fixture = app.add_subcommand("make-fixture", "write a small messages/claims fixture and a config");
  fixture->add_option("--out", fixture_out, "output directory")->required();
  fixture->add_option("--seed", fixture_seed, "generator seed");

  std::string experiment_name;
  std::size_t experiment_seeds = 5;
  std::string experiment_out;
  auto* experiment = app.add_subcommand("experiment", "run a seed sweep on the synthetic benchmarks");
  experiment->add_option("name", experiment_name, "which comparison")
      ->required()
      ->check(CLI::IsMember({"graph-vs-text", "text-control", "counts", "label-noise"}));
  experiment->add_option("--seeds", experiment_seeds, "number of seeds")->check(CLI::PositiveNumber);
  experiment->add_option("--out", experiment_out, "also write the result JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  if (fixture->parsed()) {
    try {
      return make_fixture(fixture_out, fixture_seed);
    } catch (const std::exception& e) {
      std::cerr << "make-fixture: " << e.what() << "\n";
      return kStageFailure;
    }
  }

  if (experiment->parsed()) {
    try {
      return run_experiment(experiment_name, experiment_seeds, experiment_out);
    } catch (const std::exception& e) {
      std::cerr << "experiment: " << e.what() << "\n";
      return kStageFailure;
    }
  }

  pl::PipelineConfig config;
  try {
    config = pl::PipelineConfig::load(config_path);
    if (!workdir.empty()) config.workdir = workdir;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }

  pl::Pipeline pipeline(config, [](const std::string& m) { std::cerr << m << "\n"; });
  try {
    if (all->parsed()) {
      for (const auto& r : pipeline.run_all()) std::cout << pl::to_string(r.stage) << ": " << r.summary.dump() << "\n";
      return 0;
    }
    for (const auto& [stage, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      if (stage == pl::Stage::ServeAnnotation) {
        g_serving = &pipeline;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
      }
      auto r = pipeline.run(stage);
      std::cout << pl::to_string(r.stage) << ": " << r.summary.dump() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kUsage;
}
