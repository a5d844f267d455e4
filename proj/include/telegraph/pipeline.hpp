#pragma once

// Stage orchestration over a work directory. Every stage writes workdir/<stage>/ with its
// artifacts and a manifest.json (upstream hashes, config echo, output hashes, timings).
//
//   ingest            messages export  -> ingest/graph/, ingest/report.json
//   build-kb          claims export    -> build-kb/claims.jsonl, build-kb/report.json
//   embed             ingest, build-kb -> embed/embeddings.jsonl
//   match             embed            -> match/pairs.jsonl, match/report.json
//   train             match            -> train/model.ckpt, baseline.ckpt, history.jsonl, split.json, ...
//   evaluate          train            -> evaluate/metrics.json, predictions.jsonl, statistics.{json,md}
//   centrality        ingest           -> centrality/*.jsonl, centrality/top_k.md
//   serve-annotation  match            -> annotation/pairs.jsonl, annotation/audit.jsonl

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "telegraph/annotation.hpp"
#include "telegraph/centrality.hpp"
#include "telegraph/embedder.hpp"
#include "telegraph/error.hpp"
#include "telegraph/graph_store.hpp"
#include "telegraph/io.hpp"
#include "telegraph/knowledge_base.hpp"
#include "telegraph/metrics.hpp"
#include "telegraph/sage.hpp"
#include "telegraph/weak_label.hpp"

namespace telegraph::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFormat = "telegraph-stage/1";

enum class Stage { Ingest, BuildKb, Embed, Match, Train, Evaluate, Centrality, ServeAnnotation };

inline constexpr std::array<Stage, 8> kAllStages{Stage::Ingest, Stage::BuildKb,  Stage::Embed,      Stage::Match,
                                                 Stage::Train,  Stage::Evaluate, Stage::Centrality, Stage::ServeAnnotation};

// Stages run by `all`, in order.
inline constexpr std::array<Stage, 7> kBatchStages{Stage::Ingest, Stage::BuildKb,  Stage::Embed,     Stage::Match,
                                                   Stage::Train,  Stage::Evaluate, Stage::Centrality};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::BuildKb: return "build-kb";
    case Stage::Embed: return "embed";
    case Stage::Match: return "match";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Centrality: return "centrality";
    case Stage::ServeAnnotation: return "serve-annotation";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  throw InvalidArgument("unknown stage '" + std::string(s) + "'");
}

inline std::string stage_dir_name(Stage s) { return s == Stage::ServeAnnotation ? "annotation" : std::string(to_string(s)); }

// A stage could not run; `stage` is the stage that failed.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what) : Error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

// ---------------------------------------------------------------------------
// Config

struct CentralityConfig {
  std::size_t top_k = 5;
  bool betweenness = true;
  std::size_t sample_sources = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  json to_json() const {
    return {{"top_k", top_k}, {"betweenness", betweenness}, {"sample_sources", sample_sources}, {"seed", seed},
            {"threads", threads}};
  }
  static CentralityConfig from_json(const json& j) {
    CentralityConfig c;
    c.top_k = j.value("top_k", c.top_k);
    c.betweenness = j.value("betweenness", c.betweenness);
    c.sample_sources = j.value("sample_sources", c.sample_sources);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    return c;
  }
};

struct AnnotationConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t page_size = 20;

  json to_json() const { return {{"host", host}, {"port", port}, {"page_size", page_size}}; }
  static AnnotationConfig from_json(const json& j) {
    AnnotationConfig c;
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.page_size = j.value("page_size", c.page_size);
    return c;
  }
};

struct PipelineConfig {
  fs::path messages;
  fs::path claims;
  fs::path workdir = "work";
  EmbeddingProviderConfig embedding;
  double threshold = kDefaultThreshold;
  std::size_t top_k_per_claim = 0;
  sage::ModelConfig model;
  sage::TrainConfig train;
  LabelSource label_source = LabelSource::Weak;
  bool include_counts = true;
  CentralityConfig centrality;
  AnnotationConfig annotation;

  // Paths in `j` are resolved against `base`.
  static PipelineConfig from_json(const json& j, const fs::path& base = {}) {
    if (!j.is_object()) throw InvalidArgument("pipeline config must be a JSON object");
    PipelineConfig c;
    auto path = [&](const char* key, const fs::path& fallback) -> fs::path {
      if (!j.contains(key)) return fallback;
      fs::path p = j[key].get<std::string>();
      return p.is_absolute() || base.empty() ? p : base / p;
    };
    c.messages = path("messages", {});
    c.claims = path("claims", {});
    c.workdir = path("workdir", base.empty() ? fs::path("work") : base / "work");
    if (j.contains("embedding")) c.embedding = EmbeddingProviderConfig::from_json(j["embedding"]);
    c.embedding.apply_environment();
    c.threshold = j.value("threshold", c.threshold);
    c.top_k_per_claim = j.value("top_k_per_claim", c.top_k_per_claim);
    if (j.contains("model")) c.model = sage::ModelConfig::from_json(j["model"]);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train = sage::TrainConfig::from_json(t);
      auto src = t.value("label_source", std::string("weak"));
      if (src == "weak") c.label_source = LabelSource::Weak;
      else if (src == "strong") c.label_source = LabelSource::Strong;
      else throw InvalidArgument("train.label_source must be 'weak' or 'strong'");
      c.include_counts = t.value("include_counts", c.include_counts);
    }
    if (j.contains("centrality")) c.centrality = CentralityConfig::from_json(j["centrality"]);
    if (j.contains("annotation")) c.annotation = AnnotationConfig::from_json(j["annotation"]);
    c.validate();
    return c;
  }

  static PipelineConfig load(const fs::path& file) {
    json j;
    try {
      j = json::parse(io::read_file(file));
    } catch (const json::exception& e) {
      throw InvalidArgument("config " + file.string() + ": " + e.what());
    }
    return from_json(j, file.parent_path());
  }

  void validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("threshold must lie in (0, 1]");
    embedding.validate();
    model.validate();
    train.validate();
    if (annotation.page_size < 1 || annotation.page_size > annotation::kMaxPageSize)
      throw InvalidArgument("annotation.page_size out of range");
  }

  // Startup check of the raw inputs a stage reads.
  void validate_inputs(Stage s) const {
    auto need = [&](const fs::path& p, const char* key) {
      if (p.empty()) throw StageError(s, std::string("config key '") + key + "' is not set");
      if (!fs::is_regular_file(p)) throw StageError(s, std::string(key) + " file not found: " + p.string());
    };
    if (s == Stage::Ingest) need(messages, "messages");
    if (s == Stage::BuildKb) need(claims, "claims");
  }

  json to_json() const {
    json t = train.to_json();
    t["label_source"] = label_source == LabelSource::Weak ? "weak" : "strong";
    t["include_counts"] = include_counts;
    return {{"messages", messages.string()},
            {"claims", claims.string()},
            {"workdir", workdir.string()},
            {"embedding", embedding.to_json()},
            {"threshold", threshold},
            {"top_k_per_claim", top_k_per_claim},
            {"model", model.to_json()},
            {"train", t},
            {"centrality", centrality.to_json()},
            {"annotation", annotation.to_json()}};
  }
};

// ---------------------------------------------------------------------------
// Manifests

struct StageReport {
  Stage stage = Stage::Ingest;
  fs::path dir;
  std::map<std::string, std::string> outputs;  // relative path -> sha256
  json summary = json::object();
};

class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit Pipeline(PipelineConfig config, Logger log = {}) : config_(std::move(config)), log_(std::move(log)) {}

  const PipelineConfig& config() const { return config_; }
  fs::path stage_dir(Stage s) const { return config_.workdir / stage_dir_name(s); }

  StageReport run(Stage s) {
    config_.validate_inputs(s);
    const auto started = utc_now_precise();
    const auto t0 = std::chrono::steady_clock::now();
    Ctx ctx{s, stage_dir(s), {}, json::object(), {}};
    try {
      fs::create_directories(ctx.dir);
      switch (s) {
        case Stage::Ingest: ingest(ctx); break;
        case Stage::BuildKb: build_kb(ctx); break;
        case Stage::Embed: embed(ctx); break;
        case Stage::Match: match(ctx); break;
        case Stage::Train: train(ctx); break;
        case Stage::Evaluate: evaluate(ctx); break;
        case Stage::Centrality: centrality(ctx); break;
        case Stage::ServeAnnotation: serve(ctx); break;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(s, e.what());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, started, ms);
    return {s, ctx.dir, ctx.outputs, ctx.summary};
  }

  std::vector<StageReport> run_all() {
    std::vector<StageReport> out;
    for (auto s : kBatchStages) out.push_back(run(s));
    return out;
  }

  // Opens (and seeds if needed) the annotation store without starting a server.
  annotation::AnnotationService open_annotation_service() {
    auto g = load_graph_artifact(Stage::ServeAnnotation);
    auto kb = load_kb_artifact(Stage::ServeAnnotation);
    auto seed = parse_pairs(read_upstream(Stage::ServeAnnotation, Stage::Match, "pairs.jsonl", nullptr));
    return annotation::AnnotationService(stage_dir(Stage::ServeAnnotation), std::move(seed),
                                         annotation::PairContext::from(g, std::move(kb)));
  }

  // Set by serve-annotation once the server is listening; used to stop it from another thread.
  std::function<void()> stop_server;

 private:
  struct Ctx {
    Stage stage;
    fs::path dir;
    std::map<std::string, std::string> outputs;
    json summary;
    std::map<std::string, std::string> inputs;  // relative to workdir -> sha256
  };

  static std::string utc_now_precise() { return annotation::utc_now(); }

  void log(const std::string& m) const {
    if (log_) log_(m);
  }

  void emit(Ctx& ctx, const std::string& rel, std::string_view content) {
    io::write_file(ctx.dir / rel, content);
    ctx.outputs[rel] = io::sha256_hex(content);
  }

  fs::path upstream_path(Stage producer, const std::string& rel) const { return stage_dir(producer) / rel; }

  void require(Stage consumer, Stage producer, const std::string& rel) const {
    auto p = upstream_path(producer, rel);
    if (!fs::exists(p))
      throw StageError(consumer, "missing upstream artifact " + p.string() + "; run stage '" +
                                     std::string(to_string(producer)) + "' first");
  }

  std::string read_upstream(Stage consumer, Stage producer, const std::string& rel, Ctx* ctx) const {
    require(consumer, producer, rel);
    auto content = io::read_file(upstream_path(producer, rel));
    if (ctx) ctx->inputs[stage_dir_name(producer) + "/" + rel] = io::sha256_hex(content);
    return content;
  }

  TelegraphGraph load_graph_artifact(Stage consumer, Ctx* ctx = nullptr) const {
    require(consumer, Stage::Ingest, "graph/manifest.json");
    auto dir = upstream_path(Stage::Ingest, "graph");
    auto g = load_graph(dir);
    if (ctx) ctx->inputs["ingest/graph/manifest.json"] = io::sha256_file(dir / "manifest.json");
    return g;
  }

  KnowledgeBase load_kb_artifact(Stage consumer, Ctx* ctx = nullptr) const {
    auto content = read_upstream(consumer, Stage::BuildKb, "claims.jsonl", ctx);
    auto r = load_claims_from_string(content);
    if (!r.errors.empty()) throw StageError(consumer, "build-kb/claims.jsonl is corrupt; re-run stage 'build-kb'");
    return std::move(r.kb);
  }

  EmbeddingStore load_embeddings_artifact(Stage consumer, Ctx* ctx) const {
    return EmbeddingStore::parse(read_upstream(consumer, Stage::Embed, "embeddings.jsonl", ctx));
  }

  json stage_config(Stage s) const {
    switch (s) {
      case Stage::Ingest: return {{"messages", config_.messages.string()}};
      case Stage::BuildKb: return {{"claims", config_.claims.string()}};
      case Stage::Embed: return config_.embedding.to_json();
      case Stage::Match: return {{"threshold", config_.threshold}, {"top_k_per_claim", config_.top_k_per_claim}};
      case Stage::Train:
      case Stage::Evaluate: return {{"model", config_.model.to_json()}, {"train", config_.to_json()["train"]}};
      case Stage::Centrality: return config_.centrality.to_json();
      case Stage::ServeAnnotation: return config_.annotation.to_json();
    }
    return {};
  }

  void write_manifest(const Ctx& ctx, const std::string& started, double ms) const {
    std::string joined;
    for (const auto& [k, v] : ctx.inputs) joined += k + ":" + v + "\n";
    json inputs = json::object();
    for (const auto& [k, v] : ctx.inputs) inputs[k] = v;
    json outputs = json::object();
    for (const auto& [k, v] : ctx.outputs) outputs[k] = v;
    json m = {{"format", kManifestFormat},
              {"stage", to_string(ctx.stage)},
              {"inputs", inputs},
              {"inputs_hash", io::sha256_hex(joined + stage_config(ctx.stage).dump())},
              {"config", stage_config(ctx.stage)},
              {"outputs", outputs},
              {"summary", ctx.summary},
              {"started_at", started},
              {"finished_at", utc_now_precise()},
              {"duration_ms", ms}};
    io::write_file(ctx.dir / "manifest.json", m.dump(2) + "\n");
  }

  // --- stages ----------------------------------------------------------------

  void ingest(Ctx& ctx) {
    auto content = io::read_file(config_.messages);
    ctx.inputs["messages"] = io::sha256_hex(content);
    auto built = build_graph_from_jsonl(content);
    auto files = serialize_graph(built.graph);
    fs::create_directories(ctx.dir / "graph");
    emit(ctx, "graph/channels.jsonl", files.channels);
    emit(ctx, "graph/messages.jsonl", files.messages);
    emit(ctx, "graph/edges.jsonl", files.edges);
    emit(ctx, "graph/manifest.json", files.manifest);
    emit(ctx, "report.json", built.report.to_json().dump(2) + "\n");
    ctx.summary = {{"channels", built.graph.num_channels()},
                   {"messages", built.graph.num_messages()},
                   {"forwarded_edges", built.graph.num_forwarded_edges()},
                   {"errors", built.report.errors.size()},
                   {"unresolved_forwards", built.report.unresolved_forwards.size()}};
    log("ingest: " + ctx.summary.dump());
  }

  void build_kb(Ctx& ctx) {
    auto content = io::read_file(config_.claims);
    ctx.inputs["claims"] = io::sha256_hex(content);
    auto r = load_claims_from_string(content);
    emit(ctx, "claims.jsonl", serialize_claims(r.kb));
    json errs = json::array();
    for (const auto& e : r.errors) errs.push_back({{"line", e.line}, {"reason", e.reason}});
    json report = {{"stats", kb_stats(r.kb).to_json()}, {"duplicates", r.duplicates}, {"errors", errs},
                   {"empty", r.empty_warning()}};
    emit(ctx, "report.json", report.dump(2) + "\n");
    ctx.summary = {{"claims", r.kb.size()}, {"duplicates", r.duplicates}, {"errors", r.errors.size()}};
    if (r.empty_warning()) log("build-kb: warning: knowledge base is empty");
    log("build-kb: " + ctx.summary.dump());
  }

  static std::string channel_text(const ChannelNode& c) {
    if (c.description.empty()) return c.name.empty() ? c.channel_id : c.name;
    return c.name + "\n" + c.description;
  }

  void embed(Ctx& ctx) {
    auto g = load_graph_artifact(Stage::Embed, &ctx);
    auto kb = load_kb_artifact(Stage::Embed, &ctx);
    // Unique texts, embedded once each in sorted order.
    std::set<std::string> unique;
    for (const auto& m : g.messages()) unique.insert(m.text);
    for (const auto& c : g.channels()) unique.insert(channel_text(c));
    for (const auto& c : kb.claims()) unique.insert(c.text);
    std::vector<std::string> texts(unique.begin(), unique.end());
    auto provider = make_provider(config_.embedding);
    log("embed: " + std::to_string(texts.size()) + " unique texts");
    std::vector<EmbeddingVector> vectors;
    if (!texts.empty()) vectors = provider->embed(texts);
    if (vectors.size() != texts.size()) throw Error("provider returned " + std::to_string(vectors.size()) + " vectors");
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < texts.size(); ++i) at.emplace(texts[i], i);
    EmbeddingStore store;
    store.dimension = config_.embedding.dimension;
    for (const auto& m : g.messages()) store.messages[m.message_id] = vectors[at.at(m.text)];
    for (const auto& c : g.channels()) store.channels[c.channel_id] = vectors[at.at(channel_text(c))];
    for (const auto& c : kb.claims()) store.claims[c.claim_id] = vectors[at.at(c.text)];
    emit(ctx, "embeddings.jsonl", store.serialize());
    ctx.summary = {{"dimension", store.dimension},
                   {"messages", store.messages.size()},
                   {"channels", store.channels.size()},
                   {"claims", store.claims.size()},
                   {"unique_texts", texts.size()}};
  }

  void match(Ctx& ctx) {
    auto g = load_graph_artifact(Stage::Match, &ctx);
    auto kb = load_kb_artifact(Stage::Match, &ctx);
    auto emb = load_embeddings_artifact(Stage::Match, &ctx);
    std::vector<std::string> ids;
    for (const auto& m : g.messages()) ids.push_back(m.message_id);
    auto r = match_messages(ids, kb, emb, {config_.threshold, config_.top_k_per_claim});
    emit(ctx, "pairs.jsonl", serialize_pairs(r.pairs));
    json errs = json::array();
    for (const auto& e : r.errors) errs.push_back({{"id", e.item_id}, {"reason", e.reason}});
    auto counts = count_pairs(r.pairs);
    emit(ctx, "report.json", json{{"threshold", config_.threshold}, {"counts", counts.to_json()}, {"errors", errs}}.dump(2) + "\n");
    ctx.summary = {{"pairs", r.pairs.size()}, {"errors", r.errors.size()}};
    log("match: " + ctx.summary.dump());
  }

  std::vector<MessageClaimPair> label_pairs(Stage consumer, Ctx* ctx) const {
    if (config_.label_source == LabelSource::Strong) {
      auto p = upstream_path(Stage::ServeAnnotation, "pairs.jsonl");
      if (!fs::exists(p))
        throw StageError(consumer, "label_source=strong needs " + p.string() +
                                       "; run stage 'serve-annotation' and adjudicate pairs first");
      return parse_pairs(read_upstream(consumer, Stage::ServeAnnotation, "pairs.jsonl", ctx));
    }
    return parse_pairs(read_upstream(consumer, Stage::Match, "pairs.jsonl", ctx));
  }

  void train(Ctx& ctx) {
    auto g = load_graph_artifact(Stage::Train, &ctx);
    auto emb = load_embeddings_artifact(Stage::Train, &ctx);
    auto pairs = label_pairs(Stage::Train, &ctx);
    auto labels = training_labels(pairs, config_.label_source);
    std::string labels_out;
    for (const auto& l : labels) labels_out += json{{"message_id", l.message_id}, {"label", to_string(l.label)}}.dump() + "\n";
    emit(ctx, "labels.jsonl", labels_out);
    if (labels.empty()) throw Error("no binary training labels; check the match stage output or the threshold");

    auto features = sage::build_node_features(g, emb, config_.include_counts);
    auto split = sage::make_split(g, sage::resolve_examples(g, labels), config_.train);
    log("train: " + std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
        std::to_string(split.test.size()) + " train/val/test messages");
    auto r = sage::train_model_on_split(g, features, split, config_.model, config_.train);
    auto b = sage::train_text_baseline_on_split(features, split, config_.train, config_.model.seed);
    emit(ctx, "model.ckpt", r.model.serialize());
    emit(ctx, "baseline.ckpt", b.model.serialize());
    emit(ctx, "history.jsonl", sage::history_to_jsonl(r.history));
    emit(ctx, "baseline_history.jsonl", sage::history_to_jsonl(b.history));
    emit(ctx, "split.json", sage::split_to_json(g, split).dump() + "\n");
    json metrics = {{"graph", r.test_metrics ? r.test_metrics->to_json() : json(nullptr)},
                    {"text_baseline", b.test_metrics ? b.test_metrics->to_json() : json(nullptr)},
                    {"selected_epoch", r.selected_epoch},
                    {"baseline_selected_epoch", b.selected_epoch}};
    emit(ctx, "metrics.json", metrics.dump(2) + "\n");
    ctx.summary = {{"labels", labels.size()},
                   {"train", split.train.size()},
                   {"val", split.val.size()},
                   {"test", split.test.size()},
                   {"final_loss", r.history.empty() ? 0.0 : r.history.back().loss}};
  }

  void evaluate(Ctx& ctx) {
    auto g = load_graph_artifact(Stage::Evaluate, &ctx);
    auto emb = load_embeddings_artifact(Stage::Evaluate, &ctx);
    auto model = sage::SageModel::deserialize(read_upstream(Stage::Evaluate, Stage::Train, "model.ckpt", &ctx));
    auto baseline = sage::TextBaseline::deserialize(read_upstream(Stage::Evaluate, Stage::Train, "baseline.ckpt", &ctx));
    auto split_json = json::parse(read_upstream(Stage::Evaluate, Stage::Train, "split.json", &ctx));
    std::map<std::string, Label> label_of;
    io::for_each_line(read_upstream(Stage::Evaluate, Stage::Train, "labels.jsonl", &ctx),
                      [&](std::size_t, std::string_view line) {
                        auto j = json::parse(line);
                        label_of[j.at("message_id").get<std::string>()] = parse_label(j.at("label").get<std::string>());
                      });
    auto features = sage::build_node_features(g, emb, model.has_counts());
    std::vector<sage::Example> test;
    for (const auto& id : split_json.at("test")) {
      auto mid = id.get<std::string>();
      auto idx = g.message_index(mid);
      if (idx == TelegraphGraph::npos || !label_of.count(mid))
        throw StageError(Stage::Evaluate, "train/split.json references unknown message '" + mid + "'; re-run 'train'");
      test.push_back({idx, label_of[mid] == Label::Factual ? 1 : 0});
    }
    json metrics = json::object();
    std::string predictions;
    if (!test.empty()) {
      const auto mg = sage::ModelGraph::from(g);
      auto gm = sage::evaluate_model(model, mg, features, test);
      auto bm = sage::evaluate_baseline(baseline, features, test);
      metrics = {{"graph", gm.to_json()}, {"text_baseline", bm.to_json()}, {"test_size", test.size()}};
      std::vector<std::size_t> targets;
      for (const auto& e : test) targets.push_back(e.message);
      auto logits = sage::eval_logits(model, mg, features, test);
      auto pb = baseline.predict(features, test);
      for (std::size_t i = 0; i < test.size(); ++i) {
        json row = {{"message_id", g.messages()[test[i].message].message_id},
                    {"label", test[i].label ? "factual" : "misinformation"},
                    {"p_factual", nn::sigmoid(logits[i])},
                    {"p_factual_text_baseline", pb[i]}};
        predictions += row.dump() + "\n";
      }
    } else {
      metrics = {{"graph", nullptr}, {"text_baseline", nullptr}, {"test_size", 0}};
      log("evaluate: warning: empty test split");
    }
    emit(ctx, "metrics.json", metrics.dump(2) + "\n");
    emit(ctx, "predictions.jsonl", predictions);

    auto stats = statistics(g, Stage::Evaluate, &ctx);
    emit(ctx, "statistics.json", stats.dump(2) + "\n");
    emit(ctx, "statistics.md", statistics_table(stats));
    ctx.summary = {{"test_size", test.size()}};
  }

  // Dataset statistics. Strong counts come from the annotation store when one exists.
  json statistics(const TelegraphGraph& g, Stage consumer, Ctx* ctx) const {
    auto weak = parse_pairs(read_upstream(consumer, Stage::Match, "pairs.jsonl", ctx));
    auto wc = count_pairs(weak);
    json j = {{"channels", g.num_channels()},
              {"messages", g.num_messages()},
              {"forwarded_edges", g.num_forwarded_edges()},
              {"threshold", config_.threshold},
              {"weak_pairs", wc.total},
              {"weak_factual", wc.weak_factual},
              {"weak_misinformation", wc.weak_misinformation},
              {"weak_other", wc.weak_other}};
    if (fs::exists(upstream_path(Stage::ServeAnnotation, "pairs.jsonl"))) {
      auto strong = parse_pairs(read_upstream(consumer, Stage::ServeAnnotation, "pairs.jsonl", ctx));
      auto sc = count_pairs(strong);
      j["adjudicated_pairs"] = sc.confirmed + sc.rejected;
      j["strong_pairs"] = sc.confirmed;
      j["strong_factual"] = sc.strong_factual;
      j["strong_misinformation"] = sc.strong_misinformation;
      j["strong_other"] = sc.strong_other;
      j["weak_precision"] = sc.confirmed + sc.rejected ? json(weak_precision(strong)) : json(nullptr);
    } else {
      j["adjudicated_pairs"] = 0;
      j["strong_pairs"] = nullptr;
      j["weak_precision"] = nullptr;
    }
    return j;
  }

  static std::string statistics_table(const json& s) {
    auto cell = [](const json& v) {
      if (v.is_null()) return std::string("n/a");
      if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v.get<double>());
        return std::string(buf);
      }
      return v.dump();
    };
    std::vector<std::pair<const char*, const char*>> rows{
        {"# Telegram channels", "channels"},
        {"# Telegram messages", "messages"},
        {"# forwarded messages", "forwarded_edges"},
        {"Similarity threshold", "threshold"},
        {"# weakly linked message-claim pairs", "weak_pairs"},
        {"# weak pairs in the factual class", "weak_factual"},
        {"# weak pairs in the misinfo. class", "weak_misinformation"},
        {"# weak pairs in the 'other' class", "weak_other"},
        {"# adjudicated pairs", "adjudicated_pairs"},
        {"# strongly linked message-claim pairs", "strong_pairs"},
        {"# strong pairs in the factual class", "strong_factual"},
        {"# strong pairs in the misinfo. class", "strong_misinformation"},
        {"Weak-label precision", "weak_precision"}};
    std::size_t w = 0;
    for (const auto& [label, _] : rows) w = std::max(w, std::string(label).size());
    std::string out = "| " + std::string("Statistic") + std::string(w - 9, ' ') + " | Value |\n";
    out += "|" + std::string(w + 2, '-') + "|-------|\n";
    for (const auto& [label, key] : rows) {
      std::string l = label;
      out += "| " + l + std::string(w - l.size(), ' ') + " | " + (s.contains(key) ? cell(s[key]) : "n/a") + " |\n";
    }
    return out;
  }

  void centrality(Ctx& ctx) {
    auto g = load_graph_artifact(Stage::Centrality, &ctx);
    const auto& cc = config_.centrality;
    auto degree = centrality::degree_centrality(g);
    auto forward = centrality::forward_degree_centrality(g);
    emit(ctx, "degree.jsonl", degree.to_jsonl());
    emit(ctx, "forward_degree.jsonl", forward.to_jsonl());
    std::string tables = "## Degree centrality\n\n" + centrality::top_k_table(g, degree, cc.top_k, "Degree") +
                         "\n## Forward-degree centrality\n\n" +
                         centrality::top_k_table(g, forward, cc.top_k, "Forward-degree");
    json timings = {{"degree_ms", degree.runtime_ms}, {"forward_degree_ms", forward.runtime_ms}};
    if (cc.betweenness) {
      centrality::BetweennessOptions opts;
      opts.sample_sources = cc.sample_sources;
      opts.seed = cc.seed;
      opts.threads = cc.threads;
      const auto ckpt = ctx.dir / "betweenness.checkpoint.json";
      auto last_log = std::chrono::steady_clock::now();
      opts.progress = [&](std::size_t done, std::size_t total) {
        auto now = std::chrono::steady_clock::now();
        if (now - last_log > std::chrono::seconds(10) || done == total) {
          last_log = now;
          log("centrality: betweenness " + std::to_string(done) + "/" + std::to_string(total) + " sources");
        }
      };
      auto t0 = std::chrono::steady_clock::now();
      centrality::BetweennessRun run(centrality::undirected_adjacency(g), opts);
      if (fs::exists(ckpt)) {
        try {
          run.load_checkpoint(ckpt);
          log("centrality: resuming betweenness at source " + std::to_string(run.done_sources()));
        } catch (const std::exception& e) {
          log(std::string("centrality: ignoring stale checkpoint: ") + e.what());
        }
      }
      const std::size_t chunk = std::max<std::size_t>(opts.block_size * std::max<std::size_t>(1, opts.threads), 1024);
      while (!run.finished()) {
        run.run(chunk);
        if (!run.finished()) run.save_checkpoint(ckpt);
      }
      fs::remove(ckpt);
      centrality::CentralityScores b{cc.sample_sources ? "betweenness_sampled" : "betweenness", "IS_PART_OF|FORWARDED",
                                     0.0, centrality::node_refs(g), run.scores(), {}, {}};
      emit(ctx, "betweenness.jsonl", b.to_jsonl());
      tables += "\n## Betweenness centrality\n\n" + centrality::top_k_table(g, b, cc.top_k, "Betweenness");
      timings["betweenness_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    emit(ctx, "top_k.md", tables);
    double mean_degree = 0.0;
    for (double v : degree.score) mean_degree += v;
    if (!degree.score.empty()) mean_degree /= static_cast<double>(degree.score.size());
    ctx.summary = {{"nodes", degree.nodes.size()}, {"mean_degree", mean_degree}, {"timings", timings}};
  }

  void serve(Ctx& ctx) {
    auto service = open_annotation_service();
    ctx.inputs["match/pairs.jsonl"] = io::sha256_file(upstream_path(Stage::Match, "pairs.jsonl"));
    httplib::Server server;
    annotation::ServerOptions opts;
    opts.host = config_.annotation.host;
    opts.port = config_.annotation.port;
    opts.default_page_size = config_.annotation.page_size;
    annotation::install_routes(server, service, opts);
    stop_server = [&server] { server.stop(); };
    log("serve-annotation: listening on http://" + opts.host + ":" + std::to_string(opts.port));
    bool ok = server.listen(opts.host, opts.port);
    stop_server = nullptr;
    if (!ok) throw Error("could not listen on " + opts.host + ":" + std::to_string(opts.port));
    ctx.summary = service.stats();
    for (const char* f : {"pairs.jsonl", "audit.jsonl"})
      if (fs::exists(ctx.dir / f)) ctx.outputs[f] = io::sha256_file(ctx.dir / f);
  }

  PipelineConfig config_;
  Logger log_;
};

}  // namespace telegraph::pipeline
