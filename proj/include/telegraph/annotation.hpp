#pragma once

// Review queue over the weak pair store: listing, adjudication with an append-only audit log,
// statistics, and the JSON-over-HTTP API consumed by the review UI.
//
//   GET  /pairs?status=&page=&page_size=&min_score=&max_score=
//   POST /pairs/{id}/decision   {"decision": "factual|misinformation|other|reject", "annotator": "..."}
//   GET  /stats
//
// When TELEGRAPH_ANNOTATION_TOKEN is set every request must carry it in X-Annotation-Token.

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "telegraph/error.hpp"
#include "telegraph/graph_store.hpp"
#include "telegraph/io.hpp"
#include "telegraph/knowledge_base.hpp"
#include "telegraph/labels.hpp"
#include "telegraph/weak_label.hpp"

namespace telegraph::annotation {

namespace fs = std::filesystem;

inline constexpr std::size_t kMaxPageSize = 100;
inline constexpr const char* kTokenEnv = "TELEGRAPH_ANNOTATION_TOKEN";
inline constexpr const char* kTokenHeader = "X-Annotation-Token";

struct AnnotationDecision {
  std::string pair_id;
  std::string decision;  // factual | misinformation | other | reject
  std::string annotator;
  std::string timestamp;  // ISO 8601 UTC, filled by the service when empty

  Decision to_decision() const {
    if (decision == "reject") return {pair_id, std::nullopt};
    if (decision == "factual" || decision == "misinformation" || decision == "other")
      return {pair_id, parse_label(decision)};
    throw InvalidArgument("decision must be one of factual, misinformation, other, reject");
  }

  json to_json() const {
    return {{"pair_id", pair_id}, {"decision", decision}, {"annotator", annotator}, {"timestamp", timestamp}};
  }
  static AnnotationDecision from_json(const json& j) {
    AnnotationDecision d;
    d.pair_id = j.at("pair_id").get<std::string>();
    d.decision = j.at("decision").get<std::string>();
    d.annotator = j.value("annotator", "");
    d.timestamp = j.value("timestamp", "");
    return d;
  }
};

inline std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct PairFilter {
  std::optional<PairStatus> status = PairStatus::Pending;  // nullopt lists every status
  std::optional<double> min_score;
  std::optional<double> max_score;

  bool accepts(const MessageClaimPair& p) const {
    if (status && p.status != *status) return false;
    if (min_score && p.score < *min_score) return false;
    if (max_score && p.score > *max_score) return false;
    return true;
  }
};

struct Page {
  std::vector<json> items;
  std::size_t page = 1;
  std::size_t page_size = 0;
  std::size_t total = 0;
  std::size_t total_pages = 0;

  json to_json() const {
    return {{"page", page}, {"page_size", page_size}, {"total", total}, {"total_pages", total_pages},
            {"items", items}};
  }
};

enum class SubmitStatus { Applied, Idempotent, UnknownPair, Conflict, Invalid };

struct SubmitResult {
  SubmitStatus status = SubmitStatus::Invalid;
  std::optional<MessageClaimPair> pair;  // state after the call (current state on conflict)
  std::string message;

  int http_status() const {
    switch (status) {
      case SubmitStatus::Applied:
      case SubmitStatus::Idempotent:
        return 200;
      case SubmitStatus::UnknownPair:
        return 404;
      case SubmitStatus::Conflict:
        return 409;
      case SubmitStatus::Invalid:
        break;
    }
    return 400;
  }
};

// Texts shown next to a pair.
struct PairContext {
  std::unordered_map<std::string, std::string> message_texts;
  KnowledgeBase kb;

  static PairContext from(const TelegraphGraph& g, KnowledgeBase kb) {
    PairContext c;
    for (const auto& m : g.messages()) c.message_texts.emplace(m.message_id, m.text);
    c.kb = std::move(kb);
    return c;
  }
};

// Rebuilds the store from the seed pairs and an audit log (one applied decision per line).
inline std::vector<MessageClaimPair> replay_audit(std::vector<MessageClaimPair> seed, std::string_view audit) {
  std::vector<Decision> decisions;
  io::for_each_line(audit, [&](std::size_t, std::string_view line) {
    decisions.push_back(AnnotationDecision::from_json(json::parse(line)).to_decision());
  });
  return apply_annotations(std::move(seed), decisions).pairs;
}

class AnnotationService {
 public:
  // `dir` holds pairs.jsonl (current state) and audit.jsonl; a missing store is seeded from `seed`.
  AnnotationService(fs::path dir, std::vector<MessageClaimPair> seed, PairContext context)
      : dir_(std::move(dir)), context_(std::move(context)) {
    fs::create_directories(dir_);
    if (fs::exists(store_path())) {
      pairs_ = parse_pairs(io::read_file(store_path()));
    } else {
      pairs_ = std::move(seed);
      std::sort(pairs_.begin(), pairs_.end(), pair_order);
      io::write_file(store_path(), serialize_pairs(pairs_));
    }
    reindex();
  }

  fs::path store_path() const { return dir_ / "pairs.jsonl"; }
  fs::path audit_path() const { return dir_ / "audit.jsonl"; }

  std::vector<MessageClaimPair> pairs() const {
    std::shared_lock lock(mutex_);
    return pairs_;
  }

  // Ordered by descending score then pair id; pages are 1-based.
  Page list_pairs(const PairFilter& filter, std::size_t page, std::size_t page_size) const {
    if (page_size < 1 || page_size > kMaxPageSize)
      throw InvalidArgument("page_size must be between 1 and " + std::to_string(kMaxPageSize));
    if (page < 1) throw InvalidArgument("page must be >= 1");
    std::shared_lock lock(mutex_);
    std::vector<const MessageClaimPair*> hits;
    for (const auto& p : pairs_)
      if (filter.accepts(p)) hits.push_back(&p);
    std::sort(hits.begin(), hits.end(), [](const MessageClaimPair* a, const MessageClaimPair* b) {
      if (a->score != b->score) return a->score > b->score;
      return a->pair_id < b->pair_id;
    });
    Page out;
    out.page = page;
    out.page_size = page_size;
    out.total = hits.size();
    out.total_pages = (hits.size() + page_size - 1) / page_size;
    if (page > std::max<std::size_t>(1, out.total_pages))
      throw InvalidArgument("page " + std::to_string(page) + " out of range (" + std::to_string(out.total_pages) +
                            " pages)");
    for (std::size_t i = (page - 1) * page_size; i < hits.size() && i < page * page_size; ++i)
      out.items.push_back(view(*hits[i]));
    return out;
  }

  SubmitResult submit(AnnotationDecision d) {
    SubmitResult r;
    Decision decision;
    try {
      decision = d.to_decision();
    } catch (const Error& e) {
      r.message = e.what();
      return r;
    }
    std::unique_lock lock(mutex_);
    auto it = index_.find(d.pair_id);
    if (it == index_.end()) {
      r.status = SubmitStatus::UnknownPair;
      r.message = "unknown pair '" + d.pair_id + "'";
      return r;
    }
    auto& pair = pairs_[it->second];
    auto before = pair;
    auto outcome = apply_decision(pair, decision);
    if (outcome.idempotent) {
      r.status = SubmitStatus::Idempotent;
      r.pair = pair;
      return r;
    }
    if (!outcome.applied) {
      r.status = SubmitStatus::Conflict;
      r.pair = pair;
      r.message = outcome.reason;
      return r;
    }
    if (d.timestamp.empty()) d.timestamp = utc_now();
    try {
      io::append_line(audit_path(), d.to_json().dump());
      io::write_file(store_path(), serialize_pairs(pairs_));
    } catch (...) {
      pair = before;
      throw;
    }
    r.status = SubmitStatus::Applied;
    r.pair = pair;
    return r;
  }

  json stats() const {
    std::shared_lock lock(mutex_);
    auto c = count_pairs(pairs_);
    json j = c.to_json();
    j["strong_dataset"] = strong_dataset(pairs_).size();
    if (c.confirmed + c.rejected > 0) j["weak_precision"] = weak_precision(pairs_);
    else j["weak_precision"] = nullptr;
    return j;
  }

  json view(const MessageClaimPair& p) const {
    json j = to_json(p);
    auto mt = context_.message_texts.find(p.message_id);
    j["message_text"] = mt == context_.message_texts.end() ? "" : mt->second;
    if (context_.kb.contains_id(p.claim_id)) {
      const auto& c = context_.kb.claim(p.claim_id);
      j["claim_text"] = c.text;
      j["claim_source"] = c.source_name;
      j["claim_source_kind"] = to_string(c.source_kind);
      j["claim_verdict"] = to_string(c.verdict);
      j["claim_url"] = c.url ? json(*c.url) : json(nullptr);
    } else {
      j["claim_text"] = "";
      j["claim_source"] = "";
      j["claim_source_kind"] = nullptr;
      j["claim_verdict"] = nullptr;
      j["claim_url"] = nullptr;
    }
    return j;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < pairs_.size(); ++i) index_.emplace(pairs_[i].pair_id, i);
  }

  fs::path dir_;
  PairContext context_;
  std::vector<MessageClaimPair> pairs_;
  std::unordered_map<std::string, std::size_t> index_;
  mutable std::shared_mutex mutex_;
};

// ---------------------------------------------------------------------------
// HTTP

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t default_page_size = 20;
  std::optional<std::string> token;  // from TELEGRAPH_ANNOTATION_TOKEN when unset

  void apply_environment() {
    if (token) return;
    if (const char* t = std::getenv(kTokenEnv); t && *t) token = t;
  }
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

inline std::size_t parse_index(const std::string& s, const char* name) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument(std::string(name) + " must be an integer");
  return v;
}

inline PairFilter parse_filter(const httplib::Request& req) {
  PairFilter f;
  if (req.has_param("status")) {
    auto s = req.get_param_value("status");
    if (s.empty()) f.status = PairStatus::Pending;
    else if (s == "all") f.status.reset();
    else f.status = parse_pair_status(s);
  }
  if (req.has_param("min_score")) f.min_score = io::parse_double(req.get_param_value("min_score"));
  if (req.has_param("max_score")) f.max_score = io::parse_double(req.get_param_value("max_score"));
  return f;
}

}  // namespace detail

// Registers the three endpoints on `server`. The service must outlive the server.
inline void install_routes(httplib::Server& server, AnnotationService& service, ServerOptions options) {
  options.apply_environment();
  const auto token = options.token;
  server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", std::string("Content-Type, ") + kTokenHeader);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    if (req.method == "OPTIONS") {
      res.status = 204;
      return httplib::Server::HandlerResponse::Handled;
    }
    if (token && req.get_header_value(kTokenHeader) != *token) {
      detail::send_error(res, 401, "missing or invalid annotation token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  const std::size_t default_page_size = options.default_page_size;
  server.Get("/pairs", [&service, default_page_size](const httplib::Request& req, httplib::Response& res) {
    try {
      auto filter = detail::parse_filter(req);
      std::size_t page = req.has_param("page") ? detail::parse_index(req.get_param_value("page"), "page") : 1;
      std::size_t size = req.has_param("page_size")
                             ? detail::parse_index(req.get_param_value("page_size"), "page_size")
                             : default_page_size;
      detail::send_json(res, 200, service.list_pairs(filter, page, size).to_json());
    } catch (const Error& e) {
      detail::send_error(res, 400, e.what());
    }
  });

  server.Post(R"(/pairs/([^/]+)/decision)", [&service](const httplib::Request& req, httplib::Response& res) {
    AnnotationDecision d;
    try {
      auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string())
        throw InvalidArgument("body must be an object with a string 'decision'");
      d.pair_id = req.matches[1];
      d.decision = body["decision"].get<std::string>();
      d.annotator = body.value("annotator", "");
    } catch (const std::exception& e) {
      detail::send_error(res, 400, e.what());
      return;
    }
    try {
      auto r = service.submit(d);
      json out = {{"status", r.http_status()}};
      if (r.pair) out["pair"] = service.view(*r.pair);
      out["idempotent"] = r.status == SubmitStatus::Idempotent;
      if (!r.message.empty()) out["error"] = r.message;
      detail::send_json(res, r.http_status(), out);
    } catch (const std::exception& e) {
      detail::send_error(res, 500, e.what());
    }
  });

  server.Get("/stats", [&service](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, service.stats());
  });
}

}  // namespace telegraph::annotation
