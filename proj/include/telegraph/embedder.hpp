#pragma once

// Embedding providers and cosine similarity.
//
// `remote` talks to an external embedding service:
//   POST {"texts": [...]}  ->  {"vectors": [[...], ...], "dimension": D}
// `deterministic_test` expands a seeded hash of the text bytes into D values.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "telegraph/error.hpp"
#include "telegraph/io.hpp"

namespace telegraph {

struct EmbeddingVector {
  std::vector<double> values;
  bool unit_norm = false;

  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline void normalize(EmbeddingVector& v) {
  double n = l2_norm(v.values);
  if (n == 0.0) return;
  for (double& x : v.values) x /= n;
  v.unit_norm = true;
}

// dot(u,v) / (|u||v|), clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine_similarity: dimension mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw InvalidArgument("cosine_similarity: undefined for a zero vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine_similarity(std::span<const double>(u.values), std::span<const double>(v.values));
}

enum class EmbeddingMode { Remote, DeterministicTest };

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 200;  // doubled after each failed attempt
};

struct EmbeddingProviderConfig {
  EmbeddingMode mode = EmbeddingMode::DeterministicTest;
  std::optional<std::string> endpoint;
  std::size_t dimension = 1024;
  std::size_t batch_size = 32;
  RetryPolicy retry;
  bool normalize = true;
  std::uint64_t seed = 0;
  std::optional<std::string> token;
  int timeout_s = 60;

  void validate() const {
    if (dimension < 2) throw InvalidArgument("embedding dimension must be >= 2");
    if (batch_size == 0) throw InvalidArgument("embedding batch size must be >= 1");
    if (retry.max_attempts < 1) throw InvalidArgument("retry max_attempts must be >= 1");
    if (mode == EmbeddingMode::Remote && (!endpoint || endpoint->empty()))
      throw InvalidArgument("remote embedding mode requires an endpoint");
  }

  // Reads TELEGRAPH_EMBEDDING_ENDPOINT and TELEGRAPH_EMBEDDING_TOKEN when set.
  void apply_environment() {
    if (const char* e = std::getenv("TELEGRAPH_EMBEDDING_ENDPOINT"); e && *e) endpoint = e;
    if (const char* t = std::getenv("TELEGRAPH_EMBEDDING_TOKEN"); t && *t) token = t;
  }

  static EmbeddingProviderConfig from_json(const json& j) {
    EmbeddingProviderConfig c;
    auto mode = j.value("mode", std::string("deterministic_test"));
    if (mode == "remote") c.mode = EmbeddingMode::Remote;
    else if (mode == "deterministic_test") c.mode = EmbeddingMode::DeterministicTest;
    else throw InvalidArgument("unknown embedding mode '" + mode + "'");
    if (j.contains("endpoint") && !j["endpoint"].is_null()) c.endpoint = j["endpoint"].get<std::string>();
    c.dimension = j.value("dimension", c.dimension);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.retry.max_attempts = j.value("max_attempts", c.retry.max_attempts);
    c.retry.backoff_ms = j.value("backoff_ms", c.retry.backoff_ms);
    c.normalize = j.value("normalize", c.normalize);
    c.seed = j.value("seed", c.seed);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    return c;
  }

  // The token is never included.
  json to_json() const {
    json j = {{"mode", mode == EmbeddingMode::Remote ? "remote" : "deterministic_test"},
              {"dimension", dimension},
              {"batch_size", batch_size},
              {"max_attempts", retry.max_attempts},
              {"backoff_ms", retry.backoff_ms},
              {"normalize", normalize},
              {"seed", seed},
              {"timeout_s", timeout_s}};
    if (endpoint) j["endpoint"] = *endpoint;
    return j;
  }
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, std::vector<std::size_t> failed)
      : Error(what), failed_indices_(std::move(failed)) {}
  const std::vector<std::size_t>& failed_indices() const { return failed_indices_; }

 private:
  std::vector<std::size_t> failed_indices_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

class DeterministicEmbedder final : public EmbeddingProvider {
 public:
  explicit DeterministicEmbedder(std::size_t dimension, bool normalize = true, std::uint64_t seed = 0)
      : dimension_(dimension), normalize_(normalize), seed_(seed) {
    if (dimension_ < 2) throw InvalidArgument("embedding dimension must be >= 2");
  }

  EmbeddingVector embed_one(std::string_view text) const {
    std::mt19937_64 rng(io::fnv1a64(text, seed_));
    EmbeddingVector v;
    v.values.resize(dimension_);
    for (auto& x : v.values) x = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;  // uniform in [-1, 1)
    if (normalize_) normalize(v);
    return v;
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

 private:
  std::size_t dimension_;
  bool normalize_;
  std::uint64_t seed_;
};

class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(EmbeddingProviderConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& url = *config_.endpoint;
    auto scheme = url.find("://");
    auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> failed;
    std::string last_error;
    httplib::Client client(host_);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    httplib::Headers headers;
    if (config_.token) headers.emplace("Authorization", "Bearer " + *config_.token);

    for (std::size_t begin = 0; begin < texts.size(); begin += config_.batch_size) {
      std::size_t end = std::min(texts.size(), begin + config_.batch_size);
      json body = {{"texts", json::array()}};
      for (std::size_t i = begin; i < end; ++i) body["texts"].push_back(texts[i]);
      const auto payload = body.dump();
      bool ok = false;
      int backoff = config_.retry.backoff_ms;
      for (int attempt = 0; attempt < config_.retry.max_attempts && !ok; ++attempt) {
        if (attempt > 0) {
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
          backoff *= 2;
        }
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
          last_error = httplib::to_string(res.error());
          continue;
        }
        if (res->status != 200) {
          last_error = "HTTP " + std::to_string(res->status);
          continue;
        }
        try {
          auto reply = json::parse(res->body);
          const auto& vectors = reply.at("vectors");
          if (vectors.size() != end - begin) throw Error("expected " + std::to_string(end - begin) + " vectors");
          if (reply.contains("dimension") && reply["dimension"].get<std::size_t>() != config_.dimension)
            throw Error("service dimension " + reply["dimension"].dump() + " != configured " +
                        std::to_string(config_.dimension));
          for (std::size_t k = 0; k < vectors.size(); ++k) {
            EmbeddingVector v{vectors[k].get<std::vector<double>>(), false};
            if (v.dimension() != config_.dimension) throw Error("vector of wrong dimension");
            if (config_.normalize) normalize(v);
            out[begin + k] = std::move(v);
          }
          ok = true;
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      if (!ok)
        for (std::size_t i = begin; i < end; ++i) failed.push_back(i);
    }
    if (!failed.empty())
      throw ProviderError("embedding service failed for " + std::to_string(failed.size()) + " texts: " + last_error,
                          std::move(failed));
    return out;
  }

 private:
  EmbeddingProviderConfig config_;
  std::string host_;
  std::string path_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config) {
  config.validate();
  if (config.mode == EmbeddingMode::Remote) return std::make_unique<RemoteEmbedder>(config);
  return std::make_unique<DeterministicEmbedder>(config.dimension, config.normalize, config.seed);
}

inline std::vector<EmbeddingVector> embed_batch(const EmbeddingProviderConfig& config,
                                                std::span<const std::string> texts) {
  if (texts.empty()) return {};
  return make_provider(config)->embed(texts);
}

// Embeddings for every node and claim, keyed by id within each kind.
struct EmbeddingStore {
  std::size_t dimension = 0;
  std::map<std::string, EmbeddingVector> messages;
  std::map<std::string, EmbeddingVector> channels;
  std::map<std::string, EmbeddingVector> claims;

  std::string serialize() const {
    std::string out;
    auto emit = [&](const char* kind, const std::map<std::string, EmbeddingVector>& m) {
      for (const auto& [id, v] : m) {
        json j = {{"kind", kind}, {"id", id}, {"vector", v.values}};
        out += j.dump();
        out += '\n';
      }
    };
    emit("channel", channels);
    emit("claim", claims);
    emit("message", messages);
    return out;
  }

  static EmbeddingStore parse(std::string_view content) {
    EmbeddingStore s;
    io::for_each_line(content, [&](std::size_t line_no, std::string_view line) {
      auto j = json::parse(line);
      auto kind = j.at("kind").get<std::string>();
      EmbeddingVector v{j.at("vector").get<std::vector<double>>(), false};
      double n = l2_norm(v.values);
      v.unit_norm = std::abs(n - 1.0) <= 1e-6;
      if (s.dimension == 0) s.dimension = v.dimension();
      if (v.dimension() != s.dimension)
        throw InvalidArgument("embedding line " + std::to_string(line_no) + " has inconsistent dimension");
      auto& target = kind == "message" ? s.messages : kind == "channel" ? s.channels : s.claims;
      if (kind != "message" && kind != "channel" && kind != "claim")
        throw InvalidArgument("unknown embedding kind '" + kind + "'");
      target.emplace(j.at("id").get<std::string>(), std::move(v));
    });
    return s;
  }
};

}  // namespace telegraph
