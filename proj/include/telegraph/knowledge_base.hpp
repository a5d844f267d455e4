#pragma once

// Fact-check and newspaper claims used as matching targets for weak supervision.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "telegraph/error.hpp"
#include "telegraph/io.hpp"
#include "telegraph/labels.hpp"

namespace telegraph {

enum class SourceKind { FactCheck, Newspaper };

inline std::string_view to_string(SourceKind k) { return k == SourceKind::FactCheck ? "fact_check" : "newspaper"; }

inline SourceKind parse_source_kind(std::string_view s) {
  if (s == "fact_check") return SourceKind::FactCheck;
  if (s == "newspaper") return SourceKind::Newspaper;
  throw InvalidArgument("unknown source_kind '" + std::string(s) + "'");
}

struct Claim {
  std::string claim_id;
  std::string text;
  Label verdict = Label::Factual;  // factual or misinformation only
  std::string source_name;
  SourceKind source_kind = SourceKind::FactCheck;
  std::optional<std::string> url;
  std::optional<std::int64_t> published_at;

  friend bool operator==(const Claim&, const Claim&) = default;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  // Adds a claim; returns false (and keeps the first) for a repeated claim_id or exact-text duplicate.
  bool add(Claim c) {
    if (c.text.empty()) throw InvalidArgument("claim text must be non-empty");
    if (!is_binary(c.verdict)) throw InvalidArgument("claim verdict must be factual or misinformation");
    if (index_.count(c.claim_id) || texts_.count(c.text)) return false;
    index_.emplace(c.claim_id, claims_.size());
    texts_.insert(c.text);
    ++per_source_[c.source_name];
    claims_.push_back(std::move(c));
    return true;
  }

  const std::vector<Claim>& claims() const { return claims_; }
  std::size_t size() const { return claims_.size(); }
  bool empty() const { return claims_.empty(); }
  const std::map<std::string, std::size_t>& per_source() const { return per_source_; }
  bool contains_text(const std::string& text) const { return texts_.count(text) > 0; }
  bool contains_id(const std::string& id) const { return index_.count(id) > 0; }

  const Claim& claim(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw LookupError("unknown claim '" + id + "'");
    return claims_[it->second];
  }

 private:
  std::vector<Claim> claims_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_set<std::string> texts_;
  std::map<std::string, std::size_t> per_source_;
};

struct ClaimLoadError {
  std::size_t line = 0;
  std::string reason;
};

struct ClaimLoadResult {
  KnowledgeBase kb;
  std::vector<ClaimLoadError> errors;
  std::size_t duplicates = 0;  // well-formed lines collapsed into an earlier claim
  bool empty_warning() const { return kb.empty(); }
};

// Id derived from the text when a record carries none, stable under reordering.
inline std::string derive_claim_id(const std::string& text) { return "c" + io::sha256_hex(text).substr(0, 16); }

// Parses one claim record. Newspaper claims are factual; fact-checks must carry an explicit verdict.
inline Claim parse_claim(const json& j) {
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw InvalidArgument(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  Claim c;
  c.text = str("text").value_or("");
  if (c.text.empty()) throw InvalidArgument("missing or empty 'text'");
  auto kind = str("source_kind");
  if (!kind) throw InvalidArgument("missing 'source_kind'");
  c.source_kind = parse_source_kind(*kind);
  c.source_name = str("source_name").value_or("");
  if (c.source_kind == SourceKind::Newspaper) {
    c.verdict = Label::Factual;
  } else {
    auto verdict = str("verdict");
    if (!verdict) throw InvalidArgument("fact-check record without 'verdict'");
    c.verdict = parse_label(*verdict);
    if (!is_binary(c.verdict)) throw InvalidArgument("verdict must be factual or misinformation");
  }
  c.url = str("url");
  if (auto it = j.find("published_at"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw InvalidArgument("field 'published_at' must be an integer timestamp");
    c.published_at = it->get<std::int64_t>();
  }
  auto it = j.find("claim_id");
  if (it != j.end() && !it->is_null()) {
    if (it->is_string()) c.claim_id = it->get<std::string>();
    else if (it->is_number_integer()) c.claim_id = std::to_string(it->get<std::int64_t>());
    else throw InvalidArgument("field 'claim_id' must be a string or integer");
  }
  if (c.claim_id.empty()) c.claim_id = derive_claim_id(c.text);
  return c;
}

inline json to_json(const Claim& c) {
  json j = {{"claim_id", c.claim_id}, {"text", c.text}, {"verdict", to_string(c.verdict)},
            {"source_name", c.source_name}, {"source_kind", to_string(c.source_kind)}};
  if (c.url) j["url"] = *c.url;
  if (c.published_at) j["published_at"] = *c.published_at;
  return j;
}

inline ClaimLoadResult load_claims_from_string(std::string_view content) {
  ClaimLoadResult r;
  io::for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    try {
      auto c = parse_claim(json::parse(line));
      if (r.kb.contains_id(c.claim_id) && !r.kb.contains_text(c.text)) {
        r.errors.push_back({line_no, "duplicate claim_id '" + c.claim_id + "'"});
        return;
      }
      if (!r.kb.add(std::move(c))) ++r.duplicates;
    } catch (const std::exception& e) {
      r.errors.push_back({line_no, e.what()});
    }
  });
  return r;
}

inline ClaimLoadResult load_claims(const std::filesystem::path& path) {
  return load_claims_from_string(io::read_file(path));
}

inline std::string serialize_claims(const KnowledgeBase& kb) {
  std::string out;
  for (const auto& c : kb.claims()) {
    out += to_json(c).dump();
    out += '\n';
  }
  return out;
}

struct KbStats {
  std::size_t total = 0;
  std::size_t factual = 0;
  std::size_t misinformation = 0;
  std::size_t fact_check = 0;
  std::size_t newspaper = 0;
  std::map<std::string, std::size_t> per_source;

  json to_json() const {
    return {{"total", total},           {"factual", factual},     {"misinformation", misinformation},
            {"fact_check", fact_check}, {"newspaper", newspaper}, {"per_source", per_source}};
  }
};

inline KbStats kb_stats(const KnowledgeBase& kb) {
  KbStats s;
  s.total = kb.size();
  for (const auto& c : kb.claims()) {
    (c.verdict == Label::Factual ? s.factual : s.misinformation)++;
    (c.source_kind == SourceKind::FactCheck ? s.fact_check : s.newspaper)++;
  }
  s.per_source = kb.per_source();
  return s;
}

}  // namespace telegraph
