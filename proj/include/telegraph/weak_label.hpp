#pragma once

// Weak supervision: messages inherit the verdict of every knowledge-base claim whose
// embedding similarity reaches the threshold. Human decisions later confirm or reject pairs.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "telegraph/embedder.hpp"
#include "telegraph/error.hpp"
#include "telegraph/io.hpp"
#include "telegraph/knowledge_base.hpp"
#include "telegraph/labels.hpp"

namespace telegraph {

inline constexpr double kDefaultThreshold = 0.7;

enum class PairStatus { Pending, Confirmed, Rejected };

inline std::string_view to_string(PairStatus s) {
  switch (s) {
    case PairStatus::Pending: return "pending";
    case PairStatus::Confirmed: return "confirmed";
    case PairStatus::Rejected: return "rejected";
  }
  return "pending";
}

inline PairStatus parse_pair_status(std::string_view s) {
  if (s == "pending") return PairStatus::Pending;
  if (s == "confirmed") return PairStatus::Confirmed;
  if (s == "rejected") return PairStatus::Rejected;
  throw InvalidArgument("unknown pair status '" + std::string(s) + "'");
}

struct MessageClaimPair {
  std::string pair_id;
  std::string message_id;
  std::string claim_id;
  double score = 0.0;
  Label weak_label = Label::Other;
  std::optional<Label> strong_label;
  PairStatus status = PairStatus::Pending;

  friend bool operator==(const MessageClaimPair&, const MessageClaimPair&) = default;
};

inline std::string make_pair_id(const std::string& message_id, const std::string& claim_id) {
  return "p" + io::sha256_hex(message_id + '\x1f' + claim_id).substr(0, 16);
}

inline json to_json(const MessageClaimPair& p) {
  json j = {{"pair_id", p.pair_id},   {"message_id", p.message_id},           {"claim_id", p.claim_id},
            {"score", p.score},       {"weak_label", to_string(p.weak_label)}};
  if (p.strong_label) j["strong_label"] = to_string(*p.strong_label);
  j["status"] = to_string(p.status);
  return j;
}

inline MessageClaimPair pair_from_json(const json& j) {
  MessageClaimPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.message_id = j.at("message_id").get<std::string>();
  p.claim_id = j.at("claim_id").get<std::string>();
  p.score = j.at("score").get<double>();
  p.weak_label = parse_label(j.at("weak_label").get<std::string>());
  if (j.contains("strong_label") && !j["strong_label"].is_null())
    p.strong_label = parse_label(j["strong_label"].get<std::string>());
  p.status = parse_pair_status(j.value("status", std::string("pending")));
  if (p.status == PairStatus::Confirmed && !p.strong_label)
    throw InvalidArgument("confirmed pair '" + p.pair_id + "' without strong_label");
  if (p.status == PairStatus::Rejected && p.strong_label)
    throw InvalidArgument("rejected pair '" + p.pair_id + "' carries a strong_label");
  return p;
}

inline std::string serialize_pairs(std::span<const MessageClaimPair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<MessageClaimPair> parse_pairs(std::string_view content) {
  std::vector<MessageClaimPair> out;
  io::for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    try {
      out.push_back(pair_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw InvalidArgument("pair line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

// Descending score, then message id, then claim id.
inline bool pair_order(const MessageClaimPair& a, const MessageClaimPair& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.message_id != b.message_id) return a.message_id < b.message_id;
  return a.claim_id < b.claim_id;
}

struct MatchOptions {
  double threshold = kDefaultThreshold;
  std::size_t top_k_per_claim = 0;  // 0 keeps every pair over the threshold
};

struct MatchError {
  std::string item_id;
  std::string reason;
};

struct MatchResult {
  std::vector<MessageClaimPair> pairs;
  std::vector<MatchError> errors;
};

// Exhaustive pairwise scoring. Items without an embedding are skipped and reported.
inline MatchResult match_messages(std::span<const std::string> message_ids, const KnowledgeBase& kb,
                                  const EmbeddingStore& embeddings, const MatchOptions& options = {}) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0))
    throw InvalidArgument("threshold must lie in (0, 1]");
  MatchResult result;

  std::vector<std::pair<const Claim*, const EmbeddingVector*>> claims;
  claims.reserve(kb.size());
  for (const auto& c : kb.claims()) {
    auto it = embeddings.claims.find(c.claim_id);
    if (it == embeddings.claims.end()) {
      result.errors.push_back({c.claim_id, "missing claim embedding"});
      continue;
    }
    claims.emplace_back(&c, &it->second);
  }

  for (const auto& mid : message_ids) {
    auto it = embeddings.messages.find(mid);
    if (it == embeddings.messages.end()) {
      result.errors.push_back({mid, "missing message embedding"});
      continue;
    }
    for (const auto& [claim, vec] : claims) {
      double s = cosine_similarity(it->second, *vec);
      if (s >= options.threshold)
        result.pairs.push_back({make_pair_id(mid, claim->claim_id), mid, claim->claim_id, s, claim->verdict,
                                std::nullopt, PairStatus::Pending});
    }
  }

  if (options.top_k_per_claim > 0) {
    std::map<std::string, std::vector<MessageClaimPair>> per_claim;
    for (auto& p : result.pairs) per_claim[p.claim_id].push_back(std::move(p));
    result.pairs.clear();
    for (auto& [_, v] : per_claim) {
      std::sort(v.begin(), v.end(), pair_order);
      if (v.size() > options.top_k_per_claim) v.resize(options.top_k_per_claim);
      for (auto& p : v) result.pairs.push_back(std::move(p));
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end(), pair_order);
  return result;
}

struct PairCounts {
  std::size_t total = 0;
  std::size_t pending = 0;
  std::size_t confirmed = 0;
  std::size_t rejected = 0;
  std::size_t weak_factual = 0;
  std::size_t weak_misinformation = 0;
  std::size_t weak_other = 0;
  std::size_t strong_factual = 0;
  std::size_t strong_misinformation = 0;
  std::size_t strong_other = 0;

  json to_json() const {
    return {{"total", total},
            {"pending", pending},
            {"confirmed", confirmed},
            {"rejected", rejected},
            {"weak", {{"factual", weak_factual}, {"misinformation", weak_misinformation}, {"other", weak_other}}},
            {"strong",
             {{"factual", strong_factual}, {"misinformation", strong_misinformation}, {"other", strong_other}}}};
  }
};

inline PairCounts count_pairs(std::span<const MessageClaimPair> pairs) {
  PairCounts c;
  c.total = pairs.size();
  for (const auto& p : pairs) {
    switch (p.status) {
      case PairStatus::Pending: ++c.pending; break;
      case PairStatus::Confirmed: ++c.confirmed; break;
      case PairStatus::Rejected: ++c.rejected; break;
    }
    switch (p.weak_label) {
      case Label::Factual: ++c.weak_factual; break;
      case Label::Misinformation: ++c.weak_misinformation; break;
      case Label::Other: ++c.weak_other; break;
    }
    if (p.status == PairStatus::Confirmed && p.strong_label) {
      switch (*p.strong_label) {
        case Label::Factual: ++c.strong_factual; break;
        case Label::Misinformation: ++c.strong_misinformation; break;
        case Label::Other: ++c.strong_other; break;
      }
    }
  }
  return c;
}

// confirmed / (confirmed + rejected); pending pairs are ignored.
inline double weak_precision(std::span<const MessageClaimPair> pairs) {
  std::size_t confirmed = 0, rejected = 0;
  for (const auto& p : pairs) {
    if (p.status == PairStatus::Confirmed) ++confirmed;
    else if (p.status == PairStatus::Rejected) ++rejected;
  }
  if (confirmed + rejected == 0) throw InvalidArgument("weak precision undefined: no adjudicated pairs");
  return static_cast<double>(confirmed) / static_cast<double>(confirmed + rejected);
}

// A human decision: a strong label confirms the pair, nullopt rejects it.
struct Decision {
  std::string pair_id;
  std::optional<Label> strong_label;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct DecisionOutcome {
  std::string pair_id;
  bool applied = false;
  bool idempotent = false;  // identical to the decision already recorded
  std::string reason;       // set when rejected
};

struct AnnotationResult {
  std::vector<MessageClaimPair> pairs;
  std::vector<MessageClaimPair> strong_dataset;
  std::vector<DecisionOutcome> outcomes;
};

inline bool matches_recorded(const MessageClaimPair& p, const Decision& d) {
  if (!d.strong_label) return p.status == PairStatus::Rejected;
  return p.status == PairStatus::Confirmed && p.strong_label == d.strong_label;
}

// Applies one decision in place.
inline DecisionOutcome apply_decision(MessageClaimPair& p, const Decision& d) {
  DecisionOutcome out{d.pair_id, false, false, {}};
  if (p.status != PairStatus::Pending) {
    if (matches_recorded(p, d)) {
      out.idempotent = true;
    } else {
      out.reason = "pair is already " + std::string(to_string(p.status));
    }
    return out;
  }
  if (d.strong_label) {
    p.status = PairStatus::Confirmed;
    p.strong_label = d.strong_label;
  } else {
    p.status = PairStatus::Rejected;
    p.strong_label.reset();
  }
  out.applied = true;
  return out;
}

// Confirmed pairs whose strong label is factual or misinformation.
inline std::vector<MessageClaimPair> strong_dataset(std::span<const MessageClaimPair> pairs) {
  std::vector<MessageClaimPair> out;
  for (const auto& p : pairs)
    if (p.status == PairStatus::Confirmed && p.strong_label && is_binary(*p.strong_label)) out.push_back(p);
  return out;
}

inline AnnotationResult apply_annotations(std::vector<MessageClaimPair> pairs, std::span<const Decision> decisions) {
  AnnotationResult r;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < pairs.size(); ++i) index.emplace(pairs[i].pair_id, i);
  for (const auto& d : decisions) {
    auto it = index.find(d.pair_id);
    if (it == index.end()) {
      r.outcomes.push_back({d.pair_id, false, false, "unknown pair"});
      continue;
    }
    r.outcomes.push_back(apply_decision(pairs[it->second], d));
  }
  r.strong_dataset = strong_dataset(pairs);
  r.pairs = std::move(pairs);
  return r;
}

enum class LabelSource { Weak, Strong };

struct LabeledMessage {
  std::string message_id;
  Label label = Label::Factual;

  friend bool operator==(const LabeledMessage&, const LabeledMessage&) = default;
};

// One training label per message: the highest-scoring eligible pair wins, ties broken by claim id.
// Weak: every non-rejected pair with its inherited label. Strong: confirmed pairs with their strong label.
// Messages whose winning label is `other` are dropped. Sorted by message id.
inline std::vector<LabeledMessage> training_labels(std::span<const MessageClaimPair> pairs, LabelSource source) {
  std::map<std::string, const MessageClaimPair*> best;
  for (const auto& p : pairs) {
    if (source == LabelSource::Strong && (p.status != PairStatus::Confirmed || !p.strong_label)) continue;
    if (source == LabelSource::Weak && p.status == PairStatus::Rejected) continue;
    auto [it, inserted] = best.emplace(p.message_id, &p);
    if (inserted) continue;
    const auto* cur = it->second;
    if (p.score > cur->score || (p.score == cur->score && p.claim_id < cur->claim_id)) it->second = &p;
  }
  std::vector<LabeledMessage> out;
  for (const auto& [mid, p] : best) {
    Label l = source == LabelSource::Strong ? *p->strong_label : p->weak_label;
    if (is_binary(l)) out.push_back({mid, l});
  }
  return out;
}

}  // namespace telegraph
