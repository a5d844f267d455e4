#pragma once

// Binary classification metrics. Factual is the positive class throughout.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "telegraph/error.hpp"
#include "telegraph/io.hpp"

namespace telegraph::metrics {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Predictions and labels are 1 for factual, 0 for misinformation.
inline Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool p = predictions[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p && !y) ++c.fp;
    else if (!p && !y) ++c.tn;
    else ++c.fn;
  }
  return c;
}

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when a denominator was zero and the value was defined as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

inline ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassScores s;
  if (tp + fp == 0) s.precision_undefined = true;
  else s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn == 0) s.recall_undefined = true;
  else s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (s.precision + s.recall == 0.0) s.f1_undefined = true;
  else s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

struct ClassReport {
  ClassScores factual;
  ClassScores misinformation;
  Confusion counts;
};

inline ClassReport class_prf1(const Confusion& c) {
  ClassReport r;
  r.counts = c;
  r.factual = class_scores(c.tp, c.fp, c.fn);
  r.misinformation = class_scores(c.tn, c.fn, c.fp);
  return r;
}

inline ClassReport class_prf1(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw InvalidArgument("class_prf1: empty input");
  return class_prf1(confusion(predictions, labels));
}

// Matthews correlation; 0 when any marginal is empty.
inline double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return std::clamp((tp * tn - fp * fn) / std::sqrt(denom), -1.0, 1.0);
}

inline constexpr std::size_t kDefaultBins = 10;

// Equal-width bins over [0, 1]; a confidence on an edge falls in the higher bin, 1.0 in the top bin.
inline std::size_t confidence_bin(double confidence, std::size_t bins) {
  auto b = static_cast<std::size_t>(std::floor(confidence * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

// sum_b (n_b / N) |acc(b) - conf(b)|
inline double ece(std::span<const double> confidences, std::span<const int> correct, std::size_t bins = kDefaultBins) {
  if (confidences.size() != correct.size())
    throw ShapeError("ece: " + std::to_string(confidences.size()) + " confidences vs " +
                     std::to_string(correct.size()) + " flags");
  if (confidences.empty()) throw InvalidArgument("ece: empty input");
  if (bins == 0) throw InvalidArgument("ece: at least one bin required");
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("ece: confidence outside [0, 1]");
    auto b = confidence_bin(c, bins);
    conf_sum[b] += c;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(confidences.size());
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
  }
  return std::clamp(total, 0.0, 1.0);
}

struct MetricsReport {
  ClassReport classes;
  double mcc = 0.0;
  double ece = 0.0;
  std::size_t bins = kDefaultBins;

  // Flat record with fixed key names.
  json to_json() const {
    const auto& f = classes.factual;
    const auto& m = classes.misinformation;
    std::vector<std::string> flags;
    auto flag = [&](bool on, const char* name) {
      if (on) flags.emplace_back(name);
    };
    flag(f.precision_undefined, "factual_precision_undefined");
    flag(f.recall_undefined, "factual_recall_undefined");
    flag(f.f1_undefined, "factual_f1_undefined");
    flag(m.precision_undefined, "misinformation_precision_undefined");
    flag(m.recall_undefined, "misinformation_recall_undefined");
    flag(m.f1_undefined, "misinformation_f1_undefined");
    Confusion c = classes.counts;
    flag(c.tp + c.fp == 0 || c.tp + c.fn == 0 || c.tn + c.fp == 0 || c.tn + c.fn == 0, "mcc_zero_denominator");
    return {{"factual_precision", f.precision},
            {"factual_recall", f.recall},
            {"factual_f1", f.f1},
            {"misinformation_precision", m.precision},
            {"misinformation_recall", m.recall},
            {"misinformation_f1", m.f1},
            {"mcc", mcc},
            {"ece", ece},
            {"ece_bins", bins},
            {"tp", c.tp},
            {"fp", c.fp},
            {"tn", c.tn},
            {"fn", c.fn},
            {"n", c.total()},
            {"flags", flags}};
  }
};

// Full report from p(factual) and binary labels (1 = factual), decision threshold 0.5.
inline MetricsReport evaluate(std::span<const double> p_factual, std::span<const int> labels,
                              std::size_t bins = kDefaultBins) {
  if (p_factual.size() != labels.size())
    throw ShapeError("evaluate: " + std::to_string(p_factual.size()) + " probabilities vs " +
                     std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw InvalidArgument("evaluate: empty input");
  std::vector<int> pred(labels.size()), correct(labels.size());
  std::vector<double> conf(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pred[i] = p_factual[i] >= 0.5 ? 1 : 0;
    conf[i] = std::max(p_factual[i], 1.0 - p_factual[i]);
    correct[i] = pred[i] == (labels[i] != 0 ? 1 : 0);
  }
  MetricsReport r;
  r.classes = class_prf1(pred, labels);
  r.mcc = mcc(r.classes.counts);
  r.ece = ece(conf, correct, bins);
  r.bins = bins;
  return r;
}

}  // namespace telegraph::metrics
