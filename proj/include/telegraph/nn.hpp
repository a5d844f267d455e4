#pragma once

// Minimal differentiable numeric core: dense matrices, affine layers, an LSTM sequence
// aggregator, binary cross-entropy with logits, AdamW with a geometric learning-rate
// schedule, finite-difference gradient checking and a text checkpoint format.
//
// Every operator pairs a forward function with a backward function that accumulates
// parameter gradients into the owning ParamSet and returns the input gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "telegraph/error.hpp"
#include "telegraph/io.hpp"

namespace telegraph::nn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("matrix value count does not match " + shape_string());
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw ShapeError("ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const { return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

  Matrix& operator+=(const Matrix& o) {
    if (!same_shape(o)) throw ShapeError("add: " + shape_string() + " vs " + o.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c += a * b
inline void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string() + " -> " + c.shape_string());
  const std::size_t n = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_acc(a, b, c);
  return c;
}

// c += a^T * b
inline void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string() + " -> " + c.shape_string());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.row(r).data();
    const double* br = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = ar[i];
      if (ari == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += ari * br[j];
    }
  }
}

// c += a * b^T
inline void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T -> " + c.shape_string());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    double* ci = c.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      ci[j] += s;
    }
  }
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

using ParamId = std::size_t;

class ParamSet {
 public:
  ParamId add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back({name, Matrix(rows, cols), Matrix(rows, cols)});
    return params_.size() - 1;
  }

  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter& at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)) with fan_in/fan_out the matrix rows/cols;
  // parameters named "*.bias" start at zero.
  void init_glorot(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      if (p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) {
        p.value.fill(0.0);
        continue;
      }
      double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : p.value.values()) v = dist(rng);
    }
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> index_;
};

// ---------------------------------------------------------------------------
// Affine: y = x W + b, W is (in x out), b is (1 x out).

struct Affine {
  ParamId weight = 0;
  ParamId bias = 0;
  bool has_bias = true;

  static Affine create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
    Affine a;
    a.weight = ps.add(name + ".weight", in, out);
    a.has_bias = bias;
    if (bias) a.bias = ps.add(name + ".bias", 1, out);
    return a;
  }

  std::size_t in_dim(const ParamSet& ps) const { return ps[weight].value.rows(); }
  std::size_t out_dim(const ParamSet& ps) const { return ps[weight].value.cols(); }

  Matrix forward(const ParamSet& ps, const Matrix& x) const {
    const auto& w = ps[weight].value;
    if (x.cols() != w.rows())
      throw ShapeError("affine: input " + x.shape_string() + " incompatible with weight " + w.shape_string());
    Matrix y(x.rows(), w.cols());
    if (has_bias) {
      const auto& b = ps[bias].value;
      for (std::size_t r = 0; r < y.rows(); ++r) std::copy(b.values().begin(), b.values().end(), y.row(r).begin());
    }
    matmul_acc(x, w, y);
    return y;
  }

  // Accumulates dW += x^T dy, db += sum_rows dy; returns dx = dy W^T.
  Matrix backward(ParamSet& ps, const Matrix& x, const Matrix& dy) const {
    auto& w = ps[weight];
    if (dy.rows() != x.rows() || dy.cols() != w.value.cols())
      throw ShapeError("affine backward: dy " + dy.shape_string() + " for input " + x.shape_string());
    matmul_tn_acc(x, dy, w.grad);
    if (has_bias) {
      auto& bg = ps[bias].grad;
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) bg(0, c) += dy(r, c);
    }
    Matrix dx(x.rows(), x.cols());
    matmul_nt_acc(dy, w.value, dx);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Elementwise activations.

enum class Activation { Relu, Tanh, Identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "relu";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

inline Matrix activate(Activation a, const Matrix& z) {
  Matrix y = z;
  for (auto& v : y.values()) {
    if (a == Activation::Relu) v = v > 0.0 ? v : 0.0;
    else if (a == Activation::Tanh) v = std::tanh(v);
  }
  return y;
}

// dz = dy * f'(z); `y` is the forward output.
inline Matrix activate_backward(Activation a, const Matrix& y, const Matrix& dy) {
  Matrix dz = dy;
  auto& d = dz.values();
  const auto& out = y.values();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (a == Activation::Relu) d[i] = out[i] > 0.0 ? d[i] : 0.0;
    else if (a == Activation::Tanh) d[i] *= 1.0 - out[i] * out[i];
  }
  return dz;
}

// ---------------------------------------------------------------------------
// LSTM over an ordered sequence of row vectors; the aggregate is the final hidden state.
// Gate layout in the 4H columns: input, forget, candidate, output.

struct LstmCache {
  Matrix inputs;  // T x in
  Matrix gates;   // T x 4H, post-activation
  Matrix cells;   // (T+1) x H, row 0 is the zero initial state
  Matrix hidden;  // (T+1) x H
};

struct Lstm {
  ParamId input_weight = 0;   // in x 4H
  ParamId hidden_weight = 0;  // H x 4H
  ParamId bias = 0;           // 1 x 4H
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static Lstm create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t hidden) {
    Lstm l;
    l.input_weight = ps.add(name + ".input_weight", in, 4 * hidden);
    l.hidden_weight = ps.add(name + ".hidden_weight", hidden, 4 * hidden);
    l.bias = ps.add(name + ".bias", 1, 4 * hidden);
    l.input_dim = in;
    l.hidden_dim = hidden;
    return l;
  }

  // An empty sequence yields the zero vector.
  std::vector<double> forward(const ParamSet& ps, const Matrix& sequence, LstmCache* cache = nullptr) const {
    if (sequence.rows() > 0 && sequence.cols() != input_dim)
      throw ShapeError("lstm: input " + sequence.shape_string() + " but input_dim " + std::to_string(input_dim));
    const std::size_t T = sequence.rows(), H = hidden_dim;
    const auto& wx = ps[input_weight].value;
    const auto& wh = ps[hidden_weight].value;
    const auto& b = ps[bias].value;
    LstmCache local;
    LstmCache& c = cache ? *cache : local;
    c.inputs = sequence;
    c.gates = Matrix(T, 4 * H);
    c.cells = Matrix(T + 1, H);
    c.hidden = Matrix(T + 1, H);
    std::vector<double> pre(4 * H);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(b.values().begin(), b.values().end(), pre.begin());
      auto x = sequence.row(t);
      for (std::size_t k = 0; k < input_dim; ++k) {
        if (x[k] == 0.0) continue;
        auto wrow = wx.row(k);
        for (std::size_t j = 0; j < 4 * H; ++j) pre[j] += x[k] * wrow[j];
      }
      auto hprev = c.hidden.row(t);
      for (std::size_t k = 0; k < H; ++k) {
        if (hprev[k] == 0.0) continue;
        auto wrow = wh.row(k);
        for (std::size_t j = 0; j < 4 * H; ++j) pre[j] += hprev[k] * wrow[j];
      }
      auto g = c.gates.row(t);
      auto cprev = c.cells.row(t);
      auto cnext = c.cells.row(t + 1);
      auto hnext = c.hidden.row(t + 1);
      for (std::size_t j = 0; j < H; ++j) {
        g[j] = sigmoid(pre[j]);
        g[H + j] = sigmoid(pre[H + j]);
        g[2 * H + j] = std::tanh(pre[2 * H + j]);
        g[3 * H + j] = sigmoid(pre[3 * H + j]);
        cnext[j] = g[H + j] * cprev[j] + g[j] * g[2 * H + j];
        hnext[j] = g[3 * H + j] * std::tanh(cnext[j]);
      }
    }
    auto last = c.hidden.row(T);
    return {last.begin(), last.end()};
  }

  // Backpropagation through time from the gradient of the final hidden state. Returns d(sequence).
  Matrix backward(ParamSet& ps, const LstmCache& c, std::span<const double> dh_final) const {
    const std::size_t T = c.inputs.rows(), H = hidden_dim;
    if (dh_final.size() != H) throw ShapeError("lstm backward: gradient length " + std::to_string(dh_final.size()));
    Matrix dx(T, input_dim);
    if (T == 0) return dx;
    auto& wx = ps[input_weight];
    auto& wh = ps[hidden_weight];
    auto& bg = ps[bias].grad;
    std::vector<double> dh(dh_final.begin(), dh_final.end());
    std::vector<double> dc(H, 0.0);
    std::vector<double> dpre(4 * H);
    for (std::size_t step = T; step-- > 0;) {
      auto g = c.gates.row(step);
      auto cprev = c.cells.row(step);
      auto ccur = c.cells.row(step + 1);
      auto hprev = c.hidden.row(step);
      for (std::size_t j = 0; j < H; ++j) {
        double tc = std::tanh(ccur[j]);
        double i = g[j], f = g[H + j], cand = g[2 * H + j], o = g[3 * H + j];
        double dcell = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dpre[j] = dcell * cand * i * (1.0 - i);
        dpre[H + j] = dcell * cprev[j] * f * (1.0 - f);
        dpre[2 * H + j] = dcell * i * (1.0 - cand * cand);
        dpre[3 * H + j] = dh[j] * tc * o * (1.0 - o);
        dc[j] = dcell * f;
      }
      for (std::size_t j = 0; j < 4 * H; ++j) bg(0, j) += dpre[j];
      auto x = c.inputs.row(step);
      for (std::size_t k = 0; k < input_dim; ++k) {
        auto grow = wx.grad.row(k);
        auto wrow = wx.value.row(k);
        double acc = 0.0;
        for (std::size_t j = 0; j < 4 * H; ++j) {
          grow[j] += x[k] * dpre[j];
          acc += wrow[j] * dpre[j];
        }
        dx(step, k) = acc;
      }
      for (std::size_t k = 0; k < H; ++k) {
        auto grow = wh.grad.row(k);
        auto wrow = wh.value.row(k);
        double acc = 0.0;
        for (std::size_t j = 0; j < 4 * H; ++j) {
          grow[j] += hprev[k] * dpre[j];
          acc += wrow[j] * dpre[j];
        }
        dh[k] = acc;
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Binary cross-entropy on logits.

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logit
};

// mean of max(z,0) - z*y + log(1 + exp(-|z|)); gradient (sigmoid(z) - y) / n.
inline LossResult bce_with_logits(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size())
    throw ShapeError("bce_with_logits: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(labels.size()) + " labels");
  if (logits.empty()) throw InvalidArgument("bce_with_logits: empty input");
  const double n = static_cast<double>(logits.size());
  LossResult r;
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double z = logits[i], y = labels[i];
    r.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.grad[i] = (sigmoid(z) - y) / n;
  }
  r.loss /= n;
  return r;
}

// ---------------------------------------------------------------------------
// AdamW with a geometric learning-rate schedule.

struct OptimizerConfig {
  double base_lr = 1e-3;
  double end_lr = 1e-5;
  std::size_t schedule_horizon = 100;  // schedule iterations to reach end_lr
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  json to_json() const {
    return {{"base_lr", base_lr},   {"end_lr", end_lr}, {"schedule_horizon", schedule_horizon},
            {"weight_decay", weight_decay}, {"beta1", beta1}, {"beta2", beta2}, {"epsilon", epsilon}};
  }
  static OptimizerConfig from_json(const json& j) {
    OptimizerConfig c;
    c.base_lr = j.value("base_lr", c.base_lr);
    c.end_lr = j.value("end_lr", c.end_lr);
    c.schedule_horizon = j.value("schedule_horizon", c.schedule_horizon);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    return c;
  }
};

// base_lr * (end_lr / base_lr)^(k / horizon) for k < horizon, end_lr afterwards.
inline double scheduled_lr(const OptimizerConfig& c, std::size_t iteration) {
  if (c.schedule_horizon == 0 || iteration >= c.schedule_horizon) return c.end_lr;
  if (iteration == 0) return c.base_lr;
  double frac = static_cast<double>(iteration) / static_cast<double>(c.schedule_horizon);
  return c.base_lr * std::pow(c.end_lr / c.base_lr, frac);
}

class OptimizerState {
 public:
  explicit OptimizerState(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  std::size_t step_count() const { return step_; }
  std::size_t schedule_iteration() const { return schedule_iteration_; }
  double current_lr() const { return scheduled_lr(config_, schedule_iteration_); }

  // Advances the schedule by one iteration (called once per epoch by the trainers).
  void advance_schedule() { ++schedule_iteration_; }

  // One AdamW update of every parameter from its gradient buffer. Aborts untouched on a
  // non-finite gradient.
  void step(ParamSet& params) {
    for (const auto& p : params)
      if (!p.grad.all_finite()) throw NumericError("optimizer step aborted: non-finite gradient in '" + p.name + "'");
    if (first_.size() != params.size()) {
      first_.clear();
      second_.clear();
      for (const auto& p : params) {
        first_.emplace_back(p.value.rows(), p.value.cols());
        second_.emplace_back(p.value.rows(), p.value.cols());
      }
    }
    ++step_;
    const double lr = current_lr();
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    std::size_t k = 0;
    for (auto& p : params) {
      auto& w = p.value.values();
      const auto& g = p.grad.values();
      auto& m = first_[k].values();
      auto& v = second_[k].values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= lr * config_.weight_decay * w[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
      ++k;
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::size_t step_ = 0;
  std::size_t schedule_iteration_ = 0;
};

// ---------------------------------------------------------------------------
// Central-difference gradient checking.

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  bool passed = true;
  std::string worst;
};

struct GradCheckOptions {
  double step = 1e-5;
  // |analytic - numeric| / max(|analytic|, |numeric|, scale_floor): errors on gradients smaller
  // than the floor are measured relative to the floor.
  double scale_floor = 1e-4;
  std::size_t max_entries_per_param = 0;  // 0 checks every scalar
};

// `loss(params)` must return the scalar objective; `loss_and_grad(params)` must also zero and
// fill the gradient buffers.
inline GradCheckReport grad_check(const std::function<double(ParamSet&)>& loss,
                                  const std::function<void(ParamSet&)>& loss_and_grad, ParamSet& params,
                                  double tolerance, const GradCheckOptions& opts = {}) {
  loss_and_grad(params);
  std::vector<Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);
  GradCheckReport report;
  report.tolerance = tolerance;
  std::size_t k = 0;
  for (auto& p : params) {
    GradCheckEntry e{p.name, 0.0, 0.0};
    auto& vals = p.value.values();
    std::size_t stride = 1;
    if (opts.max_entries_per_param > 0 && vals.size() > opts.max_entries_per_param)
      stride = (vals.size() + opts.max_entries_per_param - 1) / opts.max_entries_per_param;
    for (std::size_t i = 0; i < vals.size(); i += stride) {
      const double orig = vals[i];
      vals[i] = orig + opts.step;
      const double fp = loss(params);
      vals[i] = orig - opts.step;
      const double fm = loss(params);
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = analytic[k].values()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opts.scale_floor});
      e.max_abs_error = std::max(e.max_abs_error, abs_err);
      e.max_relative_error = std::max(e.max_relative_error, rel);
    }
    if (e.max_relative_error > report.max_relative_error) {
      report.max_relative_error = e.max_relative_error;
      report.worst = e.name;
    }
    report.entries.push_back(e);
    ++k;
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: a versioned text format with a JSON config header and parameters sorted by name.
//
//   telegraph-params 1
//   config <json>
//   param <name> <rows> <cols>
//   <row-major values>

inline constexpr std::string_view kCheckpointMagic = "telegraph-params 1";

inline std::string serialize_checkpoint(const ParamSet& ps, const json& config) {
  std::vector<const Parameter*> sorted;
  for (const auto& p : ps) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  std::string out(kCheckpointMagic);
  out += "\nconfig " + config.dump() + "\n";
  for (const auto* p : sorted) {
    out += "param " + p->name + " " + std::to_string(p->value.rows()) + " " + std::to_string(p->value.cols()) + "\n";
    const auto& v = p->value.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += io::format_double(v[i]);
    }
    out += "\n";
  }
  return out;
}

struct Checkpoint {
  json config;
  std::map<std::string, Matrix> params;
};

inline Checkpoint parse_checkpoint(std::string_view text) {
  Checkpoint cp;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw InvalidArgument("not a parameter checkpoint");
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw InvalidArgument("checkpoint missing config");
  cp.config = json::parse(line.substr(7));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream header(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    header >> tag >> name >> rows >> cols;
    if (tag != "param" || !header) throw InvalidArgument("bad checkpoint header: " + line);
    std::string values_line;
    std::getline(in, values_line);
    std::vector<double> values;
    values.reserve(rows * cols);
    std::size_t pos = 0;
    while (pos < values_line.size()) {
      auto end = values_line.find(' ', pos);
      if (end == std::string::npos) end = values_line.size();
      values.push_back(io::parse_double(std::string_view(values_line).substr(pos, end - pos)));
      pos = end + 1;
    }
    cp.params.emplace(name, Matrix(rows, cols, std::move(values)));
  }
  return cp;
}

// Copies checkpoint values into an already-shaped ParamSet; names and shapes must match exactly.
inline void load_params(ParamSet& ps, const Checkpoint& cp) {
  if (cp.params.size() != ps.size())
    throw InvalidArgument("checkpoint has " + std::to_string(cp.params.size()) + " parameters, model has " +
                          std::to_string(ps.size()));
  for (auto& p : ps) {
    auto it = cp.params.find(p.name);
    if (it == cp.params.end()) throw InvalidArgument("checkpoint lacks parameter '" + p.name + "'");
    if (!it->second.same_shape(p.value))
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + it->second.shape_string() + ", expected " +
                       p.value.shape_string());
    p.value = it->second;
  }
}

}  // namespace telegraph::nn
