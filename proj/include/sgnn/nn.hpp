#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sgnn/error.hpp"
#include "sgnn/rng.hpp"

namespace sgnn {

// Row-major matrix of doubles.
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void set_zero() noexcept { std::fill(data_.begin(), data_.end(), 0.0); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Dense& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  Dense transposed() const {
    Dense t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Dense& operator+=(const Dense& o) noexcept {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool operator==(const Dense&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four independent partial sums; fixed order, so results are reproducible.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void require(bool ok, const char* what) {
  if (!ok) throw InputError(std::string("dimension mismatch: ") + what);
}

}  // namespace detail

// out += x · wᵀ   (x: N×F, w: O×F, out: N×O)
inline void add_matmul_transposed(const Dense& x, const Dense& w, Dense& out) {
  detail::require(x.cols() == w.cols() && out.rows() == x.rows() && out.cols() == w.rows(),
                  "x·wᵀ");
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    double* dst = out.row(i).data();
    for (std::size_t o = 0; o < w.rows(); ++o) dst[o] += detail::dot(xi, w.row(o).data(), n);
  }
}

// grad_w += doutᵀ · x   (dout: N×O, x: N×F, grad_w: O×F)
inline void add_transposed_matmul(const Dense& dout, const Dense& x, Dense& grad_w) {
  detail::require(dout.rows() == x.rows() && grad_w.rows() == dout.cols() && grad_w.cols() == x.cols(),
                  "doutᵀ·x");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    for (std::size_t o = 0; o < dout.cols(); ++o) {
      const double a = dout(i, o);
      if (a != 0.0) detail::axpy(a, xi, grad_w.row(o).data(), x.cols());
    }
  }
}

// dx += dout · w   (dout: N×O, w: O×F, dx: N×F)
inline void add_matmul(const Dense& dout, const Dense& w, Dense& dx) {
  detail::require(dout.cols() == w.rows() && dx.rows() == dout.rows() && dx.cols() == w.cols(), "dout·w");
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    double* dst = dx.row(i).data();
    for (std::size_t o = 0; o < dout.cols(); ++o) {
      const double a = dout(i, o);
      if (a != 0.0) detail::axpy(a, w.row(o).data(), dst, w.cols());
    }
  }
}

inline void add_row_broadcast(const Dense& bias, Dense& out) {
  detail::require(bias.rows() == 1 && bias.cols() == out.cols(), "bias broadcast");
  for (std::size_t i = 0; i < out.rows(); ++i) detail::axpy(1.0, bias.row(0).data(), out.row(i).data(), out.cols());
}

inline void add_column_sums(const Dense& dout, Dense& grad_bias) {
  for (std::size_t i = 0; i < dout.rows(); ++i)
    detail::axpy(1.0, dout.row(i).data(), grad_bias.row(0).data(), dout.cols());
}

// Uniform in ±sqrt(6 / (fan_in + fan_out)).
inline Dense glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
  Dense w(fan_out, fan_in);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.values()) v = dist(rng);
  return w;
}

enum class MessageMode { nodes_only, nodes_and_edges };

inline const char* to_string(MessageMode m) noexcept {
  return m == MessageMode::nodes_only ? "nodes" : "nodes+edges";
}

inline MessageMode parse_message_mode(std::string_view text) {
  if (text == "nodes" || text == "nodes-only" || text == "nodes_only") return MessageMode::nodes_only;
  if (text == "nodes+edges" || text == "edges" || text == "nodes_and_edges") return MessageMode::nodes_and_edges;
  throw InputError("unknown message mode '" + std::string(text) + "' (expected nodes | nodes+edges)");
}

inline constexpr std::size_t kEdgeInputDim = 6;

inline std::size_t message_dim(std::size_t node_dim, MessageMode mode) noexcept {
  return node_dim + (mode == MessageMode::nodes_and_edges ? kEdgeInputDim : 0);
}

// Learning-ready view of one graph: encoded node inputs, CSR neighbour lists
// and normalized edge inputs aligned with the CSR order.
struct GraphTensors {
  Dense node_inputs;                     // N×F
  Dense edge_inputs;                     // E×6
  std::vector<std::size_t> offsets;      // N+1
  std::vector<std::uint32_t> neighbors;  // E

  std::size_t node_count() const noexcept { return node_inputs.rows(); }
};

struct SageLayer {
  Dense w_self;   // out×in
  Dense w_neigh;  // out×msg
  Dense bias;     // 1×out

  std::size_t in_dim() const noexcept { return w_self.cols(); }
  std::size_t msg_dim() const noexcept { return w_neigh.cols(); }
  std::size_t out_dim() const noexcept { return w_self.rows(); }

  static SageLayer zeros(std::size_t in, std::size_t msg, std::size_t out) {
    return {Dense(out, in), Dense(out, msg), Dense(1, out)};
  }

  static SageLayer glorot(std::size_t in, std::size_t msg, std::size_t out, Rng& rng) {
    SageLayer l;
    l.w_self = glorot_uniform(out, in, rng);
    l.w_neigh = glorot_uniform(out, msg, rng);
    l.bias = Dense(1, out);
    return l;
  }
};

struct SageCache {
  Dense input;      // N×in
  Dense aggregate;  // N×msg, mean of neighbour messages
  Dense pre;        // N×out, before ReLU
};

// Row i: mean over j in N(i) of x_j, or concat(x_j, e_ij) with edges.
// An empty neighbourhood yields the zero vector.
inline Dense aggregate_messages(const Dense& x, const GraphTensors& g, MessageMode mode) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  const bool with_edges = mode == MessageMode::nodes_and_edges;
  detail::require(g.offsets.size() == n + 1, "graph offsets vs node rows");
  if (with_edges) detail::require(g.edge_inputs.rows() == g.neighbors.size(), "edge inputs vs edges");
  Dense agg(n, message_dim(f, mode));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = g.offsets[i];
    const std::size_t end = g.offsets[i + 1];
    if (begin == end) continue;
    double* dst = agg.row(i).data();
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t e = begin; e < end; ++e) {
      detail::axpy(inv, x.row(g.neighbors[e]).data(), dst, f);
      if (with_edges) detail::axpy(inv, g.edge_inputs.row(e).data(), dst + f, kEdgeInputDim);
    }
  }
  return agg;
}

// ReLU(W_self·x_i + W_neigh·mean_j m_ij + b) for every node.
inline Dense sage_forward(const SageLayer& layer, const Dense& x, const GraphTensors& g, MessageMode mode,
                          SageCache* cache = nullptr) {
  detail::require(x.cols() == layer.in_dim(), "sage input width");
  detail::require(message_dim(x.cols(), mode) == layer.msg_dim(), "sage message width");
  Dense agg = aggregate_messages(x, g, mode);
  Dense pre(x.rows(), layer.out_dim());
  add_matmul_transposed(x, layer.w_self, pre);
  add_matmul_transposed(agg, layer.w_neigh, pre);
  add_row_broadcast(layer.bias, pre);
  Dense out = pre;
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  if (cache) {
    cache->input = x;
    cache->aggregate = std::move(agg);
    cache->pre = std::move(pre);
  }
  return out;
}

// Accumulates parameter gradients into `grads`; writes dL/dx into grad_input
// when non-null. Each neighbour message receives 1/|N(i)| of node i's
// upstream aggregate gradient.
inline void sage_backward(const SageLayer& layer, const SageCache& cache, const GraphTensors& g, MessageMode mode,
                          const Dense& grad_out, SageLayer& grads, Dense* grad_input) {
  Dense dpre = grad_out;
  for (std::size_t i = 0; i < dpre.size(); ++i)
    if (!(cache.pre.values()[i] > 0.0)) dpre.values()[i] = 0.0;

  add_transposed_matmul(dpre, cache.input, grads.w_self);
  add_transposed_matmul(dpre, cache.aggregate, grads.w_neigh);
  add_column_sums(dpre, grads.bias);

  if (!grad_input) return;
  const std::size_t n = cache.input.rows();
  const std::size_t f = cache.input.cols();
  *grad_input = Dense(n, f);
  add_matmul(dpre, layer.w_self, *grad_input);
  Dense dagg(n, layer.msg_dim());
  add_matmul(dpre, layer.w_neigh, dagg);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = g.offsets[i];
    const std::size_t end = g.offsets[i + 1];
    if (begin == end) continue;
    const double inv = 1.0 / static_cast<double>(end - begin);
    const double* src = dagg.row(i).data();
    for (std::size_t e = begin; e < end; ++e) detail::axpy(inv, src, grad_input->row(g.neighbors[e]).data(), f);
  }
  (void)mode;
}

struct LinearHead {
  Dense w;     // out×in
  Dense bias;  // 1×out

  std::size_t in_dim() const noexcept { return w.cols(); }
  std::size_t out_dim() const noexcept { return w.rows(); }

  static LinearHead zeros(std::size_t in, std::size_t out) { return {Dense(out, in), Dense(1, out)}; }
  static LinearHead glorot(std::size_t in, std::size_t out, Rng& rng) {
    return {glorot_uniform(out, in, rng), Dense(1, out)};
  }
};

inline Dense linear_forward(const LinearHead& head, const Dense& h) {
  Dense out(h.rows(), head.out_dim());
  add_matmul_transposed(h, head.w, out);
  add_row_broadcast(head.bias, out);
  return out;
}

inline void linear_backward(const LinearHead& head, const Dense& h, const Dense& grad_out, LinearHead& grads,
                            Dense* grad_h) {
  add_transposed_matmul(grad_out, h, grads.w);
  add_column_sums(grad_out, grads.bias);
  if (grad_h) add_matmul(grad_out, head.w, *grad_h);
}

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void softmax_inplace(std::span<double> row) noexcept {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

inline Dense softmax_rows(const Dense& logits) {
  Dense p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) softmax_inplace(p.row(i));
  return p;
}

struct HeadOutputs {
  std::vector<double> validity_logit;
  std::vector<double> validity_prob;
  Dense class_logits;  // pre-softmax
};

inline HeadOutputs heads_forward(const Dense& h, const LinearHead& valid_head, const LinearHead& label_head) {
  detail::require(valid_head.out_dim() == 1, "validity head must have one output");
  HeadOutputs out;
  const Dense z = linear_forward(valid_head, h);
  out.validity_logit.resize(h.rows());
  out.validity_prob.resize(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    out.validity_logit[i] = z(i, 0);
    out.validity_prob[i] = sigmoid(z(i, 0));
  }
  out.class_logits = linear_forward(label_head, h);
  return out;
}

inline constexpr double kProbClamp = 1e-12;

enum class Reduction { mean, sum };

// Unscaled component losses and the λ-weighted total.
struct LossValue {
  double total = 0.0;
  double bce = 0.0;
  double ce = 0.0;
};

// Gradients of the total loss with respect to the validity logit and the
// class logits.
struct LossGrad {
  std::vector<double> validity_logit;
  Dense class_logits;
};

// Per-node weighted form. Probabilities are clamped to
// [kProbClamp, 1 - kProbClamp] inside the logs; the gradient is zero wherever
// the clamp is active.
inline LossValue multitask_loss_weighted(std::span<const double> validity_prob, const Dense& class_logits,
                                         std::span<const std::uint8_t> validity_gt, std::span<const int> label_gt,
                                         double lambda_valid, double lambda_label,
                                         std::span<const double> bce_weights, std::span<const double> ce_weights,
                                         LossGrad* grad = nullptr) {
  const std::size_t n = validity_prob.size();
  detail::require(class_logits.rows() == n && validity_gt.size() == n && label_gt.size() == n &&
                      bce_weights.size() == n && ce_weights.size() == n,
                  "loss inputs");
  LossValue loss;
  if (grad) {
    grad->validity_logit.assign(n, 0.0);
    grad->class_logits = Dense(n, class_logits.cols());
  }
  const double lo = kProbClamp;
  const double hi = 1.0 - kProbClamp;
  std::vector<double> probs(class_logits.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double p = validity_prob[i];
    const double y = validity_gt[i] ? 1.0 : 0.0;
    const double pc = std::clamp(p, lo, hi);
    loss.bce += bce_weights[i] * -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    if (grad && p >= lo && p <= hi) grad->validity_logit[i] = lambda_valid * bce_weights[i] * (p - y);

    const auto row = class_logits.row(i);
    const int target = label_gt[i];
    detail::require(target >= 0 && static_cast<std::size_t>(target) < row.size(), "label target in range");
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      probs[c] = std::exp(row[c] - mx);
      sum += probs[c];
    }
    for (double& v : probs) v /= sum;
    const double log_pt = row[static_cast<std::size_t>(target)] - mx - std::log(sum);
    const double pt = probs[static_cast<std::size_t>(target)];
    const bool in_range = pt >= lo && pt <= hi;
    loss.ce += ce_weights[i] * (in_range ? -log_pt : -std::log(std::clamp(pt, lo, hi)));
    if (grad && in_range && ce_weights[i] != 0.0) {
      const double s = lambda_label * ce_weights[i];
      auto g = grad->class_logits.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) g[c] = s * probs[c];
      g[static_cast<std::size_t>(target)] -= s;
    }
  }
  loss.total = lambda_valid * loss.bce + lambda_label * loss.ce;
  return loss;
}

inline LossValue multitask_loss(std::span<const double> validity_prob, const Dense& class_logits,
                                std::span<const std::uint8_t> validity_gt, std::span<const int> label_gt,
                                double lambda_valid, double lambda_label, Reduction reduction = Reduction::mean,
                                LossGrad* grad = nullptr) {
  const std::size_t n = validity_prob.size();
  const double w = reduction == Reduction::mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  const std::vector<double> weights(n, w);
  return multitask_loss_weighted(validity_prob, class_logits, validity_gt, label_gt, lambda_valid, lambda_label,
                                 weights, weights, grad);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<Dense> m;
  std::vector<Dense> v;

  static AdamState for_shapes(std::span<const Dense* const> params, AdamConfig config = {}) {
    AdamState s;
    s.config = config;
    for (const Dense* p : params) {
      s.m.emplace_back(p->rows(), p->cols());
      s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

// Bias-corrected Adam. Throws NumericalError (leaving everything untouched)
// if any gradient entry is non-finite.
inline void adam_step(std::span<Dense* const> params, std::span<const Dense* const> grads, AdamState& state) {
  detail::require(params.size() == grads.size() && params.size() == state.m.size(), "adam parameter count");
  for (std::size_t k = 0; k < params.size(); ++k) {
    detail::require(params[k]->same_shape(*grads[k]) && params[k]->same_shape(state.m[k]), "adam tensor shape");
    if (!grads[k]->all_finite()) throw NumericalError("non-finite gradient in tensor " + std::to_string(k));
  }
  ++state.t;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    auto g = grads[k]->values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace sgnn
