#pragma once

// Independent reference computations used to check the library. Nothing here
// calls into the code path it verifies.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sgnn/geometry.hpp"
#include "sgnn/model.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn::oracle {

// IoU by counting pixel centres of a res×res raster of the unit square.
inline double raster_iou(const BoundingBox& a, const BoundingBox& b, int res = 512) {
  long inter = 0, uni = 0;
  for (int yi = 0; yi < res; ++yi) {
    const double y = (yi + 0.5) / res;
    for (int xi = 0; xi < res; ++xi) {
      const double x = (xi + 0.5) / res;
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// For each node, the indices of its k nearest other nodes by brute force
// (full sort over (distance, index)).
inline std::vector<std::vector<std::size_t>> brute_force_knn(const std::vector<SceneObject>& objs, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(objs.size());
  for (std::size_t i = 0; i < objs.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (i == j) continue;
      d.emplace_back(std::hypot(objs[j].bbox.center_x() - objs[i].bbox.center_x(),
                                objs[j].bbox.center_y() - objs[i].bbox.center_y()),
                     j);
    }
    std::sort(d.begin(), d.end());
    for (std::size_t r = 0; r < std::min(k, d.size()); ++r) out[i].push_back(d[r].second);
  }
  return out;
}

struct ReferenceOutput {
  std::vector<double> validity_prob;
  std::vector<std::vector<double>> class_probs;
};

// Straight-line evaluation of the two-layer network with plain loops, reading
// neighbours from the edge list and encoding inputs from scratch.
inline ReferenceOutput reference_forward(const SceneGraph& g, const ModelParams& p, const ModelConfig& c) {
  using Vec = std::vector<double>;
  const std::size_t n = g.node_count();
  std::vector<Vec> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = g.boxes[i];
    const double cx = (b.x_min + b.x_max) / 2, cy = (b.y_min + b.y_max) / 2;
    const double w = b.x_max - b.x_min, h = b.y_max - b.y_min;
    if (c.label_encoding == LabelEncoding::scalar) {
      x[i] = {double(g.current_labels[i]) / double(c.n_classes - 1), cx, cy, w, h};
    } else {
      x[i].assign(static_cast<std::size_t>(c.n_classes), 0.0);
      x[i][static_cast<std::size_t>(g.current_labels[i])] = 1.0;
      x[i].insert(x[i].end(), {cx, cy, w, h});
    }
  }
  auto edge_vec = [&](std::size_t e) -> Vec {
    const auto& bi = g.boxes[g.edges[e].src];
    const auto& bj = g.boxes[g.edges[e].dst];
    const double dx = (bj.x_min + bj.x_max) / 2 - (bi.x_min + bi.x_max) / 2;
    const double dy = (bj.y_min + bj.y_max) / 2 - (bi.y_min + bi.y_max) / 2;
    const double ai = (bi.x_max - bi.x_min) * (bi.y_max - bi.y_min);
    const double aj = (bj.x_max - bj.x_min) * (bj.y_max - bj.y_min);
    const double ratio = ai > 0 ? aj / ai : 1e6;
    const double theta = (dx == 0 && dy == 0) ? 0.0 : std::atan2(dy, dx) * 180.0 / std::numbers::pi;
    return {dx, dy, std::sqrt(dx * dx + dy * dy), theta / 180.0, iou(bi, bj), std::log1p(ratio)};
  };
  auto layer = [&](const SageLayer& L, const std::vector<Vec>& in) {
    std::vector<Vec> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec msg(L.msg_dim(), 0.0);
      std::size_t deg = 0;
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (g.edges[e].src != i) continue;
        ++deg;
        Vec m = in[g.edges[e].dst];
        if (c.msg_mode == MessageMode::nodes_and_edges) {
          const Vec ev = edge_vec(e);
          m.insert(m.end(), ev.begin(), ev.end());
        }
        for (std::size_t q = 0; q < m.size(); ++q) msg[q] += m[q];
      }
      if (deg) for (double& v : msg) v /= double(deg);
      out[i].assign(L.out_dim(), 0.0);
      for (std::size_t o = 0; o < L.out_dim(); ++o) {
        double s = L.bias(0, o);
        for (std::size_t f = 0; f < in[i].size(); ++f) s += L.w_self(o, f) * in[i][f];
        for (std::size_t f = 0; f < msg.size(); ++f) s += L.w_neigh(o, f) * msg[f];
        out[i][o] = std::max(0.0, s);
      }
    }
    return out;
  };
  const auto h1 = layer(p.sage1, x);
  const auto h2 = layer(p.sage2, h1);
  ReferenceOutput r;
  for (std::size_t i = 0; i < n; ++i) {
    double z = p.valid_head.bias(0, 0);
    for (std::size_t f = 0; f < h2[i].size(); ++f) z += p.valid_head.w(0, f) * h2[i][f];
    r.validity_prob.push_back(1.0 / (1.0 + std::exp(-z)));
    Vec logits(p.label_head.out_dim());
    for (std::size_t o = 0; o < logits.size(); ++o) {
      logits[o] = p.label_head.bias(0, o);
      for (std::size_t f = 0; f < h2[i].size(); ++f) logits[o] += p.label_head.w(o, f) * h2[i][f];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double& v : logits) sum += (v = std::exp(v - mx));
    for (double& v : logits) v /= sum;
    r.class_probs.push_back(logits);
  }
  return r;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
};

// Central finite differences of the multi-task loss over every parameter.
// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
namespace detail {

struct Probe {
  double loss = 0.0;
  bool same_pattern = true;  // ReLU sign pattern unchanged from the base point
};

inline bool same_signs(const Dense& a, const Dense& b) {
  for (std::size_t i = 0; i < a.values().size(); ++i)
    if ((a.values()[i] > 0.0) != (b.values()[i] > 0.0)) return false;
  return true;
}

inline Dense relu(Dense x) {
  for (double& v : x.values()) v = v < 0.0 ? 0.0 : v;
  return x;
}

// Loss after moving element `index` of tensor `k` by `delta`; `p` already
// holds the moved value. Activations upstream of the tensor are taken from
// `base`. Second-layer weights enter the pre-activation linearly, so their
// probes shift a single pre-activation column instead of rerunning the layer.
inline Probe probe(const SceneGraph& g, const GraphTensors& t, const ModelParams& p, const ModelConfig& c,
                   const NodeLossWeights& w, const ForwardPass& base, std::size_t k, std::size_t index,
                   double delta) {
  Probe r;
  Dense h2;
  if (k < 3) {
    SageCache l1, l2;
    const Dense h1 = sage_forward(p.sage1, t.node_inputs, t, c.msg_mode, &l1);
    h2 = sage_forward(p.sage2, h1, t, c.msg_mode, &l2);
    r.same_pattern = same_signs(l1.pre, base.layer1.pre) && same_signs(l2.pre, base.layer2.pre);
  } else if (k < 6) {
    const Dense* src = k == 3 ? &base.layer2.input : k == 4 ? &base.layer2.aggregate : nullptr;
    const std::size_t o = src ? index / src->cols() : index;
    const std::size_t f = src ? index % src->cols() : 0;
    Dense pre = base.layer2.pre;
    for (std::size_t i = 0; i < pre.rows(); ++i) {
      const double before = pre(i, o);
      pre(i, o) += delta * (src ? (*src)(i, f) : 1.0);
      r.same_pattern = r.same_pattern && (before > 0.0) == (pre(i, o) > 0.0);
    }
    h2 = relu(std::move(pre));
  }
  const HeadOutputs heads = heads_forward(k < 6 ? h2 : base.h2, p.valid_head, p.label_head);
  r.loss = multitask_loss_weighted(heads.validity_prob, heads.class_logits, g.validity, g.original_labels,
                                   c.lambda_valid, c.lambda_label, w.bce, w.ce)
               .total;
  return r;
}

}  // namespace detail

// Central differences over every parameter. The loss is only piecewise smooth
// (ReLU), so when a ±step probe flips a ReLU the derivative is taken with a
// second-order one-sided difference from the side that stays on the same piece.
inline GradientCheck finite_difference_check(const SceneGraph& g, ModelParams params, const ModelConfig& c,
                                             double step = 1e-5, double floor = 1e-6,
                                             Reduction reduction = Reduction::mean) {
  static_assert(kTensorCount == 10);
  ModelParams grads = ModelParams::zeros(c);
  const GraphTensors t = encode_graph(g, c);
  const NodeLossWeights w = node_loss_weights(g, c, reduction);
  loss_and_gradients(g, t, params, c, 1.0, grads, reduction);
  const ForwardPass base = forward_pass(t, params, c);
  const double base_loss = multitask_loss_weighted(base.heads.validity_prob, base.heads.class_logits, g.validity,
                                                   g.original_labels, c.lambda_valid, c.lambda_label, w.bce, w.ce)
                               .total;
  GradientCheck result;
  auto ptensors = params.tensors();
  auto gtensors = grads.tensors();
  for (std::size_t k = 0; k < kTensorCount; ++k) {
    auto vals = ptensors[k]->values();
    const auto gv = gtensors[k]->values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      auto at = [&](double delta) {
        vals[i] = orig + delta;
        const detail::Probe r = detail::probe(g, t, params, c, w, base, k, i, vals[i] - orig);
        vals[i] = orig;
        return r;
      };
      const detail::Probe up = at(step);
      const detail::Probe down = at(-step);
      double numeric = (up.loss - down.loss) / (2 * step);
      if (up.same_pattern != down.same_pattern) {
        const double dir = up.same_pattern ? 1.0 : -1.0;
        const detail::Probe far = at(2 * dir * step);
        if (far.same_pattern) {
          const double near = up.same_pattern ? up.loss : down.loss;
          numeric = dir * (-3 * base_loss + 4 * near - far.loss) / (2 * step);
        }
      }
      const double denom = std::max({std::abs(gv[i]), std::abs(numeric), floor});
      const double rel = std::abs(gv[i] - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = k;
      }
      ++result.checked;
    }
  }
  return result;
}

}  // namespace sgnn::oracle
