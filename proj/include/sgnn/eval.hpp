#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sgnn/error.hpp"
#include "sgnn/geometry.hpp"
#include "sgnn/model.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

struct Detection {
  std::string frame_id;
  int class_id = 0;
  BoundingBox bbox;
  double confidence = 1.0;

  bool operator==(const Detection&) const = default;
};

// (1/N) Σ 1[predicted_i == gt_i]
inline double validity_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gt) {
  if (predicted.size() != gt.size()) throw InputError("validity_accuracy: length mismatch");
  if (gt.empty()) throw InputError("validity_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hits += (predicted[i] != 0) == (gt[i] != 0) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

struct ClassScore {
  std::size_t support = 0;
  std::size_t predicted = 0;
  std::size_t true_positive = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct LabelMetrics {
  int n_classes = 0;
  std::size_t evaluated = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::size_t> confusion;  // n×n, rows = ground truth, cols = predicted
  std::vector<ClassScore> per_class;
  std::vector<int> zero_support_classes;

  bool empty() const noexcept { return evaluated == 0; }

  std::size_t at(int gt, int pred) const {
    return confusion[static_cast<std::size_t>(gt) * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(pred)];
  }
};

// Metrics over the masked nodes only, weighted by ground-truth support.
// Zero-support classes are excluded from the weighted means.
inline LabelMetrics label_metrics(std::span<const int> pred, std::span<const int> gt, std::span<const std::uint8_t> mask,
                                  int n_classes) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) throw InputError("label_metrics: length mismatch");
  if (n_classes < 1) throw InputError("label_metrics: n_classes must be positive");
  const auto n = static_cast<std::size_t>(n_classes);
  LabelMetrics m;
  m.n_classes = n_classes;
  m.confusion.assign(n * n, 0);
  m.per_class.assign(n, {});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    if (gt[i] < 0 || gt[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
      throw InputError("label_metrics: label outside class range");
    const auto g = static_cast<std::size_t>(gt[i]);
    const auto p = static_cast<std::size_t>(pred[i]);
    ++m.evaluated;
    ++m.confusion[g * n + p];
    ++m.per_class[g].support;
    ++m.per_class[p].predicted;
    if (g == p) {
      ++m.per_class[g].true_positive;
      ++correct;
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    auto& s = m.per_class[c];
    s.precision = s.predicted ? static_cast<double>(s.true_positive) / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support ? static_cast<double>(s.true_positive) / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (s.support == 0) m.zero_support_classes.push_back(static_cast<int>(c));
  }
  if (m.evaluated == 0) return m;
  const double total = static_cast<double>(m.evaluated);
  m.accuracy = static_cast<double>(correct) / total;
  for (const auto& s : m.per_class) {
    if (s.support == 0) continue;
    const double w = static_cast<double>(s.support) / total;
    m.precision += w * s.precision;
    m.recall += w * s.recall;
    m.f1 += w * s.f1;
  }
  return m;
}

struct MapResult {
  std::map<int, double> per_class_ap;  // classes present in ground truth
  double map50 = 0.0;
};

// Area under the precision/recall curve with precision made non-increasing
// from the right (all-point interpolation).
inline double average_precision(std::span<const std::uint8_t> is_tp, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> recall{0.0};
  std::vector<double> precision{0.0};
  std::size_t tp = 0;
  for (std::size_t i = 0; i < is_tp.size(); ++i) {
    tp += is_tp[i] ? 1 : 0;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  recall.push_back(1.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < recall.size(); ++i) ap += (recall[i] - recall[i - 1]) * precision[i];
  return ap;
}

// Per-class AP at IoU >= threshold and their mean over ground-truth classes.
// Detections are ranked by descending confidence, ties by frame_id then input
// order; each is greedily matched to the unmatched same-class box of its frame
// with the highest IoU.
inline MapResult map50(const std::vector<Detection>& detections, const std::vector<Frame>& ground_truth,
                       double iou_threshold = 0.5) {
  std::unordered_map<std::string, std::size_t> frame_index;
  for (std::size_t f = 0; f < ground_truth.size(); ++f) frame_index.emplace(ground_truth[f].frame_id, f);

  std::set<int> classes;
  std::map<int, std::size_t> gt_count;
  for (const auto& f : ground_truth)
    for (const auto& o : f.objects) {
      classes.insert(o.label);
      ++gt_count[o.label];
    }

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (!frame_index.contains(detections[d].frame_id))
      throw InputError("detection " + std::to_string(d) + " references unknown frame '" + detections[d].frame_id + "'");
    by_class[detections[d].class_id].push_back(d);
  }

  MapResult result;
  for (int c : classes) {
    std::vector<std::size_t> order = by_class[c];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (detections[a].confidence != detections[b].confidence)
        return detections[a].confidence > detections[b].confidence;
      return detections[a].frame_id < detections[b].frame_id;
    });
    std::unordered_map<std::size_t, std::vector<std::uint8_t>> matched;
    std::vector<std::uint8_t> is_tp;
    is_tp.reserve(order.size());
    for (std::size_t d : order) {
      const auto& det = detections[d];
      const std::size_t f = frame_index.at(det.frame_id);
      const auto& objs = ground_truth[f].objects;
      auto& used = matched[f];
      if (used.empty()) used.assign(objs.size(), 0);
      double best = -1.0;
      std::size_t best_idx = objs.size();
      for (std::size_t g = 0; g < objs.size(); ++g) {
        if (objs[g].label != c || used[g]) continue;
        const double v = iou(det.bbox, objs[g].bbox);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_idx = g;
        }
      }
      if (best_idx < objs.size()) {
        used[best_idx] = 1;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }
    result.per_class_ap[c] = average_precision(is_tp, gt_count[c]);
  }
  if (!result.per_class_ap.empty()) {
    double sum = 0.0;
    for (const auto& [c, ap] : result.per_class_ap) sum += ap;
    result.map50 = sum / static_cast<double>(result.per_class_ap.size());
  }
  return result;
}

struct EvalReport {
  std::size_t graphs = 0;
  std::size_t nodes = 0;
  std::size_t flagged_invalid = 0;
  std::size_t true_invalid = 0;
  double validity_accuracy = 0.0;
  LabelMetrics labels;  // over nodes predicted invalid
  std::optional<MapResult> detection;
};

// Node-level evaluation: validity accuracy over all nodes; label metrics of
// the corrected label against the original label over nodes the model flags.
inline EvalReport evaluate_nodes(const std::vector<SceneGraph>& graphs, const ModelParams& params,
                                 const ModelConfig& config) {
  std::vector<std::uint8_t> pred_valid, gt_valid, mask;
  std::vector<int> pred_label, gt_label;
  for (const auto& g : graphs) {
    const auto preds = predict(g, params, config);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      pred_valid.push_back(preds[i].is_invalid ? 0 : 1);
      gt_valid.push_back(g.validity[i]);
      mask.push_back(preds[i].is_invalid ? 1 : 0);
      pred_label.push_back(preds[i].corrected_label);
      gt_label.push_back(g.original_labels[i]);
    }
  }
  EvalReport r;
  r.graphs = graphs.size();
  r.nodes = gt_valid.size();
  if (r.nodes == 0) throw InputError("evaluation set has no nodes");
  r.validity_accuracy = validity_accuracy(pred_valid, gt_valid);
  r.labels = label_metrics(pred_label, gt_label, mask, config.n_classes);
  r.flagged_invalid = r.labels.evaluated;
  for (auto v : gt_valid) r.true_invalid += v ? 0 : 1;
  return r;
}

inline nlohmann::json to_json(const MapResult& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, ap] : m.per_class_ap) per[std::to_string(c)] = ap;
  return {{"mAP50", m.map50}, {"per_class_ap", per}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["graphs"] = r.graphs;
  j["nodes"] = r.nodes;
  j["true_invalid"] = r.true_invalid;
  j["flagged_invalid"] = r.flagged_invalid;
  j["validity_accuracy"] = r.validity_accuracy;
  nlohmann::json labels;
  labels["evaluated"] = r.labels.evaluated;
  if (r.labels.empty()) labels["note"] = "no invalid nodes evaluated";
  labels["accuracy"] = r.labels.accuracy;
  labels["weighted_precision"] = r.labels.precision;
  labels["weighted_recall"] = r.labels.recall;
  labels["weighted_f1"] = r.labels.f1;
  labels["zero_support_classes"] = r.labels.zero_support_classes;
  nlohmann::json matrix = nlohmann::json::array();
  for (int g = 0; g < r.labels.n_classes; ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < r.labels.n_classes; ++p) row.push_back(r.labels.at(g, p));
    matrix.push_back(row);
  }
  labels["confusion_matrix"] = matrix;
  j["labels"] = labels;
  if (r.detection) j["detection"] = to_json(*r.detection);
  return j;
}

inline std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "graphs             " << r.graphs << "\n"
     << "nodes              " << r.nodes << "\n"
     << "true invalid       " << r.true_invalid << "\n"
     << "flagged invalid    " << r.flagged_invalid << "\n"
     << "validity accuracy  " << r.validity_accuracy << "\n";
  if (r.labels.empty()) {
    os << "label metrics      no invalid nodes evaluated\n";
  } else {
    os << "label accuracy     " << r.labels.accuracy << "\n"
       << "weighted precision " << r.labels.precision << "\n"
       << "weighted recall    " << r.labels.recall << "\n"
       << "weighted F1        " << r.labels.f1 << "\n";
  }
  if (r.detection) os << "mAP@50             " << r.detection->map50 << "\n";
  return os.str();
}

inline std::string confusion_csv(const LabelMetrics& m) {
  std::ostringstream os;
  os << "gt\\pred";
  for (int p = 0; p < m.n_classes; ++p) os << ',' << p;
  os << '\n';
  for (int g = 0; g < m.n_classes; ++g) {
    os << g;
    for (int p = 0; p < m.n_classes; ++p) os << ',' << m.at(g, p);
    os << '\n';
  }
  return os.str();
}

}  // namespace sgnn
