#pragma once

#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sgnn/corrupt.hpp"
#include "sgnn/error.hpp"
#include "sgnn/eval.hpp"
#include "sgnn/model.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

struct DetectionGroup {
  std::string frame_id;
  std::vector<Detection> detections;
};

// Groups by frame_id in order of first appearance; detection order within a
// frame is kept.
inline std::vector<DetectionGroup> group_by_frame(const std::vector<Detection>& detections) {
  std::vector<DetectionGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& d : detections) {
    auto [it, fresh] = index.emplace(d.frame_id, groups.size());
    if (fresh) groups.push_back({d.frame_id, {}});
    groups[it->second].detections.push_back(d);
  }
  return groups;
}

struct CorrectionRecord {
  std::string frame_id;
  std::size_t node = 0;
  int original_class = 0;
  int corrected_class = 0;
  double validity_score = 1.0;
  bool applied = false;
  std::string note;
};

struct CorrectionResult {
  std::vector<DetectionGroup> frames;
  std::vector<CorrectionRecord> records;
  std::vector<std::string> warnings;
  std::size_t applied = 0;

  std::vector<Detection> flattened() const {
    std::vector<Detection> out;
    for (const auto& g : frames) out.insert(out.end(), g.detections.begin(), g.detections.end());
    return out;
  }
};

// Builds a graph per frame from detector classes and boxes, then relabels
// every node the model flags as invalid. Boxes and confidences pass through
// untouched; single-detection frames pass through unchanged.
inline CorrectionResult correct_detections(const std::vector<DetectionGroup>& input, const Checkpoint& checkpoint,
                                           std::optional<NeighborhoodSize> k = std::nullopt,
                                           std::optional<double> tau = std::nullopt) {
  ModelConfig config = checkpoint.config;
  if (k) config.k = *k;
  if (tau) config.tau = *tau;
  config.validate();

  CorrectionResult result;
  for (const auto& group : input) {
    if (group.detections.empty()) {
      result.warnings.push_back("frame '" + group.frame_id + "' has no detections; skipped");
      continue;
    }
    DetectionGroup out = group;
    if (group.detections.size() == 1) {
      const auto& d = group.detections.front();
      if (d.class_id < 0 || d.class_id >= config.n_classes)
        throw IncompatibleModel("detection class " + std::to_string(d.class_id) + " outside model class range");
      result.records.push_back({group.frame_id, 0, d.class_id, d.class_id, 1.0, false, "degenerate graph: single detection"});
      result.frames.push_back(std::move(out));
      continue;
    }
    Frame frame;
    frame.frame_id = group.frame_id;
    for (const auto& d : group.detections) {
      if (d.class_id < 0 || d.class_id >= config.n_classes)
        throw IncompatibleModel("detection class " + std::to_string(d.class_id) + " outside model class range");
      frame.objects.push_back({d.class_id, d.bbox});
    }
    const SceneGraph graph = build_graph(frame, config.k, config.n_classes);
    const auto preds = predict(graph, checkpoint.params, config);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      CorrectionRecord rec{group.frame_id, i, group.detections[i].class_id, preds[i].corrected_label,
                           preds[i].validity_prob, false, {}};
      rec.applied = preds[i].is_invalid && rec.corrected_class != rec.original_class;
      if (rec.applied) {
        out.detections[i].class_id = rec.corrected_class;
        ++result.applied;
      }
      result.records.push_back(std::move(rec));
    }
    result.frames.push_back(std::move(out));
  }
  return result;
}

inline nlohmann::json to_json(const CorrectionRecord& r) {
  nlohmann::json j = {{"frame_id", r.frame_id},
                      {"node", r.node},
                      {"original_class", r.original_class},
                      {"corrected_class", r.corrected_class},
                      {"validity_score", r.validity_score},
                      {"applied", r.applied}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

struct DetectorSimulation {
  int rho = 3;
  double jitter_sigma = 0.01;
  double confidence_min = 0.5;
  double confidence_max = 1.0;
  std::uint64_t seed = 0;
};

// Stand-in for a trained detector: ground-truth frames with label swaps and
// corner jitter, each box given a Uniform(confidence_min, confidence_max) score.
inline std::vector<Detection> simulate_detector(const std::vector<Frame>& ground_truth, int n_classes,
                                                const DetectorSimulation& sim) {
  const CorruptionConfig cc{sim.rho, sim.jitter_sigma, derive_seed(sim.seed, "detector-errors")};
  std::vector<Detection> out;
  for (const auto& f : ground_truth) {
    if (f.objects.empty()) continue;
    Rng rng = frame_stream(cc.seed, f.frame_id);
    const AnnotatedFrame corrupted = corrupt_frame(f, n_classes, cc, rng);
    Rng conf_rng = frame_stream(derive_seed(sim.seed, "detector-confidence"), f.frame_id);
    std::uniform_real_distribution<double> conf(sim.confidence_min, sim.confidence_max);
    for (const auto& o : corrupted.frame.objects) out.push_back({f.frame_id, o.label, o.bbox, conf(conf_rng)});
  }
  return out;
}

}  // namespace sgnn
