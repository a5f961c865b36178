#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sgnn/correct.hpp"
#include "sgnn/error.hpp"
#include "sgnn/train.hpp"

using namespace sgnn;

namespace {

struct Trained {
  Experiment experiment;
  Checkpoint checkpoint;
};

// A small model trained once and shared by the tests below.
const Trained& trained() {
  static const Trained t = [] {
    ModelConfig c;
    c.seed = 31;
    c.label_loss_invalid_only = true;
    Experiment ex = run_experiment(fixture::synth_dataset(c.n_classes, 2000, 31), c);
    Checkpoint ck = ex.training.final_checkpoint;
    return Trained{std::move(ex), std::move(ck)};
  }();
  return t;
}

std::vector<Detection> as_detections(const std::vector<Frame>& frames, double confidence = 0.9) {
  std::vector<Detection> out;
  for (const auto& f : frames)
    for (const auto& o : f.objects) out.push_back({f.frame_id, o.label, o.bbox, confidence});
  return out;
}

Checkpoint trusting_checkpoint() {
  ModelConfig c;
  c.n_classes = 5;
  c.hidden_dim = 8;
  Checkpoint ck{c, ModelParams::init(c, 1), {}};
  ck.params.valid_head.bias(0, 0) = 50.0;
  return ck;
}

}  // namespace

TEST(Correct, ModelThatFlagsNothingChangesNothing) {
  Rng rng = make_rng(4);
  std::vector<Frame> frames;
  for (int i = 0; i < 10; ++i) frames.push_back(fixture::random_frame(rng, 2 + i, 5, "f" + std::to_string(i)));
  const auto dets = as_detections(frames);
  const auto r = correct_detections(group_by_frame(dets), trusting_checkpoint());
  EXPECT_EQ(r.flattened(), dets);
  EXPECT_EQ(r.applied, 0u);
  EXPECT_EQ(r.records.size(), dets.size());
}

TEST(Correct, SingleDetectionPassesThrough) {
  const std::vector<Detection> dets{{"solo", 3, {0.1, 0.1, 0.2, 0.2}, 0.7}};
  Checkpoint ck = trusting_checkpoint();
  ck.params.valid_head.bias(0, 0) = -50.0;  // would flag everything
  const auto r = correct_detections(group_by_frame(dets), ck);
  EXPECT_EQ(r.flattened(), dets);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_FALSE(r.records[0].applied);
  EXPECT_EQ(r.records[0].note, "degenerate graph: single detection");
}

TEST(Correct, EmptyFrameIsSkippedWithWarning) {
  const auto r = correct_detections({DetectionGroup{"empty", {}}}, trusting_checkpoint());
  EXPECT_TRUE(r.frames.empty());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("empty"), std::string::npos);
}

TEST(Correct, ClassOutsideModelRangeIsIncompatible) {
  const std::vector<Detection> dets{{"a", 9, {0.1, 0.1, 0.2, 0.2}, 0.7}, {"a", 0, {0.5, 0.5, 0.6, 0.6}, 0.7}};
  EXPECT_THROW(correct_detections(group_by_frame(dets), trusting_checkpoint()), IncompatibleModel);
}

TEST(Correct, GroupingKeepsFirstAppearanceOrder) {
  const BoundingBox b{0.1, 0.1, 0.2, 0.2};
  const auto groups = group_by_frame({{"b", 0, b, 0.5}, {"a", 1, b, 0.5}, {"b", 2, b, 0.5}});
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].frame_id, "b");
  EXPECT_EQ(groups[0].detections.size(), 2u);
  EXPECT_EQ(groups[0].detections[1].class_id, 2);
}

TEST(Correct, FlaggedCorruptedLabelsAreRestored) {
  const auto& t = trained();
  const int n = t.checkpoint.config.n_classes;
  const auto corrupted = corrupt_frames(t.experiment.split.test, n, {1, 0.0, 555});
  std::vector<Frame> frames;
  for (const auto& a : corrupted) frames.push_back(a.frame);
  const auto r = correct_detections(group_by_frame(as_detections(frames)), t.checkpoint);
  std::size_t flagged = 0, restored = 0, node = 0;
  for (std::size_t f = 0; f < corrupted.size(); ++f) {
    for (std::size_t i = 0; i < corrupted[f].validity.size(); ++i, ++node) {
      const auto& rec = r.records[node];
      ASSERT_EQ(rec.frame_id, corrupted[f].frame.frame_id);
      if (corrupted[f].validity[i] || rec.validity_score >= t.checkpoint.config.tau) continue;
      ++flagged;
      restored += rec.corrected_class == corrupted[f].original_labels[i] ? 1 : 0;
    }
  }
  ASSERT_GT(flagged, 20u);
  EXPECT_GE(static_cast<double>(restored) / static_cast<double>(flagged), 0.8)
      << restored << " of " << flagged << " flagged corrupted nodes restored";
}

TEST(Correct, BoxesAndConfidencesAreUntouched) {
  const auto& t = trained();
  DetectorSimulation sim;
  sim.seed = 8;
  const auto dets = simulate_detector(t.experiment.split.test, t.checkpoint.config.n_classes, sim);
  const auto r = correct_detections(group_by_frame(dets), t.checkpoint);
  const auto out = r.flattened();
  ASSERT_EQ(out.size(), dets.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(out[i].frame_id, dets[i].frame_id);
    EXPECT_EQ(out[i].bbox, dets[i].bbox);
    EXPECT_EQ(out[i].confidence, dets[i].confidence);
    changed += out[i].class_id != dets[i].class_id ? 1 : 0;
  }
  EXPECT_EQ(changed, r.applied);
  EXPECT_GT(r.applied, 0u);
}

TEST(Correct, SecondPassOnCleanInputIsMostlyANoOp) {
  const auto& t = trained();
  const auto first = correct_detections(group_by_frame(as_detections(t.experiment.split.test)), t.checkpoint);
  const auto second = correct_detections(first.frames, t.checkpoint);
  std::size_t stable = 0;
  for (std::size_t f = 0; f < second.frames.size(); ++f)
    stable += second.frames[f].detections == first.frames[f].detections ? 1 : 0;
  EXPECT_GE(static_cast<double>(stable) / static_cast<double>(second.frames.size()), 0.95);
}

TEST(DetectorSimulation, ProducesScoredValidBoxes) {
  const auto frames = fixture::synth_dataset(12, 40, 2);
  DetectorSimulation sim;
  sim.seed = 3;
  const auto dets = simulate_detector(frames, 12, sim);
  std::size_t objects = 0, swapped = 0, k = 0;
  for (const auto& f : frames) {
    objects += f.objects.size();
    for (const auto& o : f.objects) swapped += dets[k++].class_id != o.label ? 1 : 0;
  }
  ASSERT_EQ(dets.size(), objects);
  EXPECT_GE(swapped, frames.size());
  for (const auto& d : dets) {
    EXPECT_TRUE(d.bbox.valid());
    EXPECT_GE(d.confidence, 0.5);
    EXPECT_LE(d.confidence, 1.0);
  }
  EXPECT_EQ(simulate_detector(frames, 12, sim), dets);
}
