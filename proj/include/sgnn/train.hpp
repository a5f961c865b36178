#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sgnn/corrupt.hpp"
#include "sgnn/error.hpp"
#include "sgnn/eval.hpp"
#include "sgnn/model.hpp"
#include "sgnn/nn.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
};

struct DatasetSplit {
  std::vector<Frame> train;
  std::vector<Frame> val;
  std::vector<Frame> test;
};

// Seeded shuffle, then floor(n·train) and floor(n·val) frames; the remainder
// goes to test.
inline DatasetSplit split_dataset(std::vector<Frame> frames, std::uint64_t seed, SplitRatios ratios = {}) {
  const std::size_t n = frames.size();
  if (n < 3) throw InputError("need at least 3 frames to split, got " + std::to_string(n));
  Rng rng = make_rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
    std::swap(frames[i], frames[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
  DatasetSplit s;
  auto first = std::make_move_iterator(frames.begin());
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(first + static_cast<std::ptrdiff_t>(n_train), first + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(frames.end()));
  return s;
}

inline CorruptionConfig corruption_for(const ModelConfig& c) {
  return {c.rho, c.jitter_sigma, derive_seed(c.seed, "corrupt")};
}

// Clean graph and corrupted twin for every frame, in frame order.
inline std::vector<SceneGraph> build_twin_graphs(const std::vector<Frame>& frames, const ModelConfig& c) {
  std::vector<SceneGraph> graphs;
  graphs.reserve(2 * frames.size());
  for (const auto& a : with_negative_twins(frames, c.n_classes, corruption_for(c)))
    graphs.push_back(build_graph(a, c.k, c.n_classes));
  return graphs;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double bce = 0.0;
  double ce = 0.0;
  double val_validity_accuracy = 0.0;
  double val_label_f1 = 0.0;
  double val_loss = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  bool operator==(const TrainHistory&) const = default;
};

inline nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"loss", e.loss},
                   {"bce", e.bce},
                   {"ce", e.ce},
                   {"val_validity_accuracy", e.val_validity_accuracy},
                   {"val_label_f1", e.val_label_f1},
                   {"val_loss", e.val_loss}});
  }
  return {{"epochs", arr}};
}

struct TrainOptions {
  unsigned threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  TrainHistory history;
};

// Mini-batches of whole graphs; each graph's mean node loss is weighted 1/B.
// The best checkpoint is the epoch with the lowest mean validation loss.
// Per-graph gradients are summed in batch index order, so results do not
// depend on the thread count.
inline TrainResult train_graphs(const std::vector<SceneGraph>& train_set, const std::vector<SceneGraph>& val_set,
                                const ModelConfig& config, const TrainOptions& options = {}) {
  config.validate();
  if (train_set.empty()) throw InputError("training set is empty");

  std::vector<GraphTensors> tensors;
  tensors.reserve(train_set.size());
  for (const auto& g : train_set) tensors.push_back(encode_graph(g, config));

  ModelParams params = ModelParams::init(config, config.seed);
  const auto param_tensors = params.tensors();
  std::array<const Dense*, kTensorCount> const_view{};
  std::copy(param_tensors.begin(), param_tensors.end(), const_view.begin());
  AdamState adam = AdamState::for_shapes(const_view, AdamConfig{config.lr});

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<ModelParams> slot_grads(std::min(batch_size, train_set.size()), ModelParams::zeros(config));
  std::vector<LossValue> slot_loss(slot_grads.size());
  ModelParams grads = ModelParams::zeros(config);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(derive_seed(config.seed, "shuffle"));

  TrainResult result;
  result.best_checkpoint = {config, params, {0, 0, 0, 0, "best-validation"}};
  bool have_best = false;
  double best_loss = 0.0;
  const unsigned threads = std::max(1u, options.threads);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(shuffle_rng);
      std::swap(order[i], order[j]);
    }
    LossValue epoch_sum;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += batch_size, ++batch) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      const double scale = 1.0 / static_cast<double>(count);
      auto work = [&](std::size_t s) {
        slot_grads[s].set_zero();
        const std::size_t gi = order[start + s];
        slot_loss[s] = loss_and_gradients(train_set[gi], tensors[gi], params, config, scale, slot_grads[s]);
      };
      if (threads == 1 || count == 1) {
        for (std::size_t s = 0; s < count; ++s) work(s);
      } else {
        std::vector<std::thread> pool;
        const unsigned used = static_cast<unsigned>(std::min<std::size_t>(threads, count));
        for (unsigned t = 0; t < used; ++t)
          pool.emplace_back([&, t] {
            for (std::size_t s = t; s < count; s += used) work(s);
          });
        for (auto& th : pool) th.join();
      }
      grads.set_zero();
      for (std::size_t s = 0; s < count; ++s) {
        if (!std::isfinite(slot_loss[s].total)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch) + " (graph '" + train_set[order[start + s]].frame_id + "')");
        }
        grads += slot_grads[s];
        epoch_sum.total += slot_loss[s].total;
        epoch_sum.bce += slot_loss[s].bce;
        epoch_sum.ce += slot_loss[s].ce;
      }
      const auto gt = grads.tensors();
      std::array<const Dense*, kTensorCount> grad_view{};
      std::copy(gt.begin(), gt.end(), grad_view.begin());
      try {
        adam_step(param_tensors, grad_view, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(train_set.size());
    rec.loss = epoch_sum.total / n;
    rec.bce = epoch_sum.bce / n;
    rec.ce = epoch_sum.ce / n;
    if (!val_set.empty()) {
      const EvalReport vr = evaluate_nodes(val_set, params, config);
      rec.val_validity_accuracy = vr.validity_accuracy;
      rec.val_label_f1 = vr.labels.f1;
      double val_loss = 0.0;
      for (const auto& g : val_set) val_loss += graph_loss(g, params, config).total;
      rec.val_loss = val_loss / static_cast<double>(val_set.size());
      if (!have_best || rec.val_loss < best_loss) {
        have_best = true;
        best_loss = rec.val_loss;
        result.best_checkpoint = {config, params, {epoch, rec.loss, rec.bce, rec.ce, "best-validation"}};
      }
    }
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  TrainingMeta meta;
  meta.epochs_run = config.epochs;
  if (!result.history.epochs.empty()) {
    const auto& last = result.history.epochs.back();
    meta.final_loss = last.loss;
    meta.final_bce = last.bce;
    meta.final_ce = last.ce;
  }
  result.final_checkpoint = {config, params, meta};
  if (!have_best) {
    result.best_checkpoint = result.final_checkpoint;
    result.best_checkpoint.meta.selection = "best-validation";
  }
  return result;
}

struct Experiment {
  DatasetSplit split;
  std::vector<SceneGraph> train_graphs;
  std::vector<SceneGraph> val_graphs;
  std::vector<SceneGraph> test_graphs;
  TrainResult training;
  EvalReport test_report;
};

// Frame-level split, clean + corrupted twins per split, training, and
// node-level evaluation of the final model on the test twins.
inline Experiment run_experiment(const std::vector<Frame>& frames, const ModelConfig& config,
                                 const TrainOptions& options = {}) {
  config.validate();
  Experiment ex;
  ex.split = split_dataset(frames, derive_seed(config.seed, "split"));
  ex.train_graphs = build_twin_graphs(ex.split.train, config);
  ex.val_graphs = build_twin_graphs(ex.split.val, config);
  ex.test_graphs = build_twin_graphs(ex.split.test, config);
  ex.training = train_graphs(ex.train_graphs, ex.val_graphs, config, options);
  if (!ex.test_graphs.empty())
    ex.test_report = evaluate_nodes(ex.test_graphs, ex.training.final_checkpoint.params, config);
  return ex;
}

}  // namespace sgnn
