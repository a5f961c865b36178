#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgnn/atomic_file.hpp"
#include "sgnn/correct.hpp"
#include "sgnn/corrupt.hpp"
#include "sgnn/error.hpp"
#include "sgnn/eval.hpp"
#include "sgnn/io.hpp"
#include "sgnn/model.hpp"
#include "sgnn/synth.hpp"
#include "sgnn/train.hpp"

namespace sgnn {

namespace cli_detail {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline fs::path sibling(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

inline std::vector<std::string> frame_ids(const std::vector<Frame>& frames) {
  std::vector<std::string> ids;
  ids.reserve(frames.size());
  for (const auto& f : frames) ids.push_back(f.frame_id);
  return ids;
}

}  // namespace cli_detail

// Runs one CLI invocation. Exit status: 0 success, 1 input error,
// 2 internal or numerical failure.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  using cli_detail::json;
  namespace fs = std::filesystem;

  CLI::App app{"Spatial scene-graph anomaly detection and label correction", "sgnn"};
  std::uint64_t seed = 0;
  bool strict = false;
  bool quiet = false;
  unsigned threads = 1;
  app.add_option("--seed", seed, "Master seed; every stage derives its own stream from it");
  app.add_flag("--strict", strict, "Reject unknown fields in input files");
  app.add_flag("--quiet", quiet, "Suppress human-readable output on stderr");
  app.add_option("--threads", threads, "Worker threads for training")->check(CLI::Range(1u, 256u));
  app.require_subcommand(1);
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a static-layout dataset");
  int synth_classes = 39;
  std::size_t synth_frames = 2000;
  RenderConfig render;
  fs::path synth_out;
  std::string synth_template;
  synth->add_option("--classes", synth_classes, "Number of object classes")->check(CLI::Range(2, kMaxTemplateClasses));
  synth->add_option("--frames", synth_frames, "Number of frames");
  synth->add_option("--dropout", render.dropout, "Per-object occlusion probability in [0, 0.5]");
  synth->add_option("--zoom-min", render.zoom_min, "Minimum view zoom");
  synth->add_option("--zoom-max", render.zoom_max, "Maximum view zoom");
  synth->add_option("--out", synth_out, "Frames JSONL output")->required();
  synth->add_option("--template", synth_template, "Template JSON output (default <out>.template.json)");

  // corrupt
  auto* corrupt = app.add_subcommand("corrupt", "Create corrupted copies of frames");
  fs::path corrupt_in, corrupt_out, corrupt_dets;
  CorruptionConfig corruption;
  bool corrupt_twins = false;
  DetectorSimulation detector;
  corrupt->add_option("--data", corrupt_in, "Frames JSONL input")->required();
  corrupt->add_option("--out", corrupt_out, "Annotated frames JSONL output")->required();
  corrupt->add_option("--rho", corruption.rho, "Maximum objects modified per frame")->check(CLI::NonNegativeNumber);
  corrupt->add_option("--jitter", corruption.jitter_sigma, "Gaussian corner noise std")->check(CLI::NonNegativeNumber);
  corrupt->add_flag("--twins", corrupt_twins, "Emit a clean copy before every corrupted frame");
  corrupt->add_option("--detections-out", corrupt_dets,
                      "Also write simulated detector output (label swaps, jitter, uniform confidences)");
  corrupt->add_option("--conf-min", detector.confidence_min, "Simulated detector minimum confidence");
  corrupt->add_option("--conf-max", detector.confidence_max, "Simulated detector maximum confidence");

  // train
  auto* train = app.add_subcommand("train", "Train the multi-task model on clean frames");
  fs::path train_data, train_out;
  ModelConfig config;
  std::string k_text = "5";
  std::string msg_mode_text = to_string(config.msg_mode);
  std::string encoding_text = to_string(config.label_encoding);
  std::string label_loss = "all";
  train->add_option("--data", train_data, "Clean frames JSONL")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--k", k_text, "Neighbourhood size (integer or 'all')");
  train->add_option("--rho", config.rho, "Maximum label swaps per negative sample");
  train->add_option("--jitter", config.jitter_sigma, "Corner jitter std for negative samples");
  train->add_option("--epochs", config.epochs, "Training epochs");
  train->add_option("--lr", config.lr, "Adam learning rate");
  train->add_option("--batch", config.batch_size, "Graphs per mini-batch");
  train->add_option("--hidden", config.hidden_dim, "Hidden width");
  train->add_option("--tau", config.tau, "Validity threshold");
  train->add_option("--lambda-valid", config.lambda_valid, "Validity loss weight");
  train->add_option("--lambda-label", config.lambda_label, "Label loss weight");
  train->add_option("--msg-mode", msg_mode_text, "nodes | nodes+edges");
  train->add_option("--label-encoding", encoding_text, "scalar | onehot");
  train->add_option("--label-loss", label_loss, "Nodes receiving the label loss: all | invalid")
      ->check(CLI::IsMember({"all", "invalid"}));

  // eval
  auto* eval = app.add_subcommand("eval", "Node-level metrics of a checkpoint on annotated frames");
  fs::path eval_ckpt, eval_data, eval_out, eval_csv;
  std::string eval_k;
  std::optional<double> eval_tau;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--data", eval_data, "Annotated frames JSONL (validity, original_label)")->required();
  eval->add_option("--out", eval_out, "Report JSON output");
  eval->add_option("--confusion-csv", eval_csv, "Confusion matrix CSV output");
  eval->add_option("--k", eval_k, "Override neighbourhood size");
  eval->add_option("--tau", eval_tau, "Override validity threshold");

  // correct
  auto* correct = app.add_subcommand("correct", "Relabel detections the model flags as invalid");
  fs::path corr_ckpt, corr_dets, corr_out, corr_audit;
  std::string corr_k;
  std::optional<double> corr_tau;
  correct->add_option("--checkpoint", corr_ckpt, "Checkpoint path")->required();
  correct->add_option("--detections", corr_dets, "Detections JSONL")->required();
  correct->add_option("--out", corr_out, "Corrected detections JSONL")->required();
  correct->add_option("--audit", corr_audit, "Corrections audit JSONL (default <out>.audit.jsonl)");
  correct->add_option("--k", corr_k, "Override neighbourhood size");
  correct->add_option("--tau", corr_tau, "Override validity threshold");

  // map
  auto* map = app.add_subcommand("map", "mAP@50 of detections against ground-truth frames");
  fs::path map_dets, map_gt, map_out;
  map->add_option("--detections", map_dets, "Detections JSONL")->required();
  map->add_option("--gt", map_gt, "Ground-truth frames JSONL")->required();
  map->add_option("--out", map_out, "Report JSON output");

  if (argc <= 1) {
    err << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  auto emit = [&](const json& summary) { out << summary.dump() << "\n"; };

  try {
    if (*synth) {
      const LayoutTemplate tmpl = gen_template(synth_classes, derive_seed(seed, "synth-template"));
      const auto frames = render_views(tmpl, synth_frames, render, derive_seed(seed, "synth-views"));
      atomic_write_file(synth_out, write_frames_text(frames_data(synth_classes, frames), false));
      const fs::path tpath = synth_template.empty() ? cli_detail::sibling(synth_out, ".template.json") : fs::path(synth_template);
      atomic_write_file(tpath, to_json(tmpl).dump(2) + "\n");
      std::size_t objects = 0;
      for (const auto& f : frames) objects += f.objects.size();
      emit({{"command", "synth"}, {"frames", frames.size()}, {"objects", objects}, {"n_classes", synth_classes},
            {"out", synth_out.string()}, {"template", tpath.string()}});
      return 0;
    }

    if (*corrupt) {
      const FramesData input = parse_frames(corrupt_in, strict);
      corruption.seed = derive_seed(seed, "corrupt");
      corruption.validate();
      const auto frames = input.plain_frames();
      FramesData result;
      result.n_classes = input.n_classes;
      result.frames = corrupt_twins ? with_negative_twins(frames, input.n_classes, corruption)
                                    : corrupt_frames(frames, input.n_classes, corruption);
      if (corrupt_twins) {
        // Twins share a frame_id in memory; on disk they need distinct ids.
        for (std::size_t i = 1; i < result.frames.size(); i += 2) result.frames[i].frame.frame_id += "#neg";
      }
      atomic_write_file(corrupt_out, write_frames_text(result, true));
      std::size_t invalid = 0;
      for (const auto& a : result.frames)
        for (auto v : a.validity) invalid += v ? 0 : 1;
      json summary = {{"command", "corrupt"}, {"frames", result.frames.size()}, {"invalid_nodes", invalid},
                      {"out", corrupt_out.string()}};
      if (!corrupt_dets.empty()) {
        detector.rho = corruption.rho;
        detector.jitter_sigma = corruption.jitter_sigma;
        detector.seed = derive_seed(seed, "detector");
        if (!(detector.confidence_min >= 0.0 && detector.confidence_min <= detector.confidence_max &&
              detector.confidence_max <= 1.0))
          throw InputError("confidence range must satisfy 0 <= min <= max <= 1");
        const auto dets = simulate_detector(frames, input.n_classes, detector);
        atomic_write_file(corrupt_dets, write_detections_text(dets));
        summary["detections"] = dets.size();
        summary["detections_out"] = corrupt_dets.string();
      }
      emit(summary);
      return 0;
    }

    if (*train) {
      const FramesData input = parse_frames(train_data, strict);
      config.n_classes = input.n_classes;
      config.k = NeighborhoodSize::parse(k_text);
      config.msg_mode = parse_message_mode(msg_mode_text);
      config.label_encoding = parse_label_encoding(encoding_text);
      config.label_loss_invalid_only = label_loss == "invalid";
      config.seed = derive_seed(seed, "train");
      config.validate();
      TrainOptions options;
      options.threads = threads;
      if (!quiet) {
        options.on_epoch = [&](const EpochRecord& e) {
          err << "epoch " << e.epoch << "  loss " << e.loss << "  bce " << e.bce << "  ce " << e.ce
              << "  val_acc " << e.val_validity_accuracy << "  val_f1 " << e.val_label_f1 << "\n";
        };
      }
      const Experiment ex = run_experiment(input.plain_frames(), config, options);
      save_checkpoint(ex.training.final_checkpoint, train_out);
      save_checkpoint(ex.training.best_checkpoint, cli_detail::sibling(train_out, ".best"));
      atomic_write_file(cli_detail::sibling(train_out, ".history.json"), to_json(ex.training.history).dump(2) + "\n");
      json split = {{"train", cli_detail::frame_ids(ex.split.train)},
                    {"val", cli_detail::frame_ids(ex.split.val)},
                    {"test", cli_detail::frame_ids(ex.split.test)}};
      atomic_write_file(cli_detail::sibling(train_out, ".split.json"), split.dump() + "\n");
      atomic_write_file(cli_detail::sibling(train_out, ".test.jsonl"),
                        write_frames_text(frames_data(input.n_classes, ex.split.test), false));
      json summary = {{"command", "train"},
                      {"epochs", config.epochs},
                      {"train_graphs", ex.train_graphs.size()},
                      {"checkpoint", train_out.string()}};
      if (!ex.training.history.epochs.empty()) {
        summary["first_epoch_loss"] = ex.training.history.epochs.front().loss;
        summary["final_loss"] = ex.training.history.epochs.back().loss;
      }
      if (!ex.test_graphs.empty()) {
        summary["test_validity_accuracy"] = ex.test_report.validity_accuracy;
        summary["test_label_f1"] = ex.test_report.labels.f1;
      }
      emit(summary);
      return 0;
    }

    if (*eval) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      ModelConfig c = ck.config;
      if (!eval_k.empty()) c.k = NeighborhoodSize::parse(eval_k);
      if (eval_tau) c.tau = *eval_tau;
      c.validate();
      const FramesData input = parse_frames(eval_data, strict);
      if (input.n_classes != c.n_classes) {
        throw IncompatibleModel("data declares " + std::to_string(input.n_classes) + " classes, checkpoint expects " +
                                std::to_string(c.n_classes));
      }
      std::vector<SceneGraph> graphs;
      for (const auto& a : input.frames) graphs.push_back(build_graph(a, c.k, c.n_classes));
      const EvalReport report = evaluate_nodes(graphs, ck.params, c);
      if (!eval_out.empty()) atomic_write_file(eval_out, to_json(report).dump(2) + "\n");
      if (!eval_csv.empty()) atomic_write_file(eval_csv, confusion_csv(report.labels));
      if (!quiet) err << format_table(report);
      json summary = {{"command", "eval"},
                      {"graphs", report.graphs},
                      {"nodes", report.nodes},
                      {"validity_accuracy", report.validity_accuracy},
                      {"label_accuracy", report.labels.accuracy},
                      {"weighted_precision", report.labels.precision},
                      {"weighted_recall", report.labels.recall},
                      {"weighted_f1", report.labels.f1},
                      {"evaluated_invalid", report.labels.evaluated}};
      if (report.labels.empty()) summary["note"] = "no invalid nodes evaluated";
      emit(summary);
      return 0;
    }

    if (*correct) {
      const Checkpoint ck = load_checkpoint(corr_ckpt);
      const auto dets = parse_detections(corr_dets, strict);
      std::optional<NeighborhoodSize> k;
      if (!corr_k.empty()) k = NeighborhoodSize::parse(corr_k);
      const CorrectionResult result = correct_detections(group_by_frame(dets), ck, k, corr_tau);
      atomic_write_file(corr_out, write_detections_text(result.flattened()));
      const fs::path audit = corr_audit.empty() ? cli_detail::sibling(corr_out, ".audit.jsonl") : corr_audit;
      atomic_write_file(audit, write_records_text(result.records));
      if (!quiet)
        for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      emit({{"command", "correct"},
            {"frames", result.frames.size()},
            {"detections", dets.size()},
            {"applied", result.applied},
            {"warnings", result.warnings.size()},
            {"out", corr_out.string()},
            {"audit", audit.string()}});
      return 0;
    }

    if (*map) {
      const auto dets = parse_detections(map_dets, strict);
      const FramesData gt = parse_frames(map_gt, strict);
      const MapResult result = map50(dets, gt.plain_frames());
      if (!map_out.empty()) atomic_write_file(map_out, to_json(result).dump(2) + "\n");
      if (!quiet) {
        for (const auto& [c, ap] : result.per_class_ap) err << "class " << c << "  AP50 " << ap << "\n";
        err << "mAP@50 " << result.map50 << "\n";
      }
      emit({{"command", "map"}, {"mAP50", result.map50}, {"classes", result.per_class_ap.size()},
            {"detections", dets.size()}});
      return 0;
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace sgnn
