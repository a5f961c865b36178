#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgnn/atomic_file.hpp"
#include "sgnn/error.hpp"
#include "sgnn/nn.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

enum class LabelEncoding { scalar, onehot };

inline const char* to_string(LabelEncoding e) noexcept { return e == LabelEncoding::scalar ? "scalar" : "onehot"; }

inline LabelEncoding parse_label_encoding(std::string_view text) {
  if (text == "scalar") return LabelEncoding::scalar;
  if (text == "onehot") return LabelEncoding::onehot;
  throw InputError("unknown label encoding '" + std::string(text) + "' (expected scalar | onehot)");
}

struct ModelConfig {
  int n_classes = 39;
  int hidden_dim = 64;
  NeighborhoodSize k = NeighborhoodSize::of(5);
  int rho = 1;
  double jitter_sigma = 0.01;
  LabelEncoding label_encoding = LabelEncoding::onehot;
  MessageMode msg_mode = MessageMode::nodes_and_edges;
  double lambda_valid = 1.0;
  double lambda_label = 1.0;
  double tau = 0.5;
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool label_loss_invalid_only = false;

  void validate() const {
    if (n_classes < 2) throw InputError("n_classes must be >= 2");
    if (hidden_dim < 1) throw InputError("hidden_dim must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must lie in (0, 1)");
    if (!(lambda_valid >= 0.0) || !(lambda_label >= 0.0)) throw InputError("loss weights must be >= 0");
    if (!(lr >= 0.0)) throw InputError("lr must be >= 0");
    if (epochs < 0) throw InputError("epochs must be >= 0");
    if (batch_size < 1) throw InputError("batch size must be >= 1");
    if (rho < 0) throw InputError("rho must be >= 0");
    if (!(jitter_sigma >= 0.0)) throw InputError("jitter sigma must be >= 0");
    if (!k.all && k.k == 0) throw InputError("k must be >= 1");
  }

  std::size_t input_dim() const noexcept {
    return label_encoding == LabelEncoding::scalar ? kNodeFeatureDim
                                                   : kNodeFeatureDim - 1 + static_cast<std::size_t>(n_classes);
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_classes", c.n_classes},
          {"hidden_dim", c.hidden_dim},
          {"k", c.k.to_string()},
          {"rho", c.rho},
          {"jitter_sigma", c.jitter_sigma},
          {"label_encoding", to_string(c.label_encoding)},
          {"msg_mode", to_string(c.msg_mode)},
          {"lambda_valid", c.lambda_valid},
          {"lambda_label", c.lambda_label},
          {"tau", c.tau},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"label_loss_invalid_only", c.label_loss_invalid_only}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_classes = j.at("n_classes").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.k = NeighborhoodSize::parse(j.at("k").get<std::string>());
  c.rho = j.at("rho").get<int>();
  c.jitter_sigma = j.at("jitter_sigma").get<double>();
  c.label_encoding = parse_label_encoding(j.at("label_encoding").get<std::string>());
  c.msg_mode = parse_message_mode(j.at("msg_mode").get<std::string>());
  c.lambda_valid = j.at("lambda_valid").get<double>();
  c.lambda_label = j.at("lambda_label").get<double>();
  c.tau = j.at("tau").get<double>();
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.label_loss_invalid_only = j.at("label_loss_invalid_only").get<bool>();
  c.validate();
  return c;
}

// Edge inputs seen by learned layers: angle scaled to [-1, 1], size ratio
// compressed with log1p.
inline std::array<double, kEdgeInputDim> normalize_edge_features(const EdgeFeatures& e) noexcept {
  const double r = e[5];
  const double log_ratio = r >= 0.0 ? std::log1p(r) : -std::log1p(-r);
  return {e[0], e[1], e[2], e[3] / 180.0, e[4], log_ratio};
}

inline GraphTensors encode_graph(const SceneGraph& g, const ModelConfig& config) {
  if (g.n_classes != config.n_classes) {
    throw IncompatibleModel("graph built for " + std::to_string(g.n_classes) + " classes, model expects " +
                            std::to_string(config.n_classes));
  }
  const std::size_t n = g.node_count();
  GraphTensors t;
  t.node_inputs = Dense(n, config.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = g.node_features[i];
    auto row = t.node_inputs.row(i);
    if (config.label_encoding == LabelEncoding::scalar) {
      std::copy(f.begin(), f.end(), row.begin());
    } else {
      row[static_cast<std::size_t>(g.current_labels[i])] = 1.0;
      std::copy(f.begin() + 1, f.end(), row.begin() + config.n_classes);
    }
  }
  t.offsets = g.offsets;
  t.neighbors.reserve(g.edge_count());
  t.edge_inputs = Dense(g.edge_count(), kEdgeInputDim);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    t.neighbors.push_back(g.edges[e].dst);
    const auto ne = normalize_edge_features(g.edge_features[e]);
    std::copy(ne.begin(), ne.end(), t.edge_inputs.row(e).begin());
  }
  return t;
}

inline constexpr std::size_t kTensorCount = 10;

// Tensor order used for optimisation and checkpoints.
inline constexpr std::array<const char*, kTensorCount> kTensorNames = {
    "sage1.w_self", "sage1.w_neigh", "sage1.bias", "sage2.w_self", "sage2.w_neigh",
    "sage2.bias",   "valid.w",       "valid.bias", "label.w",      "label.bias"};

struct ModelParams {
  SageLayer sage1;
  SageLayer sage2;
  LinearHead valid_head;
  LinearHead label_head;

  static ModelParams zeros(const ModelConfig& c) {
    const auto in = c.input_dim();
    const auto h = static_cast<std::size_t>(c.hidden_dim);
    return {SageLayer::zeros(in, message_dim(in, c.msg_mode), h),
            SageLayer::zeros(h, message_dim(h, c.msg_mode), h), LinearHead::zeros(h, 1),
            LinearHead::zeros(h, static_cast<std::size_t>(c.n_classes))};
  }

  static ModelParams init(const ModelConfig& c, std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, "init"));
    const auto in = c.input_dim();
    const auto h = static_cast<std::size_t>(c.hidden_dim);
    ModelParams p;
    p.sage1 = SageLayer::glorot(in, message_dim(in, c.msg_mode), h, rng);
    p.sage2 = SageLayer::glorot(h, message_dim(h, c.msg_mode), h, rng);
    p.valid_head = LinearHead::glorot(h, 1, rng);
    p.label_head = LinearHead::glorot(h, static_cast<std::size_t>(c.n_classes), rng);
    return p;
  }

  std::array<Dense*, kTensorCount> tensors() noexcept {
    return {&sage1.w_self, &sage1.w_neigh, &sage1.bias, &sage2.w_self, &sage2.w_neigh,
            &sage2.bias,   &valid_head.w,  &valid_head.bias, &label_head.w, &label_head.bias};
  }
  std::array<const Dense*, kTensorCount> tensors() const noexcept {
    return {&sage1.w_self, &sage1.w_neigh, &sage1.bias, &sage2.w_self, &sage2.w_neigh,
            &sage2.bias,   &valid_head.w,  &valid_head.bias, &label_head.w, &label_head.bias};
  }

  void set_zero() noexcept {
    for (Dense* t : tensors()) t->set_zero();
  }

  ModelParams& operator+=(const ModelParams& o) noexcept {
    auto mine = tensors();
    auto theirs = o.tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i) *mine[i] += *theirs[i];
    return *this;
  }

  bool operator==(const ModelParams& o) const noexcept {
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i)
      if (!(*a[i] == *b[i])) return false;
    return true;
  }
};

struct ForwardPass {
  SageCache layer1;
  SageCache layer2;
  Dense h1;
  Dense h2;
  HeadOutputs heads;
};

inline ForwardPass forward_pass(const GraphTensors& t, const ModelParams& p, const ModelConfig& c) {
  if (t.node_inputs.cols() != p.sage1.in_dim() || p.label_head.out_dim() != static_cast<std::size_t>(c.n_classes)) {
    throw IncompatibleModel("graph encoding does not match model input width");
  }
  ForwardPass fp;
  fp.h1 = sage_forward(p.sage1, t.node_inputs, t, c.msg_mode, &fp.layer1);
  fp.h2 = sage_forward(p.sage2, fp.h1, t, c.msg_mode, &fp.layer2);
  fp.heads = heads_forward(fp.h2, p.valid_head, p.label_head);
  return fp;
}

struct ModelOutput {
  std::vector<double> validity_prob;
  Dense class_probs;
};

inline ModelOutput model_forward(const SceneGraph& g, const ModelParams& p, const ModelConfig& c) {
  const GraphTensors t = encode_graph(g, c);
  ForwardPass fp = forward_pass(t, p, c);
  return {std::move(fp.heads.validity_prob), softmax_rows(fp.heads.class_logits)};
}

struct NodePrediction {
  bool is_invalid = false;
  int corrected_label = 0;
  double confidence = 0.0;
  double validity_prob = 1.0;
};

inline std::vector<NodePrediction> predictions_from(const ModelOutput& out, double tau) {
  std::vector<NodePrediction> preds(out.validity_prob.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto row = out.class_probs.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    preds[i].validity_prob = out.validity_prob[i];
    preds[i].is_invalid = out.validity_prob[i] < tau;
    preds[i].corrected_label = static_cast<int>(best);
    preds[i].confidence = row[best];
  }
  return preds;
}

inline std::vector<NodePrediction> predict(const SceneGraph& g, const ModelParams& p, const ModelConfig& c) {
  return predictions_from(model_forward(g, p, c), c.tau);
}

struct NodeLossWeights {
  std::vector<double> bce;
  std::vector<double> ce;
};

// Per-node weights realising the chosen reduction. With
// label_loss_invalid_only the label term averages over invalid nodes only.
inline NodeLossWeights node_loss_weights(const SceneGraph& g, const ModelConfig& c, Reduction reduction) {
  const std::size_t n = g.node_count();
  const double node_w = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  NodeLossWeights w{std::vector<double>(n, node_w), std::vector<double>(n, node_w)};
  if (c.label_loss_invalid_only) {
    std::size_t invalid = 0;
    for (auto v : g.validity) invalid += v ? 0 : 1;
    const double inv_w = reduction == Reduction::mean && invalid > 0 ? 1.0 / static_cast<double>(invalid) : 1.0;
    for (std::size_t i = 0; i < n; ++i) w.ce[i] = g.validity[i] ? 0.0 : inv_w;
  }
  return w;
}

// Multi-task loss of one graph without gradients.
inline LossValue graph_loss(const SceneGraph& g, const ModelParams& p, const ModelConfig& c,
                            Reduction reduction = Reduction::mean) {
  const GraphTensors t = encode_graph(g, c);
  const ForwardPass fp = forward_pass(t, p, c);
  const NodeLossWeights w = node_loss_weights(g, c, reduction);
  return multitask_loss_weighted(fp.heads.validity_prob, fp.heads.class_logits, g.validity, g.original_labels,
                                 c.lambda_valid, c.lambda_label, w.bce, w.ce);
}

// Forward + backward on one graph. Per-node losses are reduced as `reduction`
// and multiplied by `scale` before accumulating gradients into `grads`.
// The returned LossValue is the reduced, unscaled loss of this graph.
inline LossValue loss_and_gradients(const SceneGraph& g, const GraphTensors& t, const ModelParams& p,
                                    const ModelConfig& c, double scale, ModelParams& grads,
                                    Reduction reduction = Reduction::mean) {
  const std::size_t n = g.node_count();
  ForwardPass fp = forward_pass(t, p, c);
  NodeLossWeights w = node_loss_weights(g, c, reduction);
  const LossValue unscaled = multitask_loss_weighted(fp.heads.validity_prob, fp.heads.class_logits, g.validity,
                                                     g.original_labels, c.lambda_valid, c.lambda_label, w.bce, w.ce);
  for (auto& v : w.bce) v *= scale;
  for (auto& v : w.ce) v *= scale;
  LossGrad lg;
  multitask_loss_weighted(fp.heads.validity_prob, fp.heads.class_logits, g.validity, g.original_labels,
                          c.lambda_valid, c.lambda_label, w.bce, w.ce, &lg);

  Dense dz(n, 1);
  for (std::size_t i = 0; i < n; ++i) dz(i, 0) = lg.validity_logit[i];
  Dense dh2(n, static_cast<std::size_t>(c.hidden_dim));
  linear_backward(p.valid_head, fp.h2, dz, grads.valid_head, &dh2);
  linear_backward(p.label_head, fp.h2, lg.class_logits, grads.label_head, &dh2);
  Dense dh1;
  sage_backward(p.sage2, fp.layer2, t, c.msg_mode, dh2, grads.sage2, &dh1);
  sage_backward(p.sage1, fp.layer1, t, c.msg_mode, dh1, grads.sage1, nullptr);
  return unscaled;
}

struct TrainingMeta {
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_bce = 0.0;
  double final_ce = 0.0;
  std::string selection = "final";  // "final" or "best-validation"

  bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  TrainingMeta meta;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'G', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_uint(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
  return v;
}

}  // namespace detail

// Layout: 8-byte magic "SGNNCKPT", u32 format version, u64 header length,
// UTF-8 JSON header {config, meta, tensors:[{name, rows, cols}]}, then every
// tensor of kTensorNames in order as row-major little-endian float64.
inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = to_json(ck.config);
  header["meta"] = {{"epochs_run", ck.meta.epochs_run},
                    {"final_loss", ck.meta.final_loss},
                    {"final_bce", ck.meta.final_bce},
                    {"final_ce", ck.meta.final_ce},
                    {"selection", ck.meta.selection}};
  nlohmann::json tensors = nlohmann::json::array();
  const auto ts = ck.params.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i)
    tensors.push_back({{"name", kTensorNames[i]}, {"rows", ts[i]->rows()}, {"cols", ts[i]->cols()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out += text;
  for (const Dense* t : ts)
    for (double v : t->values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  using Kind = CheckpointError::Kind;
  constexpr std::size_t prefix = sizeof(kCheckpointMagic) + 4 + 8;
  if (bytes.size() < prefix) throw CheckpointError(Kind::corrupt, "file too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError(Kind::corrupt, "bad magic");
  const auto version = static_cast<std::uint32_t>(detail::get_uint(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version, "file version " + std::to_string(version) + ", supported " +
                                             std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = detail::get_uint(bytes, 12, 8);
  if (header_len > bytes.size() - prefix) throw CheckpointError(Kind::corrupt, "truncated header");

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, header_len));
    ck.config = model_config_from_json(header.at("config"));
    const auto& m = header.at("meta");
    ck.meta.epochs_run = m.at("epochs_run").get<int>();
    ck.meta.final_loss = m.at("final_loss").get<double>();
    ck.meta.final_bce = m.at("final_bce").get<double>();
    ck.meta.final_ce = m.at("final_ce").get<double>();
    ck.meta.selection = m.at("selection").get<std::string>();
    if (!header.at("tensors").is_array()) throw std::runtime_error("tensor list is not an array");
    for (const auto& d : header.at("tensors")) {
      d.at("name").get<std::string>();
      d.at("rows").get<std::size_t>();
      d.at("cols").get<std::size_t>();
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::corrupt, std::string("unreadable header: ") + e.what());
  }

  ck.params = ModelParams::zeros(ck.config);
  auto ts = ck.params.tensors();
  const auto& listed = header.at("tensors");
  if (listed.size() != kTensorCount)
    throw CheckpointError(Kind::dimension, "expected " + std::to_string(kTensorCount) + " tensors");
  std::size_t payload = 0;
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const auto& d = listed[i];
    const auto name = d.at("name").get<std::string>();
    const auto rows = d.at("rows").get<std::size_t>();
    const auto cols = d.at("cols").get<std::size_t>();
    if (name != kTensorNames[i] || rows != ts[i]->rows() || cols != ts[i]->cols()) {
      throw CheckpointError(Kind::dimension, "tensor " + std::string(kTensorNames[i]) + " expected " +
                                                 std::to_string(ts[i]->rows()) + "x" + std::to_string(ts[i]->cols()) +
                                                 ", found " + name + " " + std::to_string(rows) + "x" +
                                                 std::to_string(cols));
    }
    payload += rows * cols * 8;
  }
  const std::size_t body = prefix + header_len;
  if (bytes.size() != body + payload) {
    throw CheckpointError(Kind::corrupt, "payload is " + std::to_string(bytes.size() - body) + " bytes, expected " +
                                             std::to_string(payload));
  }
  std::size_t pos = body;
  for (Dense* t : ts) {
    for (double& v : t->values()) {
      v = std::bit_cast<double>(detail::get_uint(bytes, pos, 8));
      pos += 8;
    }
    if (!t->all_finite()) throw CheckpointError(Kind::non_finite, "non-finite parameter values");
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  atomic_write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const InputError& e) {
    throw CheckpointError(CheckpointError::Kind::io, e.what());
  }
  return deserialize_checkpoint(bytes);
}

}  // namespace sgnn
