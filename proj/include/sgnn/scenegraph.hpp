#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgnn/error.hpp"
#include "sgnn/geometry.hpp"

namespace sgnn {

struct SceneObject {
  int label = 0;
  BoundingBox bbox;

  bool operator==(const SceneObject&) const = default;
};

// One egocentric view. Object order defines node indices.
struct Frame {
  std::string frame_id;
  std::vector<SceneObject> objects;

  bool operator==(const Frame&) const = default;
};

// A frame plus per-object ground truth: validity (true = unmodified) and the
// label before any corruption.
struct AnnotatedFrame {
  Frame frame;
  std::vector<std::uint8_t> validity;
  std::vector<int> original_labels;

  static AnnotatedFrame clean(Frame f) {
    AnnotatedFrame a;
    a.validity.assign(f.objects.size(), 1);
    a.original_labels.reserve(f.objects.size());
    for (const auto& o : f.objects) a.original_labels.push_back(o.label);
    a.frame = std::move(f);
    return a;
  }

  bool operator==(const AnnotatedFrame&) const = default;
};

// Neighbourhood size for k-NN construction; `all` connects every ordered pair.
struct NeighborhoodSize {
  std::size_t k = 5;
  bool all = false;

  static NeighborhoodSize of(std::size_t k) { return {k, false}; }
  static NeighborhoodSize every() { return {0, true}; }

  std::size_t effective(std::size_t n_nodes) const noexcept {
    const std::size_t others = n_nodes == 0 ? 0 : n_nodes - 1;
    return all ? others : std::min(k, others);
  }

  std::string to_string() const { return all ? std::string("all") : std::to_string(k); }

  static NeighborhoodSize parse(std::string_view text) {
    if (text == "all") return every();
    std::size_t value = 0;
    if (text.empty()) throw InputError("neighbourhood size must be a positive integer or 'all'");
    for (char c : text) {
      if (c < '0' || c > '9') throw InputError("neighbourhood size must be a positive integer or 'all', got '" + std::string(text) + "'");
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    if (value == 0) throw InputError("neighbourhood size must be at least 1");
    return of(value);
  }

  bool operator==(const NeighborhoodSize&) const = default;
};

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;

  auto operator<=>(const Edge&) const = default;
};

inline constexpr std::size_t kNodeFeatureDim = 5;
inline constexpr std::size_t kEdgeFeatureDim = 6;

using NodeFeatures = std::array<double, kNodeFeatureDim>;
using EdgeFeatures = std::array<double, kEdgeFeatureDim>;

// Spatial graph of one frame. Edges are directed, sorted by (src, dst) and
// closed under reversal; edge_features[e] describes edges[e] from src to dst.
struct SceneGraph {
  std::string frame_id;
  bool negative = false;  // built from a corrupted copy
  int n_classes = 0;
  std::vector<BoundingBox> boxes;
  std::vector<NodeFeatures> node_features;
  std::vector<Edge> edges;
  std::vector<EdgeFeatures> edge_features;
  std::vector<std::size_t> offsets;  // CSR over edges by src, size N+1
  std::vector<std::uint8_t> validity;
  std::vector<int> original_labels;
  std::vector<int> current_labels;

  std::size_t node_count() const noexcept { return node_features.size(); }
  std::size_t edge_count() const noexcept { return edges.size(); }

  bool operator==(const SceneGraph&) const = default;
};

// [label / (n_classes - 1), x_center, y_center, w, h]
inline NodeFeatures build_node_features(const SceneObject& obj, int n_classes) {
  if (n_classes < 2) throw InputError("n_classes must be at least 2");
  const auto& b = obj.bbox;
  return {static_cast<double>(obj.label) / static_cast<double>(n_classes - 1), b.center_x(),
          b.center_y(), b.width(), b.height()};
}

// Directed k-NN by center distance (ties to lower index), then symmetrized.
inline std::vector<Edge> knn_edges(const std::vector<SceneObject>& objects, NeighborhoodSize k) {
  const std::size_t n = objects.size();
  std::vector<Edge> edges;
  if (n < 2) return edges;
  const std::size_t take = k.effective(n);

  std::vector<std::pair<double, std::uint32_t>> order;
  order.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    const double xi = objects[i].bbox.center_x();
    const double yi = objects[i].bbox.center_y();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = objects[j].bbox.center_x() - xi;
      const double dy = objects[j].bbox.center_y() - yi;
      order.emplace_back(dx * dx + dy * dy, static_cast<std::uint32_t>(j));
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
    for (std::size_t r = 0; r < take; ++r) {
      edges.push_back({static_cast<std::uint32_t>(i), order[r].second});
      edges.push_back({order[r].second, static_cast<std::uint32_t>(i)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline void validate_frame(const Frame& frame, int n_classes) {
  for (std::size_t i = 0; i < frame.objects.size(); ++i) {
    const auto& o = frame.objects[i];
    if (o.label < 0 || o.label >= n_classes) {
      throw InputError("frame '" + frame.frame_id + "' object " + std::to_string(i) + ": class_id " +
                       std::to_string(o.label) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    if (!o.bbox.valid()) {
      throw InputError("frame '" + frame.frame_id + "' object " + std::to_string(i) + ": invalid bbox");
    }
  }
}

inline SceneGraph build_graph(const AnnotatedFrame& annotated, NeighborhoodSize k, int n_classes) {
  const Frame& frame = annotated.frame;
  if (frame.objects.empty()) throw InputError("frame '" + frame.frame_id + "' has no objects");
  if (n_classes < 2) throw InputError("n_classes must be at least 2");
  validate_frame(frame, n_classes);
  const std::size_t n = frame.objects.size();
  if (annotated.validity.size() != n || annotated.original_labels.size() != n) {
    throw InputError("frame '" + frame.frame_id + "': annotation length does not match object count");
  }

  SceneGraph g;
  g.frame_id = frame.frame_id;
  g.n_classes = n_classes;
  g.validity = annotated.validity;
  g.original_labels = annotated.original_labels;
  g.negative = std::any_of(g.validity.begin(), g.validity.end(), [](std::uint8_t v) { return v == 0; });
  g.boxes.reserve(n);
  g.node_features.reserve(n);
  g.current_labels.reserve(n);
  for (const auto& o : frame.objects) {
    g.boxes.push_back(o.bbox);
    g.node_features.push_back(build_node_features(o, n_classes));
    g.current_labels.push_back(o.label);
  }
  for (int label : g.original_labels) {
    if (label < 0 || label >= n_classes) {
      throw InputError("frame '" + frame.frame_id + "': original_label outside class range");
    }
  }

  g.edges = knn_edges(frame.objects, k);
  g.edge_features.reserve(g.edges.size());
  g.offsets.assign(n + 1, 0);
  for (const auto& e : g.edges) {
    g.edge_features.push_back(pairwise_geometry(g.boxes[e.src], g.boxes[e.dst]).as_array());
    ++g.offsets[e.src + 1];
  }
  std::partial_sum(g.offsets.begin(), g.offsets.end(), g.offsets.begin());
  return g;
}

inline SceneGraph build_graph(const Frame& frame, NeighborhoodSize k, int n_classes) {
  return build_graph(AnnotatedFrame::clean(frame), k, n_classes);
}

}  // namespace sgnn
