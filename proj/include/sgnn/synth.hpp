#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgnn/error.hpp"
#include "sgnn/geometry.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

// A rigid wall of objects, one per class, in world coordinates [0,1]².
struct LayoutTemplate {
  int n_classes = 0;
  int grid = 0;
  std::uint64_t seed = 0;
  std::vector<BoundingBox> objects;  // indexed by class id

  bool operator==(const LayoutTemplate&) const = default;
};

inline constexpr int kMaxTemplateClasses = 64;

// Jittered grid: classes occupy distinct shuffled cells, each anchor moves at
// most a quarter cell from the cell centre (so anchors stay at least half a
// cell apart) and box sides are log-uniform in [0.3, 0.5] of a cell, keeping
// every box inside its own cell.
inline LayoutTemplate gen_template(int n_classes, std::uint64_t seed, int grid = 0) {
  if (n_classes < 2) throw InputError("template needs at least 2 classes");
  if (grid == 0) grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_classes)) - 1e-9));
  if (n_classes > kMaxTemplateClasses || n_classes > grid * grid) {
    throw InputError("n_classes " + std::to_string(n_classes) + " exceeds grid capacity");
  }
  LayoutTemplate t;
  t.n_classes = n_classes;
  t.grid = grid;
  t.seed = seed;
  Rng rng = make_rng(derive_seed(seed, "template"));
  std::vector<int> cells(static_cast<std::size_t>(grid * grid));
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = cells.size() - 1; i > 0; --i)
    std::swap(cells[i], cells[std::uniform_int_distribution<std::size_t>(0, i)(rng)]);

  const double cell = 1.0 / grid;
  std::uniform_real_distribution<double> offset(-0.25 * cell, 0.25 * cell);
  std::uniform_real_distribution<double> log_size(std::log(0.3), std::log(0.5));
  for (int c = 0; c < n_classes; ++c) {
    const int id = cells[static_cast<std::size_t>(c)];
    const double cx = (id % grid + 0.5) * cell + offset(rng);
    const double cy = (id / grid + 0.5) * cell + offset(rng);
    const double w = cell * std::exp(log_size(rng));
    const double h = cell * std::exp(log_size(rng));
    t.objects.push_back(BoundingBox::normalized(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h));
  }
  return t;
}

// Axis-aligned crop of the world that is stretched to the unit view.
struct Window {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 1.0;
  double height = 1.0;
};

struct RenderConfig {
  double zoom_min = 1.5;
  double zoom_max = 3.0;
  double dropout = 0.05;
  double min_visible_fraction = 0.3;
  int max_retries = 100;

  void validate() const {
    if (!(zoom_min >= 1.0 && zoom_max >= zoom_min)) throw InputError("zoom range must satisfy 1 <= min <= max");
    if (!(dropout >= 0.0 && dropout <= 0.5)) throw InputError("dropout must lie in [0, 0.5]");
    if (!(min_visible_fraction >= 0.0 && min_visible_fraction <= 1.0))
      throw InputError("visible fraction must lie in [0, 1]");
    if (max_retries < 1) throw InputError("retry budget must be positive");
  }
};

// Maps template boxes through the window. Objects with less than
// `min_visible_fraction` of their area inside the view are dropped, then each
// survivor is dropped with probability `dropout`. Object order is shuffled.
inline Frame render_window(const LayoutTemplate& t, const Window& w, double dropout, double min_visible_fraction,
                           Rng& rng, std::string frame_id) {
  Frame f;
  f.frame_id = std::move(frame_id);
  std::bernoulli_distribution drop(dropout);
  for (int c = 0; c < t.n_classes; ++c) {
    const auto& b = t.objects[static_cast<std::size_t>(c)];
    const double x0 = (b.x_min - w.x0) / w.width;
    const double x1 = (b.x_max - w.x0) / w.width;
    const double y0 = (b.y_min - w.y0) / w.height;
    const double y1 = (b.y_max - w.y0) / w.height;
    const BoundingBox clipped = BoundingBox::normalized(x0, y0, x1, y1);
    const double full = (x1 - x0) * (y1 - y0);
    const bool dropped = drop(rng);
    if (full <= 0.0 || clipped.area() < min_visible_fraction * full) continue;
    if (dropped) continue;
    f.objects.push_back({c, clipped});
  }
  for (std::size_t i = f.objects.size(); i > 1; --i)
    std::swap(f.objects[i - 1], f.objects[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  return f;
}

inline std::string synth_frame_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu", index);
  return buf;
}

// Egocentric-style views: random square windows (zoom in [zoom_min, zoom_max])
// over the template. Views with fewer than two objects are re-drawn.
inline std::vector<Frame> render_views(const LayoutTemplate& t, std::size_t n_frames, const RenderConfig& cfg,
                                       std::uint64_t seed) {
  cfg.validate();
  std::vector<Frame> frames;
  frames.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    Rng rng = make_rng(derive_seed(derive_seed(seed, "views"), i));
    std::optional<Frame> accepted;
    for (int attempt = 0; attempt < cfg.max_retries && !accepted; ++attempt) {
      const double zoom = std::uniform_real_distribution<double>(cfg.zoom_min, cfg.zoom_max)(rng);
      const double side = 1.0 / zoom;
      Window w;
      w.width = w.height = side;
      w.x0 = std::uniform_real_distribution<double>(0.0, 1.0 - side)(rng);
      w.y0 = std::uniform_real_distribution<double>(0.0, 1.0 - side)(rng);
      Frame f = render_window(t, w, cfg.dropout, cfg.min_visible_fraction, rng, synth_frame_id(i));
      if (f.objects.size() >= 2) accepted = std::move(f);
    }
    if (!accepted) throw InputError("could not render a view with >= 2 objects within the retry budget");
    frames.push_back(std::move(*accepted));
  }
  return frames;
}

}  // namespace sgnn
