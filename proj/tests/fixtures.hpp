#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "sgnn/rng.hpp"
#include "sgnn/scenegraph.hpp"
#include "sgnn/synth.hpp"

namespace sgnn::fixture {

// (label, cx, cy, w, h) per object.
inline Frame make_frame(std::string id, const std::vector<std::tuple<int, double, double, double, double>>& objs) {
  Frame f{std::move(id), {}};
  for (const auto& [label, cx, cy, w, h] : objs)
    f.objects.push_back({label, BoundingBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}});
  return f;
}

inline BoundingBox random_box(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return BoundingBox::normalized(u(rng), u(rng), u(rng), u(rng));
}

inline Frame random_frame(Rng& rng, std::size_t n_objects, int n_classes, std::string id = "rand") {
  Frame f{std::move(id), {}};
  std::uniform_int_distribution<int> label(0, n_classes - 1);
  std::uniform_real_distribution<double> centre(0.1, 0.9), side(0.02, 0.15);
  for (std::size_t i = 0; i < n_objects; ++i) {
    const double cx = centre(rng), cy = centre(rng), w = side(rng), h = side(rng);
    f.objects.push_back({label(rng), BoundingBox::normalized(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)});
  }
  return f;
}

// Synthetic dataset the way the command-line tool builds it.
inline std::vector<Frame> synth_dataset(int n_classes, std::size_t n_frames, std::uint64_t seed,
                                        const RenderConfig& cfg = {}) {
  const LayoutTemplate t = gen_template(n_classes, derive_seed(seed, "synth-template"));
  return render_views(t, n_frames, cfg, derive_seed(seed, "synth-views"));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(SGNN_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sgnn::fixture
