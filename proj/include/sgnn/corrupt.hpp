#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "sgnn/error.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/scenegraph.hpp"

namespace sgnn {

struct CorruptionConfig {
  int rho = 1;                // max objects modified per frame
  double jitter_sigma = 0.01; // std of corner noise, normalized units
  std::uint64_t seed = 0;

  void validate() const {
    if (rho < 0) throw InputError("rho must be >= 0");
    if (!(jitter_sigma >= 0.0)) throw InputError("jitter_sigma must be >= 0");
  }
};

// Per-frame stream, independent of the order frames are processed in.
inline Rng frame_stream(std::uint64_t seed, std::string_view frame_id) {
  return make_rng(derive_seed(seed, frame_id));
}

// Swaps the labels of 1..min(rho, N) distinct objects to a different class and
// jitters their corners. Untouched objects keep their exact labels and boxes.
inline AnnotatedFrame corrupt_frame(const Frame& frame, int n_classes, const CorruptionConfig& cfg, Rng& rng) {
  cfg.validate();
  if (n_classes < 2) throw InputError("n_classes must be at least 2");
  if (frame.objects.empty()) throw InputError("cannot corrupt empty frame '" + frame.frame_id + "'");

  AnnotatedFrame out = AnnotatedFrame::clean(frame);
  if (cfg.rho == 0) return out;

  const std::size_t n = frame.objects.size();
  const std::size_t max_m = std::min<std::size_t>(static_cast<std::size_t>(cfg.rho), n);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, max_m)(rng);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }

  std::normal_distribution<double> noise(0.0, cfg.jitter_sigma);
  for (std::size_t s = 0; s < m; ++s) {
    auto& obj = out.frame.objects[idx[s]];
    const int original = obj.label;
    const int draw = std::uniform_int_distribution<int>(0, n_classes - 2)(rng);
    obj.label = draw >= original ? draw + 1 : draw;
    out.validity[idx[s]] = 0;
    if (cfg.jitter_sigma > 0.0) {
      const auto& b = obj.bbox;
      const double x0 = b.x_min + noise(rng);
      const double y0 = b.y_min + noise(rng);
      const double x1 = b.x_max + noise(rng);
      const double y1 = b.y_max + noise(rng);
      obj.bbox = BoundingBox::normalized(x0, y0, x1, y1);
    }
  }
  return out;
}

inline std::vector<AnnotatedFrame> corrupt_frames(const std::vector<Frame>& frames, int n_classes,
                                                  const CorruptionConfig& cfg) {
  std::vector<AnnotatedFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    Rng rng = frame_stream(cfg.seed, f.frame_id);
    out.push_back(corrupt_frame(f, n_classes, cfg, rng));
  }
  return out;
}

// One clean copy and one corrupted copy per frame, interleaved.
inline std::vector<AnnotatedFrame> with_negative_twins(const std::vector<Frame>& frames, int n_classes,
                                                       const CorruptionConfig& cfg) {
  std::vector<AnnotatedFrame> out;
  out.reserve(2 * frames.size());
  for (const auto& f : frames) {
    Rng rng = frame_stream(cfg.seed, f.frame_id);
    out.push_back(AnnotatedFrame::clean(f));
    out.push_back(corrupt_frame(f, n_classes, cfg, rng));
  }
  return out;
}

}  // namespace sgnn
