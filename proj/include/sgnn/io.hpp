#pragma once

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgnn/atomic_file.hpp"
#include "sgnn/correct.hpp"
#include "sgnn/error.hpp"
#include "sgnn/eval.hpp"
#include "sgnn/scenegraph.hpp"
#include "sgnn/synth.hpp"

namespace sgnn {

inline constexpr int kFramesFormatVersion = 1;

struct FramesData {
  int n_classes = 0;
  std::vector<AnnotatedFrame> frames;

  std::vector<Frame> plain_frames() const {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (const auto& a : frames) out.push_back(a.frame);
    return out;
  }

  bool operator==(const FramesData&) const = default;
};

namespace detail {

using json = nlohmann::json;

inline std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, bool strict, std::size_t line,
                       const char* what) {
  if (!obj.is_object()) throw InputError(line_prefix(line) + what + " must be a JSON object");
  if (!strict) return;
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw InputError(line_prefix(line) + "unknown field '" + item.key() + "' in " + what);
  }
}

inline BoundingBox parse_bbox(const json& j, std::size_t line) {
  if (!j.is_array() || j.size() != 4) throw InputError(line_prefix(line) + "bbox must be [x_min, y_min, x_max, y_max]");
  for (const auto& v : j)
    if (!v.is_number()) throw InputError(line_prefix(line) + "bbox entries must be numbers");
  BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw InputError(line_prefix(line) + "bbox outside [0,1] or not ordered (field bbox)");
  return b;
}

inline json bbox_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

template <typename T>
T get_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw InputError(line_prefix(line) + "missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(line_prefix(line) + "field '" + key + "' has the wrong type");
  }
}

inline json parse_line(const std::string& text, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(line_prefix(line) + "malformed JSON (" + e.what() + ")");
  }
}

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace detail

// Header line {"n_classes", "format_version"} then one frame per line.
inline FramesData parse_frames_text(const std::string& text, bool strict = false) {
  using detail::json;
  FramesData data;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const json j = detail::parse_line(line, line_no);
    if (!have_header) {
      detail::check_keys(j, {"n_classes", "format_version"}, strict, line_no, "header");
      if (!j.contains("n_classes")) throw InputError(detail::line_prefix(line_no) + "missing header record");
      data.n_classes = detail::get_field<int>(j, "n_classes", line_no);
      const int version = detail::get_field<int>(j, "format_version", line_no);
      if (version != kFramesFormatVersion)
        throw InputError(detail::line_prefix(line_no) + "unsupported format_version " + std::to_string(version));
      if (data.n_classes < 2) throw InputError(detail::line_prefix(line_no) + "n_classes must be >= 2");
      have_header = true;
      continue;
    }
    detail::check_keys(j, {"frame_id", "objects"}, strict, line_no, "frame");
    AnnotatedFrame a;
    a.frame.frame_id = detail::get_field<std::string>(j, "frame_id", line_no);
    if (!seen_ids.insert(a.frame.frame_id).second)
      throw InputError(detail::line_prefix(line_no) + "duplicate frame_id '" + a.frame.frame_id + "'");
    if (!j.contains("objects") || !j["objects"].is_array())
      throw InputError(detail::line_prefix(line_no) + "field 'objects' must be an array");
    for (const auto& o : j["objects"]) {
      detail::check_keys(o, {"class_id", "bbox", "validity", "original_label"}, strict, line_no, "object");
      SceneObject obj;
      obj.label = detail::get_field<int>(o, "class_id", line_no);
      if (obj.label < 0 || obj.label >= data.n_classes)
        throw InputError(detail::line_prefix(line_no) + "class_id " + std::to_string(obj.label) + " outside [0, " +
                         std::to_string(data.n_classes) + ")");
      if (!o.contains("bbox")) throw InputError(detail::line_prefix(line_no) + "missing field 'bbox'");
      obj.bbox = detail::parse_bbox(o["bbox"], line_no);
      const bool valid = o.contains("validity") ? detail::get_field<bool>(o, "validity", line_no) : true;
      const int original = o.contains("original_label") ? detail::get_field<int>(o, "original_label", line_no) : obj.label;
      if (original < 0 || original >= data.n_classes)
        throw InputError(detail::line_prefix(line_no) + "original_label outside class range");
      a.frame.objects.push_back(obj);
      a.validity.push_back(valid ? 1 : 0);
      a.original_labels.push_back(original);
    }
    data.frames.push_back(std::move(a));
  }
  if (!have_header) throw InputError("missing header record {n_classes, format_version}");
  return data;
}

inline FramesData parse_frames(const std::filesystem::path& path, bool strict = false) {
  try {
    return parse_frames_text(read_file(path), strict);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline std::string write_frames_text(const FramesData& data, bool with_annotations) {
  using detail::json;
  std::string out = json{{"n_classes", data.n_classes}, {"format_version", kFramesFormatVersion}}.dump() + "\n";
  for (const auto& a : data.frames) {
    json objects = json::array();
    for (std::size_t i = 0; i < a.frame.objects.size(); ++i) {
      const auto& o = a.frame.objects[i];
      json jo = {{"class_id", o.label}, {"bbox", detail::bbox_json(o.bbox)}};
      if (with_annotations) {
        jo["validity"] = a.validity[i] != 0;
        jo["original_label"] = a.original_labels[i];
      }
      objects.push_back(jo);
    }
    out += json{{"frame_id", a.frame.frame_id}, {"objects", objects}}.dump() + "\n";
  }
  return out;
}

inline FramesData frames_data(int n_classes, const std::vector<Frame>& frames) {
  FramesData d;
  d.n_classes = n_classes;
  for (const auto& f : frames) d.frames.push_back(AnnotatedFrame::clean(f));
  return d;
}

inline std::vector<Detection> parse_detections_text(const std::string& text, bool strict = false) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto j = detail::parse_line(line, line_no);
    detail::check_keys(j, {"frame_id", "class_id", "bbox", "confidence"}, strict, line_no, "detection");
    Detection d;
    d.frame_id = detail::get_field<std::string>(j, "frame_id", line_no);
    d.class_id = detail::get_field<int>(j, "class_id", line_no);
    if (d.class_id < 0) throw InputError(detail::line_prefix(line_no) + "class_id must be >= 0");
    if (!j.contains("bbox")) throw InputError(detail::line_prefix(line_no) + "missing field 'bbox'");
    d.bbox = detail::parse_bbox(j["bbox"], line_no);
    d.confidence = detail::get_field<double>(j, "confidence", line_no);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
      throw InputError(detail::line_prefix(line_no) + "confidence outside [0,1]");
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Detection> parse_detections(const std::filesystem::path& path, bool strict = false) {
  try {
    return parse_detections_text(read_file(path), strict);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline std::string write_detections_text(const std::vector<Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    out += nlohmann::json{{"frame_id", d.frame_id},
                          {"class_id", d.class_id},
                          {"bbox", detail::bbox_json(d.bbox)},
                          {"confidence", d.confidence}}
               .dump() +
           "\n";
  }
  return out;
}

inline std::string write_records_text(const std::vector<CorrectionRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

inline nlohmann::json to_json(const LayoutTemplate& t) {
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t c = 0; c < t.objects.size(); ++c)
    objects.push_back({{"class_id", c}, {"bbox", detail::bbox_json(t.objects[c])}});
  return {{"n_classes", t.n_classes}, {"grid", t.grid}, {"seed", t.seed}, {"objects", objects}};
}

}  // namespace sgnn
