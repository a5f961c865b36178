#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "sgnn/atomic_file.hpp"
#include "sgnn/error.hpp"
#include "sgnn/io.hpp"

using namespace sgnn;

namespace {

std::string error_of(const std::string& text, bool strict = false) {
  try {
    parse_frames_text(text, strict);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

const std::string kHeader = R"({"n_classes": 3, "format_version": 1})" "\n";

}  // namespace

TEST(FramesIo, HeaderOnlyIsAnEmptyDataset) {
  const auto d = parse_frames_text(kHeader);
  EXPECT_EQ(d.n_classes, 3);
  EXPECT_TRUE(d.frames.empty());
}

TEST(FramesIo, ParsesObjectsInOrder) {
  const auto d = parse_frames_text(kHeader + R"({"frame_id": "a", "objects": [{"class_id": 2, "bbox": [0.1, 0.2, 0.3, 0.4]},)"
                                             R"( {"class_id": 0, "bbox": [0, 0, 1, 1]}]})" "\n\n");
  ASSERT_EQ(d.frames.size(), 1u);
  const auto& f = d.frames[0];
  EXPECT_EQ(f.frame.frame_id, "a");
  ASSERT_EQ(f.frame.objects.size(), 2u);
  EXPECT_EQ(f.frame.objects[0].label, 2);
  EXPECT_EQ(f.frame.objects[0].bbox, (BoundingBox{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(f.validity, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(f.original_labels, (std::vector<int>{2, 0}));
}

TEST(FramesIo, ErrorsNameTheLine) {
  EXPECT_NE(error_of(kHeader + R"({"frame_id": "a", "objects": [{"class_id": 3, "bbox": [0, 0, 1, 1]}]})")
                .find("line 2"),
            std::string::npos);
  EXPECT_NE(error_of(kHeader + "\n{not json\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of(kHeader + R"({"frame_id": "a", "objects": [{"class_id": 1, "bbox": [0.5, 0, 0.2, 1]}]})")
                .find("bbox"),
            std::string::npos);
  EXPECT_NE(error_of(kHeader + R"({"frame_id": "a", "objects": []})" "\n" R"({"frame_id": "a", "objects": []})")
                .find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of(kHeader + R"({"frame_id": "a", "objects": [{"bbox": [0, 0, 1, 1]}]})").find("class_id"),
            std::string::npos);
}

TEST(FramesIo, HeaderIsRequired) {
  EXPECT_FALSE(error_of("").empty());
  EXPECT_FALSE(error_of(R"({"frame_id": "a", "objects": []})").empty());
  EXPECT_FALSE(error_of(R"({"n_classes": 3, "format_version": 2})").empty());
  EXPECT_FALSE(error_of(R"({"n_classes": 1, "format_version": 1})").empty());
}

TEST(FramesIo, StrictModeRejectsUnknownFields) {
  const std::string text = kHeader + R"({"frame_id": "a", "camera": 3, "objects": [{"class_id": 1, "bbox": [0, 0, 1, 1]}]})";
  EXPECT_NO_THROW(parse_frames_text(text, false));
  EXPECT_NE(error_of(text, true).find("camera"), std::string::npos);
}

TEST(FramesIo, RoundTripWithAnnotations) {
  FramesData d = frames_data(39, fixture::synth_dataset(39, 50, 3));
  d.frames[4].validity[0] = 0;
  d.frames[4].original_labels[0] = (d.frames[4].frame.objects[0].label + 1) % 39;
  EXPECT_EQ(parse_frames_text(write_frames_text(d, true)), d);
  const auto plain = parse_frames_text(write_frames_text(d, false));
  EXPECT_EQ(plain.plain_frames(), d.plain_frames());
}

TEST(DetectionsIo, RoundTrip) {
  const std::vector<Detection> dets{{"a", 1, {0.1, 0.2, 0.3, 0.4}, 0.123456789012345},
                                    {"b", 7, {0.0, 0.0, 1.0, 1.0}, 1.0}};
  EXPECT_EQ(parse_detections_text(write_detections_text(dets)), dets);
}

TEST(DetectionsIo, RejectsBadRecords) {
  EXPECT_THROW(parse_detections_text(R"({"frame_id": "a", "class_id": 1, "bbox": [0, 0, 1, 1], "confidence": 1.5})"),
               InputError);
  EXPECT_THROW(parse_detections_text(R"({"frame_id": "a", "class_id": -1, "bbox": [0, 0, 1, 1], "confidence": 0.5})"),
               InputError);
  EXPECT_THROW(parse_detections_text(R"({"frame_id": "a", "class_id": 1, "bbox": [0, 0, 1], "confidence": 0.5})"),
               InputError);
}

TEST(AtomicFile, WritesAndReplaces) {
  const auto dir = fixture::scratch_dir("io_atomic");
  atomic_write_file(dir / "x.txt", "one");
  atomic_write_file(dir / "x.txt", "two");
  EXPECT_EQ(read_file(dir / "x.txt"), "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(read_file(dir / "missing.txt"), InputError);
  EXPECT_THROW(parse_frames(dir / "missing.jsonl"), InputError);
}
