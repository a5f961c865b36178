#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "sgnn/corrupt.hpp"
#include "sgnn/error.hpp"

using namespace sgnn;

namespace {

Frame three_objects() {
  return fixture::make_frame("f", {{0, 0.2, 0.2, 0.1, 0.1}, {1, 0.5, 0.5, 0.1, 0.1}, {2, 0.8, 0.8, 0.1, 0.1}});
}

std::size_t count_invalid(const AnnotatedFrame& a) {
  std::size_t n = 0;
  for (auto v : a.validity) n += v ? 0 : 1;
  return n;
}

}  // namespace

TEST(Corrupt, RhoZeroIsIdentity) {
  Rng rng = make_rng(1);
  const auto f = three_objects();
  const auto a = corrupt_frame(f, 5, {0, 0.01, 1}, rng);
  EXPECT_EQ(a.frame, f);
  EXPECT_EQ(count_invalid(a), 0u);
}

TEST(Corrupt, RhoOneWithoutJitterSwapsExactlyOneLabel) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng = make_rng(s);
    const auto f = three_objects();
    const auto a = corrupt_frame(f, 5, {1, 0.0, s}, rng);
    ASSERT_EQ(count_invalid(a), 1u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.frame.objects[i].bbox, f.objects[i].bbox);
      EXPECT_EQ(a.original_labels[i], f.objects[i].label);
      if (a.validity[i]) {
        EXPECT_EQ(a.frame.objects[i].label, f.objects[i].label);
      } else {
        EXPECT_NE(a.frame.objects[i].label, f.objects[i].label);
        EXPECT_GE(a.frame.objects[i].label, 0);
        EXPECT_LT(a.frame.objects[i].label, 5);
      }
    }
  }
}

TEST(Corrupt, CountIsCappedByObjectsAndCoversRange) {
  Rng rng = make_rng(99);
  std::set<std::size_t> seen;
  const auto f = three_objects();
  for (int i = 0; i < 10000; ++i) {
    const auto a = corrupt_frame(f, 4, {5, 0.01, 0}, rng);
    const auto m = count_invalid(a);
    ASSERT_GE(m, 1u);
    ASSERT_LE(m, 3u);
    seen.insert(m);
  }
  EXPECT_EQ(seen, (std::set<std::size_t>{1, 2, 3}));
}

TEST(Corrupt, SwappedLabelsCoverEveryOtherClass) {
  Rng rng = make_rng(5);
  const auto f = fixture::make_frame("f", {{2, 0.5, 0.5, 0.1, 0.1}});
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(corrupt_frame(f, 5, {1, 0.0, 0}, rng).frame.objects[0].label);
  EXPECT_EQ(seen, (std::set<int>{0, 1, 3, 4}));
}

TEST(Corrupt, JitterKeepsBoxesValidAndSparesUntouchedObjects) {
  Rng rng = make_rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto f = fixture::random_frame(rng, 6, 8);
    const auto a = corrupt_frame(f, 8, {2, 0.05, 0}, rng);
    for (std::size_t j = 0; j < f.objects.size(); ++j) {
      EXPECT_TRUE(a.frame.objects[j].bbox.valid());
      if (a.validity[j]) {
        EXPECT_EQ(a.frame.objects[j], f.objects[j]);
      }
    }
  }
}

TEST(Corrupt, SameSeedSameOutput) {
  Rng rng = make_rng(3);
  std::vector<Frame> frames;
  for (int i = 0; i < 20; ++i) frames.push_back(fixture::random_frame(rng, 5, 6, "f" + std::to_string(i)));
  const CorruptionConfig cfg{2, 0.01, 1234};
  EXPECT_EQ(corrupt_frames(frames, 6, cfg), corrupt_frames(frames, 6, cfg));
  const CorruptionConfig other{2, 0.01, 1235};
  EXPECT_NE(corrupt_frames(frames, 6, cfg), corrupt_frames(frames, 6, other));
}

TEST(Corrupt, TwinsInterleaveCleanAndCorrupted) {
  Rng rng = make_rng(3);
  std::vector<Frame> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(fixture::random_frame(rng, 4, 6, "f" + std::to_string(i)));
  const CorruptionConfig cfg{1, 0.01, 8};
  const auto twins = with_negative_twins(frames, 6, cfg);
  const auto corrupted = corrupt_frames(frames, 6, cfg);
  ASSERT_EQ(twins.size(), 8u);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(twins[2 * i], AnnotatedFrame::clean(frames[i]));
    EXPECT_EQ(twins[2 * i + 1], corrupted[i]);
  }
}

TEST(Corrupt, RejectsBadInput) {
  Rng rng = make_rng(0);
  EXPECT_THROW(corrupt_frame(three_objects(), 5, {-1, 0.01, 0}, rng), InputError);
  EXPECT_THROW(corrupt_frame(three_objects(), 5, {1, -0.1, 0}, rng), InputError);
  EXPECT_THROW(corrupt_frame(three_objects(), 1, {1, 0.01, 0}, rng), InputError);
  EXPECT_THROW(corrupt_frame(Frame{"e", {}}, 5, {1, 0.01, 0}, rng), InputError);
}
