#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fedhar/error.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/synth.hpp"
#include "support.hpp"

using namespace fedhar;
using fedhar::testing::random_raw_frame;
using fedhar::testing::windows_of;

namespace {

PoseFrame frame(GestureLabel label, std::uint64_t index, double fill = 0.25) {
  PoseFrame f;
  f.coords.setConstant(fill);
  f.label = label;
  f.frame_index = index;
  return f;
}

Recording recording_from_runs(const std::vector<std::pair<GestureLabel, std::size_t>>& runs) {
  Recording rec{"c1", "r1", {}};
  std::uint64_t index = 0;
  for (const auto& [label, length] : runs) {
    for (std::size_t i = 0; i < length; ++i) rec.frames.push_back(frame(label, index++));
  }
  return rec;
}

std::size_t expected_windows(const std::vector<std::pair<GestureLabel, std::size_t>>& runs) {
  // Adjacent runs sharing a label merge into one run.
  std::size_t total = 0;
  std::size_t i = 0;
  while (i < runs.size()) {
    std::size_t length = runs[i].second;
    std::size_t j = i + 1;
    while (j < runs.size() && runs[j].first == runs[i].first) length += runs[j++].second;
    total += length >= 20 ? length - 19 : 0;
    i = j;
  }
  return total;
}

std::set<std::string> ids(const std::vector<WindowSample>& windows) {
  std::set<std::string> out;
  for (const auto& w : windows) out.insert(w.id());
  return out;
}

}  // namespace

TEST(GestureLabel, CanonicalOrderIsAlphabeticalBijection) {
  const std::vector<std::string> expected = {"down", "grab", "left", "nothing",
                                             "right", "stop", "ungrab", "up"};
  ASSERT_EQ(kNumClasses, expected.size());
  EXPECT_TRUE(std::is_sorted(expected.begin(), expected.end()));
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    EXPECT_EQ(to_string(gesture_at(i)), expected[i]);
    EXPECT_EQ(index_of(gesture_at(i)), i);
    EXPECT_EQ(parse_gesture(expected[i]), gesture_at(i));
  }
  EXPECT_FALSE(parse_gesture("wave").has_value());
}

TEST(MergeFacialKeypoints, IdenticalFacialPointsGiveThatPoint) {
  RawKeypointFrame raw;
  for (std::size_t k = 0; k < 5; ++k) raw.keypoints[k] = {0.5, 0.5, 1.0};
  const auto f = merge_facial_keypoints(raw);
  EXPECT_DOUBLE_EQ(f.coords(0), 0.5);
  EXPECT_DOUBLE_EQ(f.coords(1), 0.5);
}

TEST(MergeFacialKeypoints, SymmetricPointsAverageToCentre) {
  RawKeypointFrame raw;
  raw.keypoints[0] = {0, 0, 1};
  raw.keypoints[1] = {1, 0, 1};
  raw.keypoints[2] = {0, 1, 1};
  raw.keypoints[3] = {1, 1, 1};
  raw.keypoints[4] = {0.5, 0.5, 1};
  const auto f = merge_facial_keypoints(raw);
  EXPECT_DOUBLE_EQ(f.coords(0), 0.5);
  EXPECT_DOUBLE_EQ(f.coords(1), 0.5);
}

TEST(MergeFacialKeypoints, HeadIsHandSummedMeanAndBodyIsCopied) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto raw = random_raw_frame(rng, "c1", "r1", 0, GestureLabel::up);
    double sx = 0.0, sy = 0.0;
    for (int k = 0; k < 5; ++k) {
      sx += raw.keypoints[k].x;
      sy += raw.keypoints[k].y;
    }
    const auto f = merge_facial_keypoints(raw);
    EXPECT_NEAR(f.coords(0), sx / 5.0, 1e-12);
    EXPECT_NEAR(f.coords(1), sy / 5.0, 1e-12);
    // COCO 5..16 become joints 1..12 in order.
    for (int k = 5; k < 17; ++k) {
      const int j = k - 4;
      EXPECT_EQ(f.coords(2 * j), raw.keypoints[k].x);
      EXPECT_EQ(f.coords(2 * j + 1), raw.keypoints[k].y);
    }
    EXPECT_EQ(f.label, GestureLabel::up);
  }
}

TEST(MergeFacialKeypoints, CommutesWithNormalization) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = random_raw_frame(rng, "c1", "r1", 0, GestureLabel::up);
    auto scaled = raw;
    for (auto& kp : scaled.keypoints) {
      kp.x /= 640.0;
      kp.y /= 480.0;
    }
    const auto a = normalize_frame(merge_facial_keypoints(raw), 640.0, 480.0);
    const auto b = merge_facial_keypoints(scaled);
    EXPECT_LE((a.coords - b.coords).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(NormalizeFrame, Examples) {
  PoseFrame f;
  f.coords.setZero();
  f.coords(0) = 320;
  f.coords(1) = 240;
  f.coords(2) = 700;
  f.coords(3) = -5;
  const auto n = normalize_frame(f, 640, 480);
  EXPECT_DOUBLE_EQ(n.coords(0), 0.5);
  EXPECT_DOUBLE_EQ(n.coords(1), 0.5);
  EXPECT_DOUBLE_EQ(n.coords(2), 1.0);
  EXPECT_DOUBLE_EQ(n.coords(3), 0.0);
  EXPECT_DOUBLE_EQ(n.coords(4), 0.0);
  EXPECT_DOUBLE_EQ(normalize_frame(f, 17, 3).coords(4), 0.0);
}

TEST(NormalizeFrame, RejectsNonPositiveImageSize) {
  PoseFrame f;
  EXPECT_THROW(normalize_frame(f, 0, 480), ConfigError);
  EXPECT_THROW(normalize_frame(f, 640, -1), ConfigError);
}

TEST(NormalizeFrame, OutputAlwaysInUnitSquare) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    PoseFrame f;
    for (Eigen::Index i = 0; i < f.coords.size(); ++i) f.coords(i) = rng.uniform(-1000, 2000);
    const auto n = normalize_frame(f, 640, 480);
    EXPECT_GE(n.coords.minCoeff(), 0.0);
    EXPECT_LE(n.coords.maxCoeff(), 1.0);
  }
}

TEST(RepairLowConfidence, UsesPreviousFrameOrImageCentre) {
  Rng rng(5);
  std::vector<RawKeypointFrame> rec;
  for (std::uint64_t i = 0; i < 3; ++i) rec.push_back(random_raw_frame(rng, "c", "r", i, GestureLabel::up));
  rec[0].keypoints[7].confidence = 0.0;
  rec[1].keypoints[7].confidence = 0.01;
  rec[2].keypoints[3].confidence = 0.049;
  rec[2].keypoints[4].confidence = 0.05;  // at the threshold: kept

  const auto fixed = repair_low_confidence(rec, 640, 480);
  EXPECT_EQ(fixed[0].keypoints[7].x, 320.0);
  EXPECT_EQ(fixed[0].keypoints[7].y, 240.0);
  EXPECT_EQ(fixed[1].keypoints[7].x, 320.0);  // previous frame's repaired value
  EXPECT_EQ(fixed[2].keypoints[3].x, rec[1].keypoints[3].x);
  EXPECT_EQ(fixed[2].keypoints[3].y, rec[1].keypoints[3].y);
  EXPECT_EQ(fixed[2].keypoints[4].x, rec[2].keypoints[4].x);
  EXPECT_EQ(fixed[1].keypoints[0].x, rec[1].keypoints[0].x);
}

TEST(SlideWindows, RunLengthExamples) {
  EXPECT_EQ(slide_windows(recording_from_runs({{GestureLabel::up, 20}})).size(), 1u);
  EXPECT_EQ(slide_windows(recording_from_runs({{GestureLabel::up, 25}})).size(), 6u);
  EXPECT_EQ(slide_windows(recording_from_runs({{GestureLabel::up, 19}})).size(), 0u);
  EXPECT_EQ(slide_windows(Recording{"c", "r", {}}).size(), 0u);
}

TEST(SlideWindows, CountMatchesRunFormulaOnRandomRecordings) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<GestureLabel, std::size_t>> runs;
    const auto n_runs = 1 + rng.below(8);
    for (std::uint64_t r = 0; r < n_runs; ++r) {
      runs.emplace_back(gesture_at(rng.below(3)), static_cast<std::size_t>(rng.below(60)));
    }
    const auto rec = recording_from_runs(runs);
    EXPECT_EQ(slide_windows(rec).size(), expected_windows(runs));
  }
}

TEST(SlideWindows, WindowsAreConsecutiveSameLabelAndNeverStraddle) {
  Recording rec = recording_from_runs({{GestureLabel::grab, 23}, {GestureLabel::stop, 21}});
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    rec.frames[i].coords.setConstant(static_cast<double>(i));
  }
  const auto windows = slide_windows(rec);
  ASSERT_EQ(windows.size(), 4u + 2u);
  for (const auto& w : windows) {
    EXPECT_EQ(w.client_id, "c1");
    EXPECT_EQ(w.recording_id, "r1");
    for (Eigen::Index t = 0; t < 20; ++t) {
      const auto idx = static_cast<std::size_t>(w.start_frame) + static_cast<std::size_t>(t);
      EXPECT_EQ(w.frames(0, t), static_cast<double>(idx));
      EXPECT_EQ(rec.frames[idx].label, w.label);
    }
  }
  EXPECT_EQ(windows.front().id(), "c1/r1/0");
  EXPECT_EQ(windows[4].start_frame, 23u);
  EXPECT_EQ(windows[4].label, GestureLabel::stop);
}

TEST(SlideWindows, FrameIndexGapBreaksRun) {
  Recording rec = recording_from_runs({{GestureLabel::up, 30}});
  for (std::size_t i = 15; i < rec.frames.size(); ++i) rec.frames[i].frame_index += 5;
  // Runs of 15 and 15 frames: no window fits.
  EXPECT_TRUE(slide_windows(rec).empty());
}

TEST(StratifiedSplit, PaperProportions) {
  const auto one = [](std::size_t n) {
    const auto w = windows_of(GestureLabel::grab, n);
    const auto d = stratified_split("c1", w, {}, 1);
    return std::array<std::size_t, 3>{d.train.size(), d.val.size(), d.test.size()};
  };
  EXPECT_EQ(one(100), (std::array<std::size_t, 3>{88, 6, 6}));
  EXPECT_EQ(one(50), (std::array<std::size_t, 3>{44, 3, 3}));
  EXPECT_EQ(one(10), (std::array<std::size_t, 3>{8, 1, 1}));
}

TEST(StratifiedSplit, DisjointStratifiedWithinOnePerClass) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<WindowSample> windows;
    std::array<std::size_t, kNumClasses> per_class{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      per_class[c] = static_cast<std::size_t>(rng.below(300));
      auto w = windows_of(gesture_at(c), per_class[c]);
      windows.insert(windows.end(), w.begin(), w.end());
    }
    const auto d = stratified_split("c1", windows, {}, rng.next_u64());

    const auto tr = ids(d.train), va = ids(d.val), te = ids(d.test);
    EXPECT_EQ(tr.size() + va.size() + te.size(), windows.size());
    for (const auto& id : va) EXPECT_FALSE(tr.contains(id));
    for (const auto& id : te) EXPECT_FALSE(tr.contains(id) || va.contains(id));

    const auto htr = class_histogram(d.train), hva = class_histogram(d.val),
               hte = class_histogram(d.test);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double n = static_cast<double>(per_class[c]);
      EXPECT_EQ(htr[c] + hva[c] + hte[c], per_class[c]);
      EXPECT_LE(std::abs(static_cast<double>(htr[c]) - 0.88 * n), 1.0) << "class " << c;
      EXPECT_LE(std::abs(static_cast<double>(hva[c]) - 0.06 * n), 1.0) << "class " << c;
      EXPECT_LE(std::abs(static_cast<double>(hte[c]) - 0.06 * n), 1.0) << "class " << c;
    }
  }
}

TEST(StratifiedSplit, DeterministicAndSeedSensitive) {
  Rng rng(8);
  const auto windows = fedhar::testing::random_windows(rng, 400);
  const auto a = stratified_split("c1", windows, {}, 5);
  const auto b = stratified_split("c1", windows, {}, 5);
  const auto c = stratified_split("c1", windows, {}, 6);
  std::vector<std::string> ia, ib, ic;
  for (const auto& w : a.train) ia.push_back(w.id());
  for (const auto& w : b.train) ib.push_back(w.id());
  for (const auto& w : c.train) ic.push_back(w.id());
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
}

TEST(StratifiedSplit, EmptyClassIsWarnedAndSkipped) {
  const auto windows = windows_of(GestureLabel::up, 20);
  const auto d = stratified_split("c9", windows, {}, 0);
  EXPECT_EQ(d.warnings.size(), kNumClasses - 1);
  EXPECT_NE(d.warnings.front().find("c9"), std::string::npos);
  EXPECT_EQ(d.train.size() + d.val.size() + d.test.size(), 20u);
}

TEST(StratifiedSplit, RejectsBadFractions) {
  const auto windows = windows_of(GestureLabel::up, 20);
  EXPECT_THROW(stratified_split("c", windows, {0.5, 0.2, 0.2}, 0), ConfigError);
  EXPECT_THROW(stratified_split("c", windows, {1.2, -0.1, -0.1}, 0), ConfigError);
}

namespace {

std::vector<WindowSample> multi_subject(std::size_t per_subject, std::size_t subjects) {
  std::vector<WindowSample> out;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t i = 0; i < per_subject; ++i) {
      out.push_back(fedhar::testing::constant_window(gesture_at(i % kNumClasses),
                                                     "s" + std::to_string(s + 1), "r1", i));
    }
  }
  return out;
}

std::vector<std::size_t> part_sizes(const PartitionPlan& plan) {
  std::vector<std::size_t> sizes(plan.partitions);
  for (const auto& [id, p] : plan.assignments) ++sizes.at(p);
  return sizes;
}

}  // namespace

TEST(FedEnsemblePartition, SizeExamples) {
  const auto ten = multi_subject(2, 5);
  EXPECT_EQ(part_sizes(build_fedensemble_partition(ten, 5, 0)),
            (std::vector<std::size_t>{2, 2, 2, 2, 2}));
  auto eleven = ten;
  eleven.push_back(fedhar::testing::constant_window(GestureLabel::up, "s1", "r2", 0));
  auto sizes = part_sizes(build_fedensemble_partition(eleven, 5, 0));
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2, 2}));
}

TEST(FedEnsemblePartition, SyntheticFiveSubjectsEveryPartHasThreeSubjects) {
  SynthSpec spec;
  spec.frames_per_recording = 300;
  const auto clients = prepare_clients(synthesize_dataset(spec, 3), {});
  std::vector<WindowSample> pooled;
  for (const auto& c : clients) pooled.insert(pooled.end(), c.train.begin(), c.train.end());

  const auto plan = build_fedensemble_partition(pooled, 5, 17);
  const auto parts = apply_partition(plan, pooled);
  ASSERT_EQ(parts.size(), 5u);
  std::size_t total = 0, lo = pooled.size(), hi = 0;
  for (const auto& p : parts) {
    std::set<std::string> subjects;
    for (const auto& w : p) subjects.insert(w.client_id);
    EXPECT_GE(subjects.size(), 3u);
    total += p.size();
    lo = std::min(lo, p.size());
    hi = std::max(hi, p.size());
  }
  EXPECT_EQ(total, pooled.size());
  EXPECT_LE(hi - lo, 1u);
}

TEST(FedEnsemblePartition, ClassHistogramsTrackGlobalWithinFivePercent) {
  Rng rng(99);
  std::vector<WindowSample> pooled;
  for (std::size_t s = 0; s < 5; ++s) {
    // Skewed per-subject class mix, 1200 windows per subject.
    for (std::size_t i = 0; i < 1200; ++i) {
      const auto label = gesture_at((i % 10 < 4) ? s : rng.below(kNumClasses));
      pooled.push_back(fedhar::testing::constant_window(label, "s" + std::to_string(s), "r", i));
    }
  }
  const auto parts = apply_partition(build_fedensemble_partition(pooled, 5, 4), pooled);
  const auto global = class_histogram(pooled);
  for (const auto& p : parts) {
    ASSERT_GE(p.size(), 1000u);
    const auto h = class_histogram(p);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double share = static_cast<double>(h[c]) / static_cast<double>(p.size());
      const double global_share = static_cast<double>(global[c]) / static_cast<double>(pooled.size());
      EXPECT_NEAR(share, global_share, 0.05) << "class " << c;
    }
  }
}

TEST(FedEnsemblePartition, ErrorsAndDeterminism) {
  const auto windows = multi_subject(20, 5);
  EXPECT_THROW(build_fedensemble_partition(windows, 1, 0), ConfigError);
  EXPECT_THROW(build_fedensemble_partition(multi_subject(2, 1), 5, 0), PartitionError);
  const auto one_subject = multi_subject(50, 1);
  try {
    build_fedensemble_partition(one_subject, 5, 0);
    FAIL() << "expected PartitionError";
  } catch (const PartitionError& e) {
    EXPECT_NE(std::string(e.what()).find("distinct subjects"), std::string::npos);
  }
  EXPECT_EQ(build_fedensemble_partition(windows, 5, 9).assignments,
            build_fedensemble_partition(windows, 5, 9).assignments);
}

TEST(SubjectPartition, AssignmentIsFunctionOfClient) {
  const auto windows = multi_subject(10, 3);
  const std::vector<std::string> order = {"s2", "s1", "s3"};
  const auto plan = build_subject_partition(windows, order);
  EXPECT_EQ(plan.partitions, 3u);
  for (const auto& w : windows) {
    const auto expected = w.client_id == "s2" ? 0u : w.client_id == "s1" ? 1u : 2u;
    EXPECT_EQ(plan.assignments.at(w.id()), expected);
  }
  const std::vector<std::string> partial = {"s1"};
  EXPECT_THROW(build_subject_partition(windows, partial), PartitionError);
}

TEST(Synthesis, CountsLabelsAndDeterminism) {
  SynthSpec spec;
  spec.subjects = 5;
  spec.recordings_per_subject = 1;
  spec.frames_per_recording = 100;
  const auto a = synthesize_dataset(spec, 42);
  ASSERT_EQ(a.size(), 500u);
  std::set<GestureLabel> labels;
  std::set<std::string> clients;
  for (const auto& f : a) {
    labels.insert(f.label);
    clients.insert(f.client_id);
  }
  EXPECT_EQ(labels.size(), kNumClasses);
  EXPECT_EQ(clients.size(), 5u);

  const auto b = synthesize_dataset(spec, 42);
  std::ostringstream sa, sb;
  write_frames(sa, a);
  write_frames(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(FrameFormat, RoundTripAndErrors) {
  Rng rng(4);
  std::vector<RawKeypointFrame> frames;
  for (std::uint64_t i = 0; i < 5; ++i) frames.push_back(random_raw_frame(rng, "c1", "r3", i, GestureLabel::grab));
  std::stringstream io;
  write_frames(io, frames);
  const auto back = parse_frames(io);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(back[i].client_id, "c1");
    EXPECT_EQ(back[i].frame_index, i);
    for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
      EXPECT_EQ(back[i].keypoints[k].x, frames[i].keypoints[k].x);
      EXPECT_EQ(back[i].keypoints[k].confidence, frames[i].keypoints[k].confidence);
    }
  }

  std::istringstream empty("");
  EXPECT_TRUE(parse_frames(empty).empty());

  std::istringstream bad("\n{\"client\":\"c1\",\"recording\":\"r\",\"frame\":0,\"label\":\"grab\",\"kp\":[]}\n");
  try {
    parse_frames(bad);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream bad_label("{\"client\":\"c1\",\"recording\":\"r\",\"frame\":0,\"label\":\"wave\",\"kp\":[]}");
  EXPECT_THROW(parse_frames(bad_label), DataError);
}

TEST(WindowFormat, RoundTripIsValueExact) {
  SynthSpec spec;
  spec.subjects = 2;
  spec.frames_per_recording = 120;
  const auto clients = prepare_clients(synthesize_dataset(spec, 1), {});
  const auto tagged = tag_splits(clients);
  std::stringstream io;
  write_windows(io, tagged);
  const auto back = parse_windows(io);
  ASSERT_EQ(back.size(), tagged.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].split, tagged[i].split);
    EXPECT_EQ(back[i].window.id(), tagged[i].window.id());
    EXPECT_EQ(back[i].window.label, tagged[i].window.label);
    EXPECT_TRUE(back[i].window.frames == tagged[i].window.frames);
  }
  const auto restored = untag_splits(back);
  ASSERT_EQ(restored.size(), clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    EXPECT_EQ(restored[c].client_id, clients[c].client_id);
    EXPECT_EQ(ids(restored[c].train), ids(clients[c].train));
    EXPECT_EQ(ids(restored[c].test), ids(clients[c].test));
  }
}

TEST(PrepareClients, LexicographicClientsAndDeterminism) {
  Rng rng(6);
  std::vector<RawKeypointFrame> frames;
  for (const char* client : {"zeta", "alpha", "mid"}) {
    for (std::uint64_t i = 0; i < 60; ++i) {
      frames.push_back(random_raw_frame(rng, client, "r1", i, gesture_at(i / 30)));
    }
  }
  const auto a = prepare_clients(frames, {});
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].client_id, "alpha");
  EXPECT_EQ(a[1].client_id, "mid");
  EXPECT_EQ(a[2].client_id, "zeta");
  for (const auto& c : a) {
    EXPECT_EQ(c.train.size() + c.val.size() + c.test.size(), 2u * 11u);
    for (const auto* split : {&c.train, &c.val, &c.test}) {
      for (const auto& w : *split) {
        EXPECT_GE(w.frames.minCoeff(), 0.0);
        EXPECT_LE(w.frames.maxCoeff(), 1.0);
      }
    }
  }
  const auto b = prepare_clients(frames, {});
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(ids(a[c].train), ids(b[c].train));

  auto dup = frames;
  dup.push_back(frames.front());
  EXPECT_THROW(prepare_clients(dup, {}), DataError);
}
