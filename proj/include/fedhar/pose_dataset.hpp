#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fedhar/gesture.hpp"

namespace fedhar {

inline constexpr std::size_t kCocoKeypoints = 17;
inline constexpr std::size_t kJoints = 13;
inline constexpr std::size_t kFrameDim = 2 * kJoints;  // 26
inline constexpr std::size_t kWindowLength = 20;

/// Confidence below which a keypoint is treated as missing.
inline constexpr double kMinKeypointConfidence = 0.05;

/// COCO-17 keypoint order.
enum class CocoKeypoint : std::uint8_t {
  nose = 0, left_eye, right_eye, left_ear, right_ear,
  left_shoulder, right_shoulder, left_elbow, right_elbow,
  left_wrist, right_wrist, left_hip, right_hip,
  left_knee, right_knee, left_ankle, right_ankle,
};

/// Reduced 13-joint order used by PoseFrame.
inline constexpr std::array<const char*, kJoints> kJointNames = {
    "head",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist",    "l_hip",      "r_hip",   "l_knee",
    "r_knee",  "l_ankle",    "r_ankle"};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 1.0;
};

struct RawKeypointFrame {
  std::string client_id;
  std::string recording_id;
  std::uint64_t frame_index = 0;
  GestureLabel label = GestureLabel::nothing;
  std::array<Keypoint, kCocoKeypoints> keypoints{};
};

using FrameVector = Eigen::Matrix<double, static_cast<int>(kFrameDim), 1>;
using WindowMatrix = Eigen::Matrix<double, static_cast<int>(kFrameDim),
                                   static_cast<int>(kWindowLength)>;

/// One timestep: 13 joints as interleaved (x, y).
struct PoseFrame {
  FrameVector coords = FrameVector::Zero();
  GestureLabel label = GestureLabel::nothing;
  std::uint64_t frame_index = 0;
};

/// Frames of a single recording, ordered by frame index.
struct Recording {
  std::string client_id;
  std::string recording_id;
  std::vector<PoseFrame> frames;
};

/// 20 consecutive frames; column t of `frames` is frame t.
struct WindowSample {
  WindowMatrix frames = WindowMatrix::Zero();
  GestureLabel label = GestureLabel::nothing;
  std::string client_id;
  std::string recording_id;
  std::uint64_t start_frame = 0;

  /// Stable identity: "client/recording/start_frame".
  std::string id() const;
};

struct ClientDataset {
  std::string client_id;
  std::vector<WindowSample> train;
  std::vector<WindowSample> val;
  std::vector<WindowSample> test;
  std::vector<std::string> warnings;
};

struct SplitFractions {
  double train = 0.88;
  double val = 0.06;
  double test = 0.06;
};

enum class PartitionMode { by_subject, fedensemble_iid };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::by_subject;
  std::size_t partitions = 0;
  std::map<std::string, std::size_t> assignments;  // window id -> partition
};

// --- frame-level preprocessing -------------------------------------------

/// Collapses the five facial keypoints (nose, eyes, ears) into one head
/// point at their mean and copies the 12 body joints through.
PoseFrame merge_facial_keypoints(const RawKeypointFrame& raw);

/// Divides x by width and y by height, clamping to [0, 1].
PoseFrame normalize_frame(const PoseFrame& frame, double image_width,
                          double image_height);

/// Replaces keypoints with confidence below kMinKeypointConfidence by the
/// same keypoint from the previous frame of the recording, or by the image
/// centre for the first frame. Frames must belong to one recording, in order.
std::vector<RawKeypointFrame> repair_low_confidence(
    std::span<const RawKeypointFrame> recording, double image_width,
    double image_height);

// --- windowing, splitting, partitioning -----------------------------------

/// Stride-1 windows over every maximal run of consecutive, same-label
/// frames. A run of F frames yields max(0, F - 19) windows.
std::vector<WindowSample> slide_windows(const Recording& recording);

/// Per-class seeded shuffle followed by proportional assignment.
///
/// For each class of n windows the subsets first receive floor(f * n). Any
/// empty val/test subset is then topped up to one window (val first) as long
/// as train is non-empty, and what remains goes train, then val, then test.
/// Every subset stays within one window of its exact share.
ClientDataset stratified_split(const std::string& client_id,
                               std::span<const WindowSample> windows,
                               SplitFractions fractions, std::uint64_t seed);

/// Subject partition: clients are numbered in the given order.
PartitionPlan build_subject_partition(std::span<const WindowSample> windows,
                                      std::span<const std::string> client_order);

/// IID re-partition of pooled windows into k near-equal parts that each
/// draw on at least three original subjects (fewer only when a part has
/// fewer than three windows).
PartitionPlan build_fedensemble_partition(std::span<const WindowSample> windows,
                                          std::size_t k, std::uint64_t seed);

/// Groups windows by plan, preserving input order inside each partition.
std::vector<std::vector<WindowSample>> apply_partition(
    const PartitionPlan& plan, std::span<const WindowSample> windows);

// --- pipeline -------------------------------------------------------------

struct PrepareOptions {
  double image_width = 640.0;
  double image_height = 480.0;
  SplitFractions fractions{};
  std::uint64_t seed = 0;
};

/// Groups raw frames into recordings (sorted by client, recording, frame).
std::vector<Recording> build_recordings(std::span<const RawKeypointFrame> frames,
                                        double image_width, double image_height);

/// Full pipeline: repair, merge, normalize, window, and split per client.
/// Clients come out in lexicographic client-id order.
std::vector<ClientDataset> prepare_clients(std::span<const RawKeypointFrame> frames,
                                           const PrepareOptions& options);

// --- file formats ---------------------------------------------------------

/// JSON-lines raw frames. Throws DataError naming the line on bad input.
std::vector<RawKeypointFrame> parse_frames(std::istream& in);
std::vector<RawKeypointFrame> load_frames(const std::filesystem::path& path);
void write_frames(std::ostream& out, std::span<const RawKeypointFrame> frames);

/// A processed window plus the split it came from ("train", "val", "test"
/// or empty when unknown).
struct TaggedWindow {
  WindowSample window;
  std::string split;
};

void write_windows(std::ostream& out, std::span<const TaggedWindow> windows);
std::vector<TaggedWindow> parse_windows(std::istream& in);
std::vector<TaggedWindow> load_windows(const std::filesystem::path& path);

/// Flattens client datasets into tagged windows (train, val, test order).
std::vector<TaggedWindow> tag_splits(std::span<const ClientDataset> clients);

/// Inverse of tag_splits; clients in lexicographic order.
std::vector<ClientDataset> untag_splits(std::span<const TaggedWindow> windows);

/// Window counts per class.
std::array<std::size_t, kNumClasses> class_histogram(
    std::span<const WindowSample> windows);

}  // namespace fedhar
