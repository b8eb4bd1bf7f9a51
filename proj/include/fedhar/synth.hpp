#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedhar/pose_dataset.hpp"

namespace fedhar {

/// Parameters of the synthetic gesture generator. Distances are in body
/// units (standing height ~ 1) unless noted.
struct SynthSpec {
  std::size_t subjects = 5;
  std::size_t recordings_per_subject = 1;
  std::size_t frames_per_recording = 600;
  double image_width = 640.0;
  double image_height = 480.0;
  std::size_t min_segment = 30;  ///< frames per gesture segment
  std::size_t max_segment = 60;
  double style_strength = 0.08;  ///< per-subject, per-class pose offset (stddev)
  double placement_jitter = 0.12;  ///< per-subject body translation (stddev)
  double class_skew = 1.0;  ///< log-normal spread of per-subject class weights
  double noise = 0.01;  ///< per-frame keypoint noise (stddev)
  double low_confidence_rate = 0.01;  ///< probability a keypoint drops out
};

/// Client id of the i-th synthetic subject (0-based), e.g. "s1".
std::string synthetic_client_id(std::size_t subject, std::size_t subjects);

/// Deterministic COCO-17 frames for every subject and recording, ordered by
/// subject, recording, then frame index. Pixel coordinates.
std::vector<RawKeypointFrame> synthesize_dataset(const SynthSpec& spec,
                                                 std::uint64_t seed);

}  // namespace fedhar
