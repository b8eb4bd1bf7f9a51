#include "fedhar/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fedhar/error.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

namespace {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Standing rest pose in body units, COCO order, origin at the pelvis-ish
// centre of the image, y pointing down.
constexpr std::array<Point, kCocoKeypoints> kRestPose = {{
    {0.00, -0.42},                    // nose
    {-0.02, -0.44}, {0.02, -0.44},    // eyes
    {-0.05, -0.42}, {0.05, -0.42},    // ears
    {-0.12, -0.30}, {0.12, -0.30},    // shoulders
    {-0.15, -0.12}, {0.15, -0.12},    // elbows
    {-0.16, 0.02},  {0.16, 0.02},     // wrists
    {-0.08, 0.05},  {0.08, 0.05},     // hips
    {-0.08, 0.27},  {0.08, 0.27},     // knees
    {-0.08, 0.48},  {0.08, 0.48},     // ankles
}};

// Arm joints animated by a gesture: left/right elbow, left/right wrist.
constexpr std::array<std::size_t, 4> kArmJoints = {7, 8, 9, 10};

/// A gesture: static arm pose plus a periodic displacement.
struct GestureTemplate {
  std::array<Point, 4> pose;        // absolute arm joint positions
  std::array<Point, 4> amplitude;   // oscillation amplitude per joint
  double period;                    // frames per cycle
};

// Indexed by GestureLabel. Each class places the hands somewhere distinct
// and moves them along a class-specific axis.
const std::array<GestureTemplate, kNumClasses>& gesture_templates() {
  static const std::array<GestureTemplate, kNumClasses> templates = {{
      // down: right hand sweeps through the waist region
      {{{{-0.15, -0.12}, {0.20, -0.05}, {-0.16, 0.02}, {0.22, 0.05}}},
       {{{0, 0}, {0, 0.04}, {0, 0}, {0, 0.10}}}, 22},
      // grab: both hands forward and close together, pinching
      {{{{-0.12, -0.15}, {0.12, -0.15}, {-0.05, -0.20}, {0.05, -0.20}}},
       {{{0.01, 0}, {-0.01, 0}, {0.04, 0.01}, {-0.04, 0.01}}}, 18},
      // left: both hands at chest height drifting left
      {{{{-0.22, -0.20}, {0.00, -0.20}, {-0.32, -0.24}, {-0.08, -0.24}}},
       {{{0.05, 0}, {0.05, 0}, {0.10, 0}, {0.10, 0}}}, 24},
      // nothing: rest with a slight sway
      {{{{-0.15, -0.12}, {0.15, -0.12}, {-0.16, 0.02}, {0.16, 0.02}}},
       {{{0.005, 0}, {0.005, 0}, {0.01, 0.005}, {0.01, 0.005}}}, 40},
      // right: mirror of left
      {{{{0.00, -0.20}, {0.22, -0.20}, {0.08, -0.24}, {0.32, -0.24}}},
       {{{0.05, 0}, {0.05, 0}, {0.10, 0}, {0.10, 0}}}, 24},
      // stop: right arm extended sideways at shoulder height
      {{{{-0.15, -0.12}, {0.26, -0.30}, {-0.16, 0.02}, {0.38, -0.36}}},
       {{{0, 0}, {0.005, 0.005}, {0, 0}, {0.01, 0.01}}}, 30},
      // ungrab: both hands wide apart at chest height, opening
      {{{{-0.24, -0.16}, {0.24, -0.16}, {-0.30, -0.22}, {0.30, -0.22}}},
       {{{-0.01, 0}, {0.01, 0}, {-0.05, 0.01}, {0.05, 0.01}}}, 18},
      // up: right hand raised above the head, pumping
      {{{{-0.15, -0.12}, {0.18, -0.38}, {-0.16, 0.02}, {0.20, -0.55}}},
       {{{0, 0}, {0, 0.04}, {0, 0}, {0, 0.09}}}, 22},
  }};
  return templates;
}

struct SubjectStyle {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;
  double amplitude = 1.0;
  double tempo = 1.0;
  double phase = 0.0;
  std::array<std::array<Point, 4>, kNumClasses> class_offsets{};
  std::array<double, kNumClasses> class_weights{};
};

SubjectStyle draw_style(const SynthSpec& spec, Rng& rng) {
  SubjectStyle s;
  s.offset_x = rng.normal(0.0, spec.placement_jitter);
  s.offset_y = rng.normal(0.0, 0.5 * spec.placement_jitter);
  s.scale = rng.uniform(0.85, 1.15);
  s.amplitude = rng.uniform(0.6, 1.4);
  s.tempo = rng.uniform(0.75, 1.3);
  s.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (auto& joints : s.class_offsets) {
    for (auto& p : joints) {
      p.x = rng.normal(0.0, spec.style_strength);
      p.y = rng.normal(0.0, spec.style_strength);
    }
  }
  for (auto& w : s.class_weights) w = std::exp(spec.class_skew * rng.normal());
  return s;
}

GestureLabel draw_label(const SubjectStyle& style, Rng& rng) {
  double total = 0.0;
  for (double w : style.class_weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    u -= style.class_weights[c];
    if (u < 0.0) return gesture_at(c);
  }
  return gesture_at(kNumClasses - 1);
}

}  // namespace

std::string synthetic_client_id(std::size_t subject, std::size_t subjects) {
  const auto digits = std::to_string(std::max<std::size_t>(subjects, 1)).size();
  auto number = std::to_string(subject + 1);
  number.insert(0, digits - std::min(digits, number.size()), '0');
  return "s" + number;
}

std::vector<RawKeypointFrame> synthesize_dataset(const SynthSpec& spec,
                                                 std::uint64_t seed) {
  if (spec.min_segment == 0 || spec.min_segment > spec.max_segment) {
    throw ConfigError("synthetic segment lengths need 0 < min_segment <= max_segment");
  }
  if (!(spec.image_width > 0.0) || !(spec.image_height > 0.0)) {
    throw ConfigError("synthetic image dimensions must be positive");
  }

  const auto& templates = gesture_templates();
  const double body_px = 0.8 * spec.image_height;
  std::vector<RawKeypointFrame> frames;
  frames.reserve(spec.subjects * spec.recordings_per_subject * spec.frames_per_recording);

  for (std::size_t subject = 0; subject < spec.subjects; ++subject) {
    Rng style_rng(mix_seed(seed, 0x5717e, subject));
    const SubjectStyle style = draw_style(spec, style_rng);
    const std::string client = synthetic_client_id(subject, spec.subjects);

    for (std::size_t rec = 0; rec < spec.recordings_per_subject; ++rec) {
      Rng rng(mix_seed(seed, subject, rec));
      const std::string recording = "r" + std::to_string(rec + 1);

      std::size_t segment = 0;
      std::size_t frame = 0;
      while (frame < spec.frames_per_recording) {
        // The first two segments of the first recording rotate through the
        // classes so small datasets still cover all eight labels.
        GestureLabel label;
        if (rec == 0 && segment < 2) {
          label = gesture_at((2 * subject + segment) % kNumClasses);
        } else {
          label = draw_label(style, rng);
        }
        const auto length = static_cast<std::size_t>(
            spec.min_segment + rng.below(spec.max_segment - spec.min_segment + 1));
        const auto& tmpl = templates[index_of(label)];
        const auto& offsets = style.class_offsets[index_of(label)];
        const double phase0 = style.phase + rng.uniform(0.0, 2.0 * std::numbers::pi);

        for (std::size_t t = 0; t < length && frame < spec.frames_per_recording; ++t, ++frame) {
          const double angle =
              phase0 + 2.0 * std::numbers::pi * style.tempo * static_cast<double>(t) / tmpl.period;
          std::array<Point, kCocoKeypoints> pose = kRestPose;
          for (std::size_t a = 0; a < kArmJoints.size(); ++a) {
            auto& p = pose[kArmJoints[a]];
            p.x = tmpl.pose[a].x + offsets[a].x + style.amplitude * tmpl.amplitude[a].x * std::sin(angle);
            p.y = tmpl.pose[a].y + offsets[a].y + style.amplitude * tmpl.amplitude[a].y * std::sin(angle);
          }
          // Gentle head bob shared by the facial keypoints.
          const double bob = 0.004 * std::sin(0.5 * angle);

          RawKeypointFrame raw;
          raw.client_id = client;
          raw.recording_id = recording;
          raw.frame_index = frame;
          raw.label = label;
          for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
            const double bx = pose[k].x + rng.normal(0.0, spec.noise);
            const double by = pose[k].y + (k < 5 ? bob : 0.0) + rng.normal(0.0, spec.noise);
            auto& kp = raw.keypoints[k];
            kp.x = 0.5 * spec.image_width + body_px * (style.scale * bx + style.offset_x);
            kp.y = 0.5 * spec.image_height + body_px * (style.scale * by + style.offset_y);
            kp.confidence = rng.uniform(0.6, 1.0);
            if (rng.uniform() < spec.low_confidence_rate) {
              kp.confidence = rng.uniform(0.0, 0.04);
              kp.x = rng.uniform(0.0, spec.image_width);
              kp.y = rng.uniform(0.0, spec.image_height);
            }
          }
          frames.push_back(std::move(raw));
        }
        ++segment;
      }
    }
  }
  return frames;
}

}  // namespace fedhar
