#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedhar/models.hpp"
#include "fedhar/nn/parameters.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/rng.hpp"

namespace fedhar::testing {

inline WindowSample constant_window(GestureLabel label, const std::string& client,
                                    const std::string& recording, std::uint64_t start,
                                    double fill = 0.5) {
  WindowSample w;
  w.frames.setConstant(fill);
  w.label = label;
  w.client_id = client;
  w.recording_id = recording;
  w.start_frame = start;
  return w;
}

inline WindowSample random_window(Rng& rng, GestureLabel label, const std::string& client,
                                  const std::string& recording, std::uint64_t start) {
  auto w = constant_window(label, client, recording, start);
  for (Eigen::Index c = 0; c < w.frames.cols(); ++c)
    for (Eigen::Index r = 0; r < w.frames.rows(); ++r) w.frames(r, c) = rng.uniform();
  return w;
}

/// n windows of one class, distinct ids.
inline std::vector<WindowSample> windows_of(GestureLabel label, std::size_t n,
                                            const std::string& client = "c1",
                                            const std::string& recording = "r1") {
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(constant_window(label, client, recording + "-" + std::string(to_string(label)), i,
                                  static_cast<double>(i) / static_cast<double>(n + 1)));
  }
  return out;
}

/// Round-robin labels, random coordinates.
inline std::vector<WindowSample> random_windows(Rng& rng, std::size_t n,
                                                const std::string& client = "c1") {
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(random_window(rng, gesture_at(i % kNumClasses), client, "r1", i));
  }
  return out;
}

inline RawKeypointFrame random_raw_frame(Rng& rng, const std::string& client,
                                         const std::string& recording, std::uint64_t index,
                                         GestureLabel label, double width = 640.0,
                                         double height = 480.0) {
  RawKeypointFrame f;
  f.client_id = client;
  f.recording_id = recording;
  f.frame_index = index;
  f.label = label;
  for (auto& kp : f.keypoints) {
    kp.x = rng.uniform(0.0, width);
    kp.y = rng.uniform(0.0, height);
    kp.confidence = rng.uniform(0.5, 1.0);
  }
  return f;
}

inline nn::ParameterSet random_parameters(
    Rng& rng, const std::vector<std::pair<std::string, std::pair<int, int>>>& shapes,
    double scale = 1.0) {
  nn::ParameterSet p;
  for (const auto& [name, shape] : shapes) {
    nn::MatrixXr m(shape.first, shape.second);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
    p.add(name, m);
  }
  return p;
}

inline nn::MatrixXr random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                  double scale = 1.0) {
  nn::MatrixXr m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
  return m;
}

inline ModelConfig tiny_lstm(std::size_t hidden = 8, std::size_t layers = 2) {
  ModelConfig c;
  c.kind = ModelKind::lstm;
  c.lstm.hidden = hidden;
  c.lstm.layers = layers;
  return c;
}

inline ModelConfig tiny_transformer(std::size_t d_model = 8, std::size_t heads = 2,
                                    std::size_t layers = 1, std::size_t ff = 16) {
  ModelConfig c;
  c.kind = ModelKind::transformer;
  c.transformer.d_model = d_model;
  c.transformer.heads = heads;
  c.transformer.encoder_layers = layers;
  c.transformer.feedforward_dim = ff;
  return c;
}

}  // namespace fedhar::testing
