#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "fedhar/gesture.hpp"

namespace fedhar {

/// Rows are true classes, columns predicted classes, canonical order.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(GestureLabel truth, GestureLabel predicted) {
    ++counts[index_of(truth)][index_of(predicted)];
  }

  std::uint64_t total() const noexcept {
    std::uint64_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }

  std::uint64_t correct() const noexcept {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
  }

  /// trace / total, 0 for an empty matrix.
  double accuracy() const noexcept {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
  }

  /// Recall of each class; NaN-free: classes with no samples report 0.
  std::array<double, kNumClasses> per_class_accuracy() const noexcept {
    std::array<double, kNumClasses> out{};
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      std::uint64_t row = 0;
      for (auto c : counts[i]) row += c;
      out[i] = row == 0 ? 0.0 : static_cast<double>(counts[i][i]) / static_cast<double>(row);
    }
    return out;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

}  // namespace fedhar
