#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace fedhar {

/// The eight gesture classes, in canonical (alphabetical) index order.
enum class GestureLabel : std::uint8_t {
  down = 0,
  grab,
  left,
  nothing,
  right,
  stop,
  ungrab,
  up,
};

inline constexpr std::size_t kNumClasses = 8;

inline constexpr std::array<std::string_view, kNumClasses> kGestureNames = {
    "down", "grab", "left", "nothing", "right", "stop", "ungrab", "up"};

constexpr std::size_t index_of(GestureLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

constexpr GestureLabel gesture_at(std::size_t index) noexcept {
  return static_cast<GestureLabel>(index);
}

constexpr std::string_view to_string(GestureLabel label) noexcept {
  return kGestureNames[index_of(label)];
}

constexpr std::optional<GestureLabel> parse_gesture(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kGestureNames[i] == name) return gesture_at(i);
  }
  return std::nullopt;
}

}  // namespace fedhar
