#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace eventforge {

/// Absolute time in codec ticks.
using Tick = std::uint32_t;

inline constexpr std::uint8_t kMaxD = 127;
/// Zero-intensity event: nothing integrated over the span.
inline constexpr std::uint8_t kZeroD = 254;
/// Collapse-mode filler: span carries the previous event's average intensity.
inline constexpr std::uint8_t kFillerD = 255;

inline constexpr Tick kInfiniteTicks = std::numeric_limits<Tick>::max();

constexpr bool is_reserved(std::uint8_t d) noexcept { return d > kMaxD; }
constexpr bool is_valid_d(std::uint8_t d) noexcept {
  return d <= kMaxD || d == kZeroD || d == kFillerD;
}

/// One intensity event <x, y, c, D, t>. `t` is the absolute end of the span
/// that began at the pixel's previous event.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t c = 0;
  std::uint8_t d = 0;
  Tick t = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Contrast event <x, y, p, t> in microsecond ticks.
struct DvsEvent {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;
  Tick t = 0;

  friend bool operator==(const DvsEvent&, const DvsEvent&) = default;
};

enum class SourceKind : std::uint8_t { Framed = 0, Dvs = 1, Adder = 2, Simulated = 3 };
enum class PixelMode : std::uint8_t { Collapse = 0, List = 1 };

const char* to_string(SourceKind kind) noexcept;
const char* to_string(PixelMode mode) noexcept;

/// Plane geometry and the time base shared by a whole stream.
struct PlaneParams {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t channels = 1;
  Tick ticks_per_second = 255 * 30;
  Tick ref_interval = 255;
  Tick dt_max = 255 * 120;
  SourceKind source = SourceKind::Framed;
  PixelMode mode = PixelMode::Collapse;

  std::size_t pixel_count() const noexcept {
    return std::size_t(width) * height * channels;
  }
  std::size_t index(std::uint16_t x, std::uint16_t y, std::uint8_t c) const noexcept {
    return (std::size_t(y) * width + x) * channels + c;
  }
  /// Throws Error(Parameter) on impossible combinations.
  void validate() const;

  friend bool operator==(const PlaneParams&, const PlaneParams&) = default;
};

/// Contrast-threshold controls, in intensity units per reference interval.
struct SensitivityParams {
  double m = 0.0;
  double m_max = 0.0;
  std::uint32_t m_velocity = 1;
  std::uint32_t feature_radius = 0;

  void validate() const;
};

inline double pow2(int d) noexcept { return std::ldexp(1.0, d); }

/// floor(log2(v)) clamped to [0, kMaxD]; values below 1 map to 0.
inline int floor_log2_clamped(double v) noexcept {
  if (!(v >= 1.0)) return 0;
  int e = std::ilogb(v);
  return e > kMaxD ? kMaxD : e;
}

}  // namespace eventforge
