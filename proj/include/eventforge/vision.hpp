#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"

namespace eventforge {

struct FastParams {
  int threshold = 10;
  int arc = 9;
};

struct FeaturePoint {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Tick t = 0;

  friend bool operator==(const FeaturePoint&, const FeaturePoint&) = default;
};

/// Segment test at one pixel: a contiguous arc of at least `arc` pixels on
/// the radius-3 circle all brighter than center+threshold or all darker than
/// center-threshold. Pixels closer than 3 to the border never pass.
bool fast_test_pixel(const GrayImage& img, int x, int y, const FastParams& params);

/// Frame-based detector over every pixel. Uses per-pixel 16-bit
/// bright/dark masks and rotation matching, independent of fast_test_pixel.
std::vector<FeaturePoint> fast_detect_dense(const GrayImage& img, const FastParams& params,
                                            std::uint64_t* pixel_tests = nullptr);

/// Event-driven detector: keeps one canvas and tests only the pixel an
/// update touched.
class AsyncFast {
 public:
  AsyncFast(std::uint16_t width, std::uint16_t height, FastParams params = {});

  const GrayImage& canvas() const noexcept { return canvas_; }
  GrayImage& canvas() noexcept { return canvas_; }
  std::uint64_t pixel_tests() const noexcept { return tests_; }

  /// Writes the pixel first, then tests it.
  std::optional<FeaturePoint> update(std::uint16_t x, std::uint16_t y, std::uint8_t value,
                                     Tick t);

 private:
  GrayImage canvas_;
  FastParams params_;
  std::uint64_t tests_ = 0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // inclusive
  int y1 = 0;  // inclusive

  bool contains(int x, int y) const noexcept {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

inline constexpr int kNoise = -1;

/// DBSCAN with Euclidean eps; min_pts counts the point itself. Returns one
/// label per point (kNoise or cluster id in discovery order).
std::vector<int> dbscan(std::span<const Point2> points, double eps, std::size_t min_pts);

/// Axis-aligned bounding boxes of the clusters found by dbscan().
std::vector<Box> cluster_boxes(std::span<const Point2> points, double eps, std::size_t min_pts);

/// Keeps DVS events with probability keep_inside inside any box and
/// keep_outside elsewhere. Deterministic for a fixed seed.
std::vector<DvsEvent> filter_dvs_by_boxes(std::span<const DvsEvent> events,
                                          std::span<const Box> boxes, double keep_inside,
                                          double keep_outside, std::uint64_t seed);

struct MotionMask {
  Tick start = 0;
  GrayImage mask;  // 0 or 255
};

/// Event-rate segmentation: a pixel is set when it fired more than
/// `fire_threshold` events in a window, followed by a square closing of the
/// given radius (0 disables closing).
std::vector<MotionMask> segment_motion(std::span<const Event> events, std::uint16_t width,
                                       std::uint16_t height, Tick window,
                                       std::uint32_t fire_threshold, int close_radius = 1);

/// Square morphological closing; outside pixels do not erode the border.
GrayImage close_mask(const GrayImage& mask, int radius);

}  // namespace eventforge
