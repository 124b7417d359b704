#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/vision.hpp"

namespace eventforge {

/// Event-driven FAST over an intensity stream: each non-filler event updates
/// the instantaneous canvas at its pixel and tests only that pixel.
std::vector<FeaturePoint> detect_stream_features(const PlaneParams& plane,
                                                 std::span<const Event> events,
                                                 const FastParams& fast = {},
                                                 std::uint64_t* pixel_tests = nullptr);

struct DvsFilterParams {
  double eps = 4.0;
  std::size_t min_pts = 4;
  double keep_inside = 0.5;
  double keep_outside = 0.0;
  std::uint64_t seed = 1;
  Tick window = 1'000'000 / 30;
  FastParams fast;
};

struct DvsFilterResult {
  std::vector<DvsEvent> events;
  /// Cluster boxes per window, window k covering [k*window, (k+1)*window).
  std::vector<std::vector<Box>> boxes;
  std::size_t feature_count = 0;
};

/// Transcodes the DVS stream losslessly, detects features on it, clusters
/// them per window and thins the DVS events by their boxes.
DvsFilterResult filter_dvs_with_features(std::span<const DvsEvent> events, std::uint16_t width,
                                         std::uint16_t height, const DvsFilterParams& params);

}  // namespace eventforge
