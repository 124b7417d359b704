#include "eventforge/apps.hpp"

#include <algorithm>
#include <cmath>

#include "eventforge/error.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/transcode.hpp"

namespace eventforge {

std::vector<FeaturePoint> detect_stream_features(const PlaneParams& plane,
                                                 std::span<const Event> events,
                                                 const FastParams& fast,
                                                 std::uint64_t* pixel_tests) {
  InstantaneousSampler sampler(plane);
  AsyncFast detector(plane.width, plane.height, fast);
  std::vector<FeaturePoint> out;
  for (const Event& e : events) {
    sampler.push(e);
    if (e.d == kFillerD) continue;
    double luma;
    if (plane.channels == 3) {
      const std::size_t base = plane.index(e.x, e.y, 0);
      luma = 0.299 * sampler.value(base) + 0.587 * sampler.value(base + 1) +
             0.114 * sampler.value(base + 2);
    } else {
      luma = sampler.value(plane.index(e.x, e.y, 0));
    }
    const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
    if (auto f = detector.update(e.x, e.y, v, e.t)) out.push_back(*f);
  }
  if (pixel_tests) *pixel_tests = detector.pixel_tests();
  return out;
}

DvsFilterResult filter_dvs_with_features(std::span<const DvsEvent> events, std::uint16_t width,
                                         std::uint16_t height, const DvsFilterParams& params) {
  if (params.window == 0) throw Error(ErrorKind::Parameter, "filter window must be positive");
  DvsFilterResult result;
  if (events.empty()) return result;

  const PlaneParams plane = dvs_plane(width, height);
  DvsTranscoder tx(plane, {});
  std::vector<Event> adder = tx.push(events);
  Tick end = 0;
  for (const DvsEvent& e : events) end = std::max(end, e.t);
  auto tail = tx.finish(end);
  adder.insert(adder.end(), tail.begin(), tail.end());
  std::stable_sort(adder.begin(), adder.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });

  const auto features = detect_stream_features(plane, adder, params.fast);
  result.feature_count = features.size();

  const std::size_t windows = end / params.window + 1;
  std::vector<std::vector<Point2>> points(windows);
  for (const FeaturePoint& f : features) {
    const std::size_t k = std::min<std::size_t>(f.t / params.window, windows - 1);
    points[k].push_back({double(f.x), double(f.y)});
  }
  std::vector<std::vector<DvsEvent>> buckets(windows);
  for (const DvsEvent& e : events) buckets[e.t / params.window].push_back(e);

  result.boxes.resize(windows);
  for (std::size_t k = 0; k < windows; ++k) {
    result.boxes[k] = cluster_boxes(points[k], params.eps, params.min_pts);
    auto kept = filter_dvs_by_boxes(buckets[k], result.boxes[k], params.keep_inside,
                                    params.keep_outside, params.seed + k * 0x9E3779B97F4A7C15ULL);
    result.events.insert(result.events.end(), kept.begin(), kept.end());
  }
  return result;
}

}  // namespace eventforge
