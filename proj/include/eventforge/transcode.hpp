#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"
#include "eventforge/pixel.hpp"
#include "eventforge/vision.hpp"

namespace eventforge {

enum class ExecPolicy { Serial, Parallel };

/// Feature-driven rate control: pixels near a detected corner get their
/// contrast threshold lowered to `target_m` and regrow from there.
struct FeatureFeedback {
  bool detect = false;
  bool feedback = false;
  double target_m = 0.0;
  std::uint32_t radius = 0;
  FastParams fast;
};

/// Framed video to events. Every frame integrates one value per pixel over
/// the reference interval.
class FramedTranscoder {
 public:
  FramedTranscoder(const PlaneParams& plane, const SensitivityParams& sens,
                   ExecPolicy policy = ExecPolicy::Parallel);

  const PlaneParams& plane() const noexcept { return plane_; }
  std::size_t frames() const noexcept { return frames_; }
  Tick now() const noexcept { return static_cast<Tick>(frames_ * plane_.ref_interval); }

  /// Takes effect from the next frame.
  void set_sensitivity(const SensitivityParams& sens);
  const SensitivityParams& sensitivity() const noexcept { return sens_; }
  void set_features(const FeatureFeedback& features) { features_ = features; }
  const FeatureFeedback& features() const noexcept { return features_; }

  /// Throws Error(Dimension) when the frame does not match the plane.
  std::vector<Event> push_frame(const Frame& frame);
  /// Flushes every pixel; the transcoder accepts no frames afterwards.
  std::vector<Event> finish();

  /// Lowers M within Chebyshev distance `radius` of each point.
  void apply_feature_feedback(std::span<const FeaturePoint> points, std::uint32_t radius,
                              double target_m);
  const std::vector<FeaturePoint>& last_features() const noexcept { return features_found_; }

  /// Current level (baseline) of every pixel, the live intensity view.
  Frame level_image() const;
  const PixelState& pixel(std::size_t index) const { return pixels_[index]; }

 private:
  void process_row(int y, const Frame& frame, std::vector<Event>& out);
  void detect_features();

  PlaneParams plane_;
  SensitivityParams sens_;
  ExecPolicy policy_;
  FeatureFeedback features_;
  std::vector<PixelState> pixels_;
  std::vector<std::uint8_t> flushed_;
  std::vector<std::vector<Event>> rows_;
  std::vector<FeaturePoint> features_found_;
  GrayImage canvas_;
  std::size_t frames_ = 0;
  bool finished_ = false;
};

struct DvsParams {
  double theta = 0.15;
  /// Latent image returns to mid-gray this often (ticks); 0 disables.
  Tick reset_interval = 500'000;
  /// Events may arrive this many ticks out of order.
  Tick reorder_tolerance = 1'000;
};

/// Plane defaults for contrast-event sources: microsecond ticks.
PlaneParams dvs_plane(std::uint16_t width, std::uint16_t height, Tick dt_max = 1'000'000);

/// Contrast events to intensity events through a latent log image
/// ln(1 + L), L in [0, 1]. Each pixel integrates its latent intensity
/// between its updates.
class DvsTranscoder {
 public:
  DvsTranscoder(const PlaneParams& plane, const SensitivityParams& sens, DvsParams params = {});

  std::vector<Event> push(std::span<const DvsEvent> events);
  /// Integrates every pixel up to max(end_t, last event) and flushes.
  std::vector<Event> finish(Tick end_t = 0);

  std::size_t dropped() const noexcept { return dropped_; }
  double latent(std::uint16_t x, std::uint16_t y) const;

 private:
  void process(const DvsEvent& e, std::vector<Event>& out);
  void advance_resets(Tick t, std::vector<Event>& out);
  void advance_pixel(std::size_t idx, Tick t, std::vector<Event>& out);
  void relevel(std::size_t idx, std::vector<Event>& out);
  void drain(Tick upto, std::vector<Event>& out);

  PlaneParams plane_;
  SensitivityParams sens_;
  DvsParams params_;
  std::vector<PixelState> pixels_;
  std::vector<double> log_level_;
  std::vector<Tick> last_;
  std::vector<DvsEvent> pending_;
  std::vector<Emission> scratch_;
  Tick next_reset_;
  Tick newest_ = 0;
  Tick processed_ = 0;
  std::size_t dropped_ = 0;
};

/// Feeds an existing event stream back through fresh pixels under new
/// parameters. Planes must agree on geometry and ticks per second.
std::vector<Event> reencode(const PlaneParams& in_plane, std::span<const Event> events,
                            const PlaneParams& out_plane, const SensitivityParams& sens);

/// Whole-video transcode: every frame, then a flush, events stable-sorted by
/// t. Frames must match the plane.
std::vector<Event> transcode_video(const PlaneParams& plane, std::span<const Frame> frames,
                                   const SensitivityParams& sens,
                                   ExecPolicy policy = ExecPolicy::Parallel,
                                   const FeatureFeedback& features = {});

/// Converts one pixel's emissions to events.
void append_emissions(std::vector<Event>& out, std::span<const Emission> emissions,
                      std::uint16_t x, std::uint16_t y, std::uint8_t c);

}  // namespace eventforge
