#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"
#include "eventforge/stream_io.hpp"

namespace eventforge {

struct ReconstructParams {
  /// Ticks per output frame; 0 uses the stream's reference interval.
  Tick frame_ticks = 0;
  /// Maximum pending frames before the oldest is emitted with unfinished
  /// pixels holding their last intensity; 0 waits for every pixel.
  std::size_t buffer_limit = 0;
  double i_max = 255.0;
};

/// Time-weighted framed reconstruction. Each span contributes its rate over
/// the part of every frame it overlaps; a frame is emitted once every pixel
/// has an event past its end.
class FrameReconstructor {
 public:
  FrameReconstructor(const PlaneParams& plane, ReconstructParams params = {});

  void push(const Event& e, std::vector<Frame>& out);
  /// Emits the remaining frames up to the latest event time, extending
  /// unfinished pixels with their last intensity.
  void finish(std::vector<Frame>& out);

  Tick frame_ticks() const noexcept { return frame_ticks_; }
  std::size_t frames_emitted() const noexcept { return base_; }

 private:
  void add_span(const EventSpan& s);
  void advance_coverage(std::size_t idx, double t);
  void ensure_frame(std::size_t k);
  void emit_front(std::vector<Frame>& out, bool force);

  PlaneParams plane_;
  ReconstructParams params_;
  Tick frame_ticks_;
  SpanDecoder decoder_;
  std::vector<EventSpan> spans_;
  std::vector<double> covered_;
  std::size_t base_ = 0;
  std::deque<std::vector<double>> acc_;
  std::deque<std::size_t> complete_;
  double latest_ = 0.0;
};

/// Convenience wrapper over FrameReconstructor.
std::vector<Frame> reconstruct_frames(const PlaneParams& plane, std::span<const Event> events,
                                      ReconstructParams params = {});

/// Fast playback: each event sets its pixel to 2^D * frame_ticks / dt,
/// clamped to [0, i_max]. Zero events go black, filler events keep the
/// displayed value.
class InstantaneousSampler {
 public:
  InstantaneousSampler(const PlaneParams& plane, double i_max = 255.0, Tick frame_ticks = 0);

  /// Returns true when the event's t starts a new display interval.
  bool push(const Event& e);
  const Frame& image() const noexcept { return image_; }
  double value(std::size_t index) const { return values_[index]; }
  Tick frame_ticks() const noexcept { return frame_ticks_; }

 private:
  PlaneParams plane_;
  double i_max_;
  Tick frame_ticks_;
  SpanDecoder decoder_;
  std::vector<EventSpan> spans_;
  std::vector<double> values_;
  Frame image_;
  std::uint64_t interval_ = 0;
};

/// Latest D and dt per pixel for the log-intensity and timing views.
class EventImageTracker {
 public:
  explicit EventImageTracker(const PlaneParams& plane);

  void push(const Event& e);
  /// Min-max normalised over pixels with a non-reserved latest event;
  /// reserved or missing pixels render 0, a flat plane renders 255.
  GrayImage render_d() const;
  GrayImage render_dt() const;

 private:
  PlaneParams plane_;
  SpanDecoder decoder_;
  std::vector<EventSpan> spans_;
  std::vector<std::uint8_t> d_;
  std::vector<double> dt_;
};

/// Contrast-event export: a pixel's log intensity ln(1 + L), with
/// L = rate * ref / 255, is compared to its stored reference; k = round(delta
/// / theta) crossings become |k| events at the start of the span.
class DvsExporter {
 public:
  DvsExporter(const PlaneParams& plane, double theta = 0.15);

  void push(const Event& e, std::vector<DvsEvent>& out);

 private:
  PlaneParams plane_;
  double theta_;
  SpanDecoder decoder_;
  std::vector<EventSpan> spans_;
  std::vector<double> reference_;
  std::vector<bool> seen_;
};

/// Whole-stream export, sorted by t (stable).
std::vector<DvsEvent> export_dvs(const PlaneParams& plane, std::span<const Event> events,
                                 double theta = 0.15);

}  // namespace eventforge
