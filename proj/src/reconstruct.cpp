#include "eventforge/reconstruct.hpp"

#include <algorithm>
#include <cmath>

#include "eventforge/error.hpp"

namespace eventforge {

namespace {

std::uint16_t quantize(double v, double i_max) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, i_max)));
}

}  // namespace

FrameReconstructor::FrameReconstructor(const PlaneParams& plane, ReconstructParams params)
    : plane_(plane),
      params_(params),
      frame_ticks_(params.frame_ticks ? params.frame_ticks : plane.ref_interval),
      decoder_(plane),
      covered_(plane.pixel_count(), 0.0) {
  if (frame_ticks_ == 0) throw Error(ErrorKind::Parameter, "frame interval must be non-zero");
}

void FrameReconstructor::ensure_frame(std::size_t k) {
  while (base_ + acc_.size() <= k) {
    acc_.emplace_back(plane_.pixel_count(), 0.0);
    complete_.push_back(0);
  }
}

void FrameReconstructor::add_span(const EventSpan& s) {
  if (!(s.end > s.start) || s.rate == 0.0) return;
  const double ft = frame_ticks_;
  const std::size_t idx = plane_.index(s.x, s.y, s.c);
  const auto first = static_cast<std::size_t>(s.start / ft);
  const auto last = static_cast<std::size_t>(std::ceil(s.end / ft)) - 1;
  ensure_frame(last);
  for (std::size_t k = std::max(first, base_); k <= last; ++k) {
    const double lo = std::max(s.start, k * ft);
    const double hi = std::min(s.end, (k + 1) * ft);
    if (hi > lo) acc_[k - base_][idx] += s.rate * (hi - lo);
  }
}

void FrameReconstructor::advance_coverage(std::size_t idx, double t) {
  const double old = covered_[idx];
  if (!(t > old)) return;
  const double ft = frame_ticks_;
  // Frames whose end lies in (old, t] become complete for this pixel.
  const auto done_before = static_cast<std::size_t>(std::floor(old / ft));
  const auto done_after = static_cast<std::size_t>(std::floor(t / ft));
  if (done_after > 0) ensure_frame(done_after - 1);
  for (std::size_t k = std::max(done_before, base_); k < done_after; ++k) {
    ++complete_[k - base_];
  }
  covered_[idx] = t;
  latest_ = std::max(latest_, t);
}

void FrameReconstructor::emit_front(std::vector<Frame>& out, bool force) {
  const double ft = frame_ticks_;
  const double end = (base_ + 1) * ft;
  std::vector<double>& acc = acc_.front();
  if (force) {
    for (std::size_t idx = 0; idx < covered_.size(); ++idx) {
      if (covered_[idx] >= end) continue;
      const double from = std::max(covered_[idx], base_ * ft);
      acc[idx] += decoder_.last_rate(idx) * (end - from);
    }
  }
  Frame f(plane_.width, plane_.height, plane_.channels);
  const double scale = double(plane_.ref_interval) / ft;
  for (std::size_t i = 0; i < acc.size(); ++i) f.data[i] = quantize(acc[i] * scale, params_.i_max);
  out.push_back(std::move(f));
  acc_.pop_front();
  complete_.pop_front();
  ++base_;
}

void FrameReconstructor::push(const Event& e, std::vector<Frame>& out) {
  spans_.clear();
  decoder_.decode(e, spans_);
  for (const EventSpan& s : spans_) add_span(s);
  advance_coverage(plane_.index(e.x, e.y, e.c), std::max(spans_.back().end, 0.0));
  while (!acc_.empty() && complete_.front() == covered_.size()) emit_front(out, false);
  while (params_.buffer_limit && acc_.size() > params_.buffer_limit) emit_front(out, true);
}

void FrameReconstructor::finish(std::vector<Frame>& out) {
  const auto total = static_cast<std::size_t>(std::ceil(latest_ / frame_ticks_));
  if (total > base_) ensure_frame(total - 1);
  while (base_ < total) emit_front(out, true);
}

std::vector<Frame> reconstruct_frames(const PlaneParams& plane, std::span<const Event> events,
                                      ReconstructParams params) {
  FrameReconstructor rec(plane, params);
  std::vector<Frame> frames;
  for (const Event& e : events) rec.push(e, frames);
  rec.finish(frames);
  return frames;
}

InstantaneousSampler::InstantaneousSampler(const PlaneParams& plane, double i_max,
                                           Tick frame_ticks)
    : plane_(plane),
      i_max_(i_max),
      frame_ticks_(frame_ticks ? frame_ticks : plane.ref_interval),
      decoder_(plane),
      values_(plane.pixel_count(), 0.0),
      image_(plane.width, plane.height, plane.channels) {}

bool InstantaneousSampler::push(const Event& e) {
  spans_.clear();
  decoder_.decode(e, spans_);
  const EventSpan& s = spans_.back();
  const std::size_t idx = plane_.index(e.x, e.y, e.c);
  if (e.d == kZeroD) {
    values_[idx] = 0.0;
  } else if (e.d != kFillerD && s.end > s.start) {
    values_[idx] = std::clamp(pow2(e.d) * frame_ticks_ / (s.end - s.start), 0.0, i_max_);
  }
  image_.data[idx] = quantize(values_[idx], i_max_);
  const std::uint64_t interval = e.t / frame_ticks_;
  if (interval > interval_) {
    interval_ = interval;
    return true;
  }
  return false;
}

EventImageTracker::EventImageTracker(const PlaneParams& plane)
    : plane_(plane),
      decoder_(plane),
      d_(plane.pixel_count(), kZeroD),
      dt_(plane.pixel_count(), 0.0) {}

void EventImageTracker::push(const Event& e) {
  spans_.clear();
  decoder_.decode(e, spans_);
  const std::size_t idx = plane_.index(e.x, e.y, e.c);
  if (e.d == kFillerD && !is_reserved(d_[idx])) {
    // A filler continues the previous level; keep its D, extend nothing.
    return;
  }
  d_[idx] = e.d;
  dt_[idx] = spans_.back().end - spans_.back().start;
}

namespace {

template <typename Value>
GrayImage normalise(const PlaneParams& plane, const std::vector<std::uint8_t>& d,
                    Value value) {
  GrayImage img(plane.width, plane.height);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const std::size_t ch = plane.channels;
  for (std::size_t p = 0; p < img.pixels.size(); ++p) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t idx = p * ch + c;
      if (is_reserved(d[idx])) continue;
      lo = std::min(lo, value(idx));
      hi = std::max(hi, value(idx));
    }
  }
  for (std::size_t p = 0; p < img.pixels.size(); ++p) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t idx = p * ch + c;
      if (is_reserved(d[idx])) continue;
      sum += hi > lo ? 255.0 * (value(idx) - lo) / (hi - lo) : 255.0;
      ++n;
    }
    img.pixels[p] = n ? static_cast<std::uint8_t>(std::lround(sum / double(n))) : 0;
  }
  return img;
}

}  // namespace

GrayImage EventImageTracker::render_d() const {
  return normalise(plane_, d_, [this](std::size_t i) { return double(d_[i]); });
}

GrayImage EventImageTracker::render_dt() const {
  return normalise(plane_, d_, [this](std::size_t i) { return dt_[i]; });
}

DvsExporter::DvsExporter(const PlaneParams& plane, double theta)
    : plane_(plane),
      theta_(theta),
      decoder_(plane),
      reference_(plane.pixel_count(), 0.0),
      seen_(plane.pixel_count(), false) {
  if (!(theta > 0.0)) throw Error(ErrorKind::Parameter, "export threshold must be positive");
}

void DvsExporter::push(const Event& e, std::vector<DvsEvent>& out) {
  spans_.clear();
  decoder_.decode(e, spans_);
  const std::size_t idx = plane_.index(e.x, e.y, e.c);
  for (const EventSpan& s : spans_) {
    if (s.gap || !(s.end > s.start)) continue;
    const double level = std::log1p(s.rate * plane_.ref_interval / 255.0);
    if (!seen_[idx]) {
      seen_[idx] = true;
      reference_[idx] = level;
      continue;
    }
    const long k = std::lround((level - reference_[idx]) / theta_);
    if (k == 0) continue;
    const std::int8_t p = k > 0 ? 1 : -1;
    for (long i = 0; i < std::labs(k); ++i) {
      out.push_back({e.x, e.y, p, static_cast<Tick>(s.start)});
    }
    reference_[idx] += double(k) * theta_;
  }
}

std::vector<DvsEvent> export_dvs(const PlaneParams& plane, std::span<const Event> events,
                                 double theta) {
  DvsExporter exporter(plane, theta);
  std::vector<DvsEvent> out;
  for (const Event& e : events) exporter.push(e, out);
  // Span starts lag their events, so stream order is not time order.
  std::stable_sort(out.begin(), out.end(),
                   [](const DvsEvent& a, const DvsEvent& b) { return a.t < b.t; });
  return out;
}

}  // namespace eventforge
