#include "eventforge/transcode.hpp"

#include <algorithm>
#include <cmath>

#include "eventforge/error.hpp"
#include "eventforge/stream_io.hpp"

namespace eventforge {

namespace {

PixelConfig pixel_config(const PlaneParams& plane, bool discard) {
  PixelConfig cfg;
  cfg.dt_max = plane.dt_max == kInfiniteTicks ? std::numeric_limits<double>::infinity()
                                              : double(plane.dt_max);
  cfg.discard_after_emit = discard;
  cfg.boundary = plane.ref_interval;
  return cfg;
}

}  // namespace

void append_emissions(std::vector<Event>& out, std::span<const Emission> emissions,
                      std::uint16_t x, std::uint16_t y, std::uint8_t c) {
  for (const Emission& em : emissions) out.push_back({x, y, c, em.d, em.t});
}

FramedTranscoder::FramedTranscoder(const PlaneParams& plane, const SensitivityParams& sens,
                                   ExecPolicy policy)
    : plane_(plane),
      sens_(sens),
      policy_(policy),
      flushed_(std::size_t(plane.width) * plane.height, 0),
      rows_(plane.height),
      canvas_(plane.width, plane.height) {
  plane_.validate();
  sens_.validate();
  const PixelConfig cfg = pixel_config(plane_, plane_.mode == PixelMode::List);
  pixels_.assign(plane_.pixel_count(), PixelState(plane_.mode, cfg));
}

void FramedTranscoder::set_sensitivity(const SensitivityParams& sens) {
  sens.validate();
  sens_ = sens;
}

void FramedTranscoder::process_row(int y, const Frame& frame, std::vector<Event>& out) {
  const double ref = plane_.ref_interval;
  const std::uint8_t ch = plane_.channels;
  std::vector<Emission> em;
  for (int x = 0; x < plane_.width; ++x) {
    std::uint8_t changed = frames_ == 0;
    for (std::uint8_t c = 0; c < ch; ++c) {
      const std::size_t idx = plane_.index(std::uint16_t(x), std::uint16_t(y), c);
      PixelState& px = pixels_[idx];
      const double v = frame.data[idx];
      em.clear();
      if (frames_ == 0) {
        px.begin_level(v, sens_.m);
      } else {
        px.tick_sensitivity(ref, sens_, ref);
        if (px.should_flush(v)) {
          px.flush(em);
          px.begin_level(v, sens_.m);
          changed = 1;
        }
      }
      px.integrate(v, ref, em);
      px.enforce_dtmax(em);
      append_emissions(out, em, std::uint16_t(x), std::uint16_t(y), c);
    }
    flushed_[std::size_t(y) * plane_.width + x] = changed;
  }
}

std::vector<Event> FramedTranscoder::push_frame(const Frame& frame) {
  if (finished_) throw Error(ErrorKind::Parameter, "transcoder already finished");
  if (frame.width != plane_.width || frame.height != plane_.height ||
      frame.channels != plane_.channels) {
    throw Error(ErrorKind::Dimension, "frame does not match the plane dimensions");
  }
  for (auto& r : rows_) r.clear();
  const int h = plane_.height;
  if (policy_ == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) process_row(y, frame, rows_[y]);
  } else {
    for (int y = 0; y < h; ++y) process_row(y, frame, rows_[y]);
  }
  std::size_t total = 0;
  for (const auto& r : rows_) total += r.size();
  std::vector<Event> out;
  out.reserve(total);
  for (const auto& r : rows_) out.insert(out.end(), r.begin(), r.end());
  ++frames_;
  if (features_.detect || features_.feedback) detect_features();
  return out;
}

void FramedTranscoder::detect_features() {
  features_found_.clear();
  const std::uint8_t ch = plane_.channels;
  for (int y = 0; y < plane_.height; ++y) {
    for (int x = 0; x < plane_.width; ++x) {
      const std::size_t p = std::size_t(y) * plane_.width + x;
      if (!flushed_[p]) continue;
      double v = 0.0;
      if (ch == 3) {
        v = 0.299 * pixels_[3 * p].baseline() + 0.587 * pixels_[3 * p + 1].baseline() +
            0.114 * pixels_[3 * p + 2].baseline();
      } else {
        v = pixels_[p].baseline();
      }
      canvas_.pixels[p] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  for (int y = 0; y < plane_.height; ++y) {
    for (int x = 0; x < plane_.width; ++x) {
      if (!flushed_[std::size_t(y) * plane_.width + x]) continue;
      if (fast_test_pixel(canvas_, x, y, features_.fast)) {
        features_found_.push_back({std::uint16_t(x), std::uint16_t(y), now()});
      }
    }
  }
  if (features_.feedback) {
    apply_feature_feedback(features_found_, features_.radius, features_.target_m);
  }
}

void FramedTranscoder::apply_feature_feedback(std::span<const FeaturePoint> points,
                                              std::uint32_t radius, double target_m) {
  const long r = radius;
  for (const FeaturePoint& f : points) {
    const long x0 = std::max(0L, long(f.x) - r);
    const long x1 = std::min(long(plane_.width) - 1, long(f.x) + r);
    const long y0 = std::max(0L, long(f.y) - r);
    const long y1 = std::min(long(plane_.height) - 1, long(f.y) + r);
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        for (std::uint8_t c = 0; c < plane_.channels; ++c) {
          pixels_[plane_.index(std::uint16_t(x), std::uint16_t(y), c)]
              .apply_application_sensitivity(target_m);
        }
      }
    }
  }
}

std::vector<Event> FramedTranscoder::finish() {
  std::vector<Event> out;
  if (finished_) return out;
  finished_ = true;
  std::vector<Emission> em;
  for (int y = 0; y < plane_.height; ++y) {
    for (int x = 0; x < plane_.width; ++x) {
      for (std::uint8_t c = 0; c < plane_.channels; ++c) {
        em.clear();
        pixels_[plane_.index(std::uint16_t(x), std::uint16_t(y), c)].flush(em);
        append_emissions(out, em, std::uint16_t(x), std::uint16_t(y), c);
      }
    }
  }
  return out;
}

Frame FramedTranscoder::level_image() const {
  Frame f(plane_.width, plane_.height, plane_.channels);
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    f.data[i] = static_cast<std::uint16_t>(
        std::clamp(std::lround(pixels_[i].baseline()), 0L, 65535L));
  }
  return f;
}

PlaneParams dvs_plane(std::uint16_t width, std::uint16_t height, Tick dt_max) {
  PlaneParams p;
  p.width = width;
  p.height = height;
  p.channels = 1;
  p.ticks_per_second = 1'000'000;
  p.ref_interval = 255;
  p.dt_max = dt_max;
  p.source = SourceKind::Dvs;
  p.mode = PixelMode::Collapse;
  return p;
}

namespace {

const double kMidLog = std::log1p(0.5);
const double kMaxLog = std::log(2.0);

}  // namespace

DvsTranscoder::DvsTranscoder(const PlaneParams& plane, const SensitivityParams& sens,
                             DvsParams params)
    : plane_(plane),
      sens_(sens),
      params_(params),
      log_level_(plane.pixel_count(), kMidLog),
      last_(plane.pixel_count(), 0),
      next_reset_(params.reset_interval ? params.reset_interval : kInfiniteTicks) {
  plane_.validate();
  sens_.validate();
  if (plane_.channels != 1) throw Error(ErrorKind::Parameter, "DVS planes are monochrome");
  if (!(params_.theta > 0.0)) throw Error(ErrorKind::Parameter, "theta must be positive");
  pixels_.assign(plane_.pixel_count(), PixelState(plane_.mode, pixel_config(plane_, false)));
  for (PixelState& px : pixels_) px.begin_level(0.5 * 255.0, sens_.m);
}

double DvsTranscoder::latent(std::uint16_t x, std::uint16_t y) const {
  return std::expm1(log_level_[plane_.index(x, y, 0)]);
}

void DvsTranscoder::advance_pixel(std::size_t idx, Tick t, std::vector<Event>& out) {
  if (t <= last_[idx]) return;
  const double elapsed = double(t - last_[idx]);
  const double ref = plane_.ref_interval;
  PixelState& px = pixels_[idx];
  scratch_.clear();
  px.tick_sensitivity(elapsed, sens_, ref);
  px.integrate(std::expm1(log_level_[idx]) * 255.0 * elapsed / ref, elapsed, scratch_);
  px.enforce_dtmax(scratch_);
  const auto x = static_cast<std::uint16_t>(idx % plane_.width);
  const auto y = static_cast<std::uint16_t>(idx / plane_.width);
  append_emissions(out, scratch_, x, y, 0);
  last_[idx] = t;
}

void DvsTranscoder::relevel(std::size_t idx, std::vector<Event>& out) {
  PixelState& px = pixels_[idx];
  const double level = std::expm1(log_level_[idx]) * 255.0;
  if (!px.should_flush(level)) return;
  scratch_.clear();
  px.flush(scratch_);
  px.begin_level(level, sens_.m);
  const auto x = static_cast<std::uint16_t>(idx % plane_.width);
  const auto y = static_cast<std::uint16_t>(idx / plane_.width);
  append_emissions(out, scratch_, x, y, 0);
}

void DvsTranscoder::advance_resets(Tick t, std::vector<Event>& out) {
  while (next_reset_ <= t) {
    for (std::size_t idx = 0; idx < pixels_.size(); ++idx) {
      advance_pixel(idx, next_reset_, out);
      log_level_[idx] = kMidLog;
      relevel(idx, out);
    }
    if (next_reset_ > kInfiniteTicks - params_.reset_interval) {
      next_reset_ = kInfiniteTicks;
      break;
    }
    next_reset_ += params_.reset_interval;
  }
}

void DvsTranscoder::process(const DvsEvent& e, std::vector<Event>& out) {
  advance_resets(e.t, out);
  const std::size_t idx = plane_.index(e.x, e.y, 0);
  advance_pixel(idx, e.t, out);
  log_level_[idx] = std::clamp(log_level_[idx] + (e.p > 0 ? params_.theta : -params_.theta),
                               0.0, kMaxLog);
  relevel(idx, out);
  processed_ = e.t;
}

void DvsTranscoder::drain(Tick upto, std::vector<Event>& out) {
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const DvsEvent& a, const DvsEvent& b) { return a.t < b.t; });
  std::size_t n = 0;
  while (n < pending_.size() && pending_[n].t <= upto) process(pending_[n++], out);
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
}

std::vector<Event> DvsTranscoder::push(std::span<const DvsEvent> events) {
  std::vector<Event> out;
  for (const DvsEvent& e : events) {
    if (e.x >= plane_.width || e.y >= plane_.height) {
      ++dropped_;
      continue;
    }
    if (e.t < processed_ || (newest_ > params_.reorder_tolerance &&
                             e.t < newest_ - params_.reorder_tolerance)) {
      throw Error(ErrorKind::Format, "DVS events out of order beyond the tolerance");
    }
    newest_ = std::max(newest_, e.t);
    pending_.push_back(e);
  }
  if (newest_ > params_.reorder_tolerance) drain(newest_ - params_.reorder_tolerance, out);
  return out;
}

std::vector<Event> DvsTranscoder::finish(Tick end_t) {
  std::vector<Event> out;
  drain(kInfiniteTicks, out);
  const Tick end = std::max({end_t, newest_, processed_});
  advance_resets(end, out);
  for (std::size_t idx = 0; idx < pixels_.size(); ++idx) {
    advance_pixel(idx, end, out);
    scratch_.clear();
    pixels_[idx].flush(scratch_);
    append_emissions(out, scratch_, static_cast<std::uint16_t>(idx % plane_.width),
                     static_cast<std::uint16_t>(idx / plane_.width), 0);
  }
  return out;
}

std::vector<Event> transcode_video(const PlaneParams& plane, std::span<const Frame> frames,
                                   const SensitivityParams& sens, ExecPolicy policy,
                                   const FeatureFeedback& features) {
  FramedTranscoder tx(plane, sens, policy);
  tx.set_features(features);
  std::vector<Event> out;
  for (const Frame& f : frames) {
    auto e = tx.push_frame(f);
    out.insert(out.end(), e.begin(), e.end());
  }
  auto tail = tx.finish();
  out.insert(out.end(), tail.begin(), tail.end());
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

std::vector<Event> reencode(const PlaneParams& in_plane, std::span<const Event> events,
                            const PlaneParams& out_plane, const SensitivityParams& sens) {
  out_plane.validate();
  sens.validate();
  if (in_plane.width != out_plane.width || in_plane.height != out_plane.height ||
      in_plane.channels != out_plane.channels ||
      in_plane.ticks_per_second != out_plane.ticks_per_second) {
    throw Error(ErrorKind::Parameter, "re-encoding cannot change geometry or time base");
  }
  SpanDecoder decoder(in_plane);
  const bool discard = out_plane.mode == PixelMode::List && out_plane.source == SourceKind::Framed;
  std::vector<PixelState> pixels(out_plane.pixel_count(),
                                 PixelState(out_plane.mode, pixel_config(out_plane, discard)));
  const double ref = out_plane.ref_interval;
  std::vector<EventSpan> spans;
  std::vector<Emission> em;
  std::vector<Event> out;
  for (const Event& e : events) {
    spans.clear();
    decoder.decode(e, spans);
    PixelState& px = pixels[out_plane.index(e.x, e.y, e.c)];
    em.clear();
    for (const EventSpan& s : spans) {
      const double len = s.end - s.start;
      if (!(len > 0.0)) continue;
      const double level = s.rate * ref;
      if (!px.has_baseline()) {
        px.begin_level(level, sens.m);
      } else {
        px.tick_sensitivity(len, sens, ref);
        if (px.should_flush(level)) {
          px.flush(em);
          px.begin_level(level, sens.m);
        }
      }
      px.integrate(s.rate * len, len, em);
      px.enforce_dtmax(em);
    }
    append_emissions(out, em, e.x, e.y, e.c);
  }
  for (std::size_t idx = 0; idx < pixels.size(); ++idx) {
    em.clear();
    pixels[idx].flush(em);
    const std::size_t p = idx / out_plane.channels;
    append_emissions(out, em, static_cast<std::uint16_t>(p % out_plane.width),
                     static_cast<std::uint16_t>(p / out_plane.width),
                     static_cast<std::uint8_t>(idx % out_plane.channels));
  }
  return out;
}

}  // namespace eventforge
