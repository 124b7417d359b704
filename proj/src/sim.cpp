#include "eventforge/sim.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "eventforge/error.hpp"

namespace eventforge {

const char* to_string(SimMode mode) noexcept {
  switch (mode) {
    case SimMode::Constant: return "constant";
    case SimMode::SelfAdjust: return "self_adjust";
    case SimMode::Radial: return "radial";
    case SimMode::Aggressive: return "aggressive";
  }
  return "?";
}

SimMode parse_sim_mode(std::string_view name) {
  for (SimMode m : {SimMode::Constant, SimMode::SelfAdjust, SimMode::Radial, SimMode::Aggressive}) {
    if (name == to_string(m)) return m;
  }
  if (name == "self-adjust" || name == "self") return SimMode::SelfAdjust;
  throw Error(ErrorKind::Parameter, "unknown simulation mode: " + std::string(name));
}

void SimConfig::validate() const {
  if (ref_interval == 0 || ticks_per_second == 0) {
    throw Error(ErrorKind::Parameter, "simulation time base must be non-zero");
  }
  if (dt_max < ref_interval) {
    throw Error(ErrorKind::Parameter, "dt_max must be at least the reference interval");
  }
  if (initial_d > kMaxD) throw Error(ErrorKind::Parameter, "initial D above 127");
  if (roi_max_factor == 0 || roi_falloff == 0) {
    throw Error(ErrorKind::Parameter, "ROI factor and falloff must be positive");
  }
}

double SimStats::events_per_pixel_per_interval(std::size_t pixels) const noexcept {
  if (pixels == 0 || frames == 0) return 0.0;
  return double(events) / (double(pixels) * double(frames));
}

int stable_bits(Tick dt, Tick predicted) noexcept {
  return std::countl_zero(static_cast<std::uint32_t>(dt ^ predicted));
}

void throttle(SimPixel& px) {
  const int old_d = px.d;
  const int new_d = old_d >= 2 ? std::bit_width(unsigned(old_d)) - 1 : 0;
  px.d = static_cast<std::uint8_t>(new_d);
  if (old_d > new_d && px.predicted > 0.0) px.predicted /= double(old_d - new_d);
  px.stable_bits = 0;
}

int adjust_self(SimPixel& px, Tick dt, bool empty, Tick ref_interval) {
  if (empty) {
    const int before = px.d;
    throttle(px);
    return px.d < before ? -1 : 0;
  }
  if (px.predicted <= 0.0) {
    px.predicted = double(dt);
    px.stable_bits = 0;
    return 0;
  }
  const int s = stable_bits(dt, static_cast<Tick>(std::llround(px.predicted)));
  int step = 0;
  // Two bits of slack so rounding jitter does not read as instability.
  if (s >= px.stable_bits && 2 * double(dt) <= double(ref_interval) && px.d < kMaxD) {
    step = 1;
    px.predicted = 2.0 * double(dt);
  } else if (s + 2 < px.stable_bits && px.d > 0) {
    step = -1;
    px.predicted = std::max(1.0, double(dt) / 2.0);
  } else {
    px.predicted = double(dt);
  }
  px.d = static_cast<std::uint8_t>(px.d + step);
  px.stable_bits = s;
  return step;
}

int adjust_aggressive(SimPixel& px, Tick dt, bool empty, Tick limit, bool inside_roi) {
  int step = 0;
  if (empty) {
    step = px.d > 0 ? -1 : 0;
  } else if (2 * double(dt) < double(limit)) {
    step = px.d < kMaxD ? 1 : 0;
  } else if (inside_roi && dt > limit && px.d > 0) {
    // Jump straight to the D that would have fired within the limit.
    const int target = floor_log2_clamped(pow2(px.d) * double(limit) / double(dt));
    step = std::min(target, px.d - 1) - px.d;
  }
  px.d = static_cast<std::uint8_t>(px.d + step);
  return step;
}

void enter_roi(SimPixel& px, Tick ref_interval) {
  if (px.last_d > kMaxD || px.last_dt == 0) return;
  const double rate = pow2(px.last_d) / double(px.last_dt);
  px.d = static_cast<std::uint8_t>(std::min<int>(px.d, floor_log2_clamped(rate * double(ref_interval))));
}

std::uint32_t roi_factor(const Box& roi, int x, int y, const SimConfig& config) {
  const int dx = x < roi.x0 ? roi.x0 - x : (x > roi.x1 ? x - roi.x1 : 0);
  const int dy = y < roi.y0 ? roi.y0 - y : (y > roi.y1 ? y - roi.y1 : 0);
  const int dist = std::max(dx, dy);
  if (dist == 0) return 0;
  const long r = long(config.roi_max_factor) - long(dist - 1) / long(config.roi_falloff);
  return static_cast<std::uint32_t>(std::max(1L, r));
}

Simulator::Simulator(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
                     const SimConfig& config, ExecPolicy policy)
    : config_(config), policy_(policy) {
  config_.validate();
  plane_.width = width;
  plane_.height = height;
  plane_.channels = channels;
  plane_.ticks_per_second = config.ticks_per_second;
  plane_.ref_interval = config.ref_interval;
  plane_.dt_max = config.dt_max;
  plane_.source = SourceKind::Simulated;
  plane_.validate();
  SimPixel init;
  init.d = config.initial_d;
  init.radius = config.minor_radius;
  pixels_.assign(plane_.pixel_count(), init);
  rows_.resize(height);
  row_nudges_.resize(height);
  row_stats_.resize(height);
}

double Simulator::residual_photons() const {
  double s = 0.0;
  for (const SimPixel& p : pixels_) s += p.photons;
  return s;
}

std::vector<Event> Simulator::push_frame(const Frame& photons, std::optional<Box> roi) {
  if (photons.width != plane_.width || photons.height != plane_.height ||
      photons.channels != plane_.channels) {
    throw Error(ErrorKind::Dimension, "photon frame does not match the sensor");
  }
  const int h = plane_.height;
  for (int y = 0; y < h; ++y) {
    rows_[y].clear();
    row_nudges_[y].clear();
    row_stats_[y] = {};
  }
  if (policy_ == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) process_row(y, photons, roi, rows_[y], row_nudges_[y], row_stats_[y]);
  } else {
    for (int y = 0; y < h; ++y) process_row(y, photons, roi, rows_[y], row_nudges_[y], row_stats_[y]);
  }
  std::vector<Event> out;
  for (int y = 0; y < h; ++y) {
    out.insert(out.end(), rows_[y].begin(), rows_[y].end());
    const SimStats& s = row_stats_[y];
    stats_.events += s.events;
    stats_.empty_events += s.empty_events;
    stats_.repeated_events += s.repeated_events;
    stats_.photons_in += s.photons_in;
    stats_.photons_fired += s.photons_fired;
    stats_.photons_discarded += s.photons_discarded;
    stats_.repeat_records.insert(stats_.repeat_records.end(), s.repeat_records.begin(),
                                 s.repeat_records.end());
  }
  apply_nudges();
  ++stats_.frames;
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

void Simulator::process_row(int y, const Frame& photons, const std::optional<Box>& roi,
                            std::vector<Event>& out, std::vector<Nudge>& nudges,
                            SimStats& stats) {
  const double ref = double(plane_.ref_interval);
  const double t0 = double(stats_.frames) * ref;
  const double t1 = t0 + ref;
  const int ch = plane_.channels;
  for (int x = 0; x < plane_.width; ++x) {
    std::uint32_t r = 1;
    if (roi) r = roi_factor(*roi, x, y, config_);
    for (int c = 0; c < ch; ++c) {
      const std::size_t idx = plane_.index(std::uint16_t(x), std::uint16_t(y), std::uint8_t(c));
      SimPixel& px = pixels_[idx];
      const double p = photons.at(x, y, c);
      stats.photons_in += p;
      if (config_.mode == SimMode::Aggressive) {
        const bool inside = roi && r == 0;
        if (inside && !px.inside_roi) enter_roi(px, plane_.ref_interval);
        px.inside_roi = inside;
      }
      if (px.photons >= pow2(px.d) && px.photons >= 1.0) {
        // D was lowered below the charge already held: fire at once and
        // drop what the event cannot carry.
        const int d = floor_log2_clamped(px.photons);
        stats.photons_fired += pow2(d);
        stats.photons_discarded += px.photons - pow2(d);
        px.photons = 0.0;
        const Tick t = std::max<Tick>(static_cast<Tick>(t0), px.last_t + 1);
        const std::uint8_t keep = px.d;
        px.d = static_cast<std::uint8_t>(d);
        fire(idx, x, y, c, t, false, r, out, nudges, stats);
        px.d = std::min(px.d, keep);
      }
      double used = 0.0;  // photons of this frame already integrated
      for (;;) {
        const double deadline = double(px.last_t) + double(plane_.dt_max);
        const double need = pow2(px.d) - px.photons;
        const double cross = p > 0.0 ? t0 + (used + need) * ref / p : t1 + 1.0;
        if (cross <= t1 && cross <= deadline) {
          used += need;
          stats.photons_fired += pow2(px.d);
          px.photons = 0.0;
          fire(idx, x, y, c, static_cast<Tick>(std::nearbyint(cross)), false, r, out, nudges,
               stats);
        } else if (deadline <= t1) {
          const double upto = std::max(used, (deadline - t0) * p / ref);
          stats.photons_discarded += px.photons + (upto - used);
          used = upto;
          px.photons = 0.0;
          fire(idx, x, y, c, static_cast<Tick>(deadline), true, r, out, nudges, stats);
        } else {
          px.photons += p - used;
          break;
        }
      }
    }
  }
}

void Simulator::fire(std::size_t idx, int x, int y, int c, Tick t, bool empty, std::uint32_t r,
                     std::vector<Event>& out, std::vector<Nudge>& nudges, SimStats& stats) {
  SimPixel& px = pixels_[idx];
  const Tick dt = t - px.last_t;
  const std::uint8_t d = empty ? kZeroD : px.d;
  ++stats.events;
  if (empty) ++stats.empty_events;
  if (d == px.last_d && dt == px.last_dt) {
    ++px.repeats;
    ++stats.repeated_events;
    if (px.repeats == 0xFFFF) {
      stats.repeat_records.push_back({std::uint16_t(x), std::uint16_t(y), std::uint8_t(c), t, 0xFFFF});
      px.repeats = 0;
    }
  } else if (px.repeats > 0) {
    stats.repeat_records.push_back({std::uint16_t(x), std::uint16_t(y), std::uint8_t(c), t,
                                    static_cast<std::uint16_t>(px.repeats)});
    px.repeats = 0;
  }
  out.push_back({std::uint16_t(x), std::uint16_t(y), std::uint8_t(c), d, t});
  px.last_t = t;
  px.last_dt = dt;
  px.last_d = d;

  switch (config_.mode) {
    case SimMode::Constant:
      break;
    case SimMode::SelfAdjust:
      adjust_self(px, dt, empty, plane_.ref_interval);
      break;
    case SimMode::Radial: {
      const int step = adjust_self(px, dt, empty, plane_.ref_interval);
      if (empty) {
        if (config_.throttle_radius > 0) nudges.push_back({std::uint32_t(idx), 0, config_.throttle_radius});
      } else if (step != 0) {
        // Neighbourhoods grow while a pixel settles and shrink when it moves.
        if (step > 0) {
          px.radius = std::min(px.radius + 1, config_.minor_radius);
        } else if (px.radius > 0) {
          --px.radius;
        }
        if (px.radius > 0) nudges.push_back({std::uint32_t(idx), step, px.radius});
      }
      break;
    }
    case SimMode::Aggressive: {
      const bool inside = r == 0;
      const Tick limit = inside ? plane_.ref_interval : plane_.dt_max / r;
      adjust_aggressive(px, dt, empty, limit, inside);
      break;
    }
  }
}

void Simulator::apply_nudges() {
  const int w = plane_.width, h = plane_.height, ch = plane_.channels;
  // A neighbour follows a D increase only if its own last rate would still
  // fire within the reference interval at the higher D.
  const auto can_afford = [&](const SimPixel& q, int d) {
    if (q.last_d > kMaxD || q.last_dt == 0) return false;
    return pow2(q.last_d) / double(q.last_dt) * double(plane_.ref_interval) >= pow2(d);
  };
  for (const auto& row : row_nudges_) {
    for (const Nudge& n : row) {
      const int c = int(n.index % ch);
      const int x = int((n.index / ch) % w);
      const int y = int(n.index / ch / w);
      const int rad = int(n.radius);
      for (int yy = std::max(0, y - rad); yy <= std::min(h - 1, y + rad); ++yy) {
        for (int xx = std::max(0, x - rad); xx <= std::min(w - 1, x + rad); ++xx) {
          if (xx == x && yy == y) continue;
          SimPixel& q = pixels_[plane_.index(std::uint16_t(xx), std::uint16_t(yy), std::uint8_t(c))];
          if (n.step == 0) {
            throttle(q);
          } else if (n.step > 0 && q.d < kMaxD && can_afford(q, q.d + 1)) {
            ++q.d;
            q.predicted *= 2.0;
          } else if (n.step < 0 && q.d > 0) {
            --q.d;
            q.predicted /= 2.0;
          }
        }
      }
    }
  }
}

std::vector<RoiSample> parse_roi_track(std::string_view text) {
  std::vector<RoiSample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    long v[5];
    std::size_t field = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    bool ok = true;
    while (field < 5 && ok) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      auto [next, ec] = std::from_chars(p, end, v[field]);
      ok = ec == std::errc();
      p = next;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      ++field;
      if (field < 5) {
        ok = ok && p < end && *p == ',';
        ++p;
      }
    }
    ok = ok && p == end;
    if (!ok) {
      if (line_no == 1 && out.empty()) continue;  // header
      throw Error(ErrorKind::Format, "bad ROI track line " + std::to_string(line_no));
    }
    if (v[0] < 0 || v[3] <= 0 || v[4] <= 0) {
      throw Error(ErrorKind::Format, "bad ROI rectangle on line " + std::to_string(line_no));
    }
    out.push_back({std::size_t(v[0]),
                   Box{int(v[1]), int(v[2]), int(v[1] + v[3] - 1), int(v[2] + v[4] - 1)}});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RoiSample& a, const RoiSample& b) { return a.index < b.index; });
  return out;
}

std::vector<RoiSample> read_roi_track(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_roi_track(ss.str());
}

std::optional<Box> roi_at(std::span<const RoiSample> track, std::size_t frame) {
  std::optional<Box> box;
  for (const RoiSample& s : track) {
    if (s.index > frame) break;
    box = s.box;
  }
  return box;
}

SimResult run_sim(std::span<const Frame> frames, const SimConfig& config,
                  std::span<const RoiSample> roi_track, ExecPolicy policy) {
  if (frames.empty()) throw Error(ErrorKind::Parameter, "no frames to simulate");
  return run_sim(frames[0].width, frames[0].height, frames[0].channels, frames, config,
                 roi_track, policy);
}

SimResult run_sim(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
                  std::span<const Frame> frames, const SimConfig& config,
                  std::span<const RoiSample> roi_track, ExecPolicy policy) {
  SimResult result;
  Simulator sim(width, height, channels, config, policy);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto ev = sim.push_frame(frames[k], roi_at(roi_track, k));
    result.events.insert(result.events.end(), ev.begin(), ev.end());
  }
  result.plane = sim.plane();
  result.stats = sim.stats();
  return result;
}

}  // namespace eventforge
