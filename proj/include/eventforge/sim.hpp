#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"
#include "eventforge/transcode.hpp"
#include "eventforge/vision.hpp"

namespace eventforge {

enum class SimMode : std::uint8_t { Constant, SelfAdjust, Radial, Aggressive };

const char* to_string(SimMode mode) noexcept;
/// Throws Error(Parameter) for unknown names.
SimMode parse_sim_mode(std::string_view name);

struct SimConfig {
  SimMode mode = SimMode::Constant;
  Tick ticks_per_second = 12'000;
  Tick ref_interval = 50;
  Tick dt_max = 2'500;
  std::uint8_t initial_d = 0;
  /// Neighbours throttled when a pixel fires an empty event (radial mode).
  std::uint32_t throttle_radius = 1;
  /// Largest neighbourhood nudged by a pixel's +-1 D changes (radial mode).
  std::uint32_t minor_radius = 2;
  /// ROI factor right next to the ROI; it drops by one every
  /// `roi_falloff` pixels of Chebyshev distance, down to 1.
  std::uint32_t roi_max_factor = 8;
  std::uint32_t roi_falloff = 4;

  void validate() const;
};

struct SimPixel {
  std::uint8_t d = 0;
  double photons = 0.0;    // integrated since the last event
  double predicted = 0.0;  // dt', 0 until the first event
  Tick last_t = 0;
  Tick last_dt = 0;
  std::uint8_t last_d = kZeroD;
  int stable_bits = 0;
  std::uint32_t repeats = 0;
  std::uint32_t radius = 0;  // current minor-adjust radius
  bool inside_roi = false;
};

/// Leading bits shared by two 32-bit time deltas.
int stable_bits(Tick dt, Tick predicted) noexcept;

/// Self-adjusting control after a fired event: returns the D step taken
/// (-1, 0 or +1). Empty events throttle D to floor(log2 D).
int adjust_self(SimPixel& px, Tick dt, bool empty, Tick ref_interval);

/// Aggressive control: D+1 when 2*dt < limit, D-1 on an empty event. ROI
/// pixels target the reference interval instead and also step down when an
/// event spans more than it.
int adjust_aggressive(SimPixel& px, Tick dt, bool empty, Tick limit, bool inside_roi);

/// ROI update for a pixel that just entered it: D drops to the value that
/// fires about once per reference interval at its last measured rate.
void enter_roi(SimPixel& px, Tick ref_interval);

/// Throttle used for empty events: D -> floor(log2 D), dt' divided by the
/// drop.
void throttle(SimPixel& px);

/// ROI factor r (>= 1) of a pixel outside `roi`; 0 means inside.
std::uint32_t roi_factor(const Box& roi, int x, int y, const SimConfig& config);

struct RepeatRecord {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t c = 0;
  Tick t = 0;
  std::uint16_t count = 0;

  friend bool operator==(const RepeatRecord&, const RepeatRecord&) = default;
};

struct SimStats {
  std::uint64_t frames = 0;
  std::uint64_t events = 0;
  std::uint64_t empty_events = 0;
  std::uint64_t repeated_events = 0;
  double photons_in = 0.0;
  double photons_fired = 0.0;
  double photons_discarded = 0.0;
  /// Stable pixels fire identical events; each run is summarised here.
  std::vector<RepeatRecord> repeat_records;

  double events_per_pixel_per_interval(std::size_t pixels) const noexcept;
};

/// Discrete-event simulation of an integrating sensor fed with photon-count
/// frames, one frame per reference interval.
class Simulator {
 public:
  Simulator(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
            const SimConfig& config, ExecPolicy policy = ExecPolicy::Parallel);

  const PlaneParams& plane() const noexcept { return plane_; }
  const SimConfig& config() const noexcept { return config_; }
  const SimStats& stats() const noexcept { return stats_; }
  const SimPixel& pixel(std::size_t index) const { return pixels_[index]; }
  /// Photons still sitting in the integrators.
  double residual_photons() const;

  /// Events of one frame sorted by t. Throws Error(Dimension) on a size
  /// mismatch.
  std::vector<Event> push_frame(const Frame& photons, std::optional<Box> roi = std::nullopt);

 private:
  struct Nudge {
    std::uint32_t index;
    int step;  // 0 throttles, +-1 nudges
    std::uint32_t radius;
  };

  void process_row(int y, const Frame& photons, const std::optional<Box>& roi,
                   std::vector<Event>& out, std::vector<Nudge>& nudges, SimStats& stats);
  void fire(std::size_t idx, int x, int y, int c, Tick t, bool empty, std::uint32_t r,
            std::vector<Event>& out, std::vector<Nudge>& nudges, SimStats& stats);
  void apply_nudges();

  PlaneParams plane_;
  SimConfig config_;
  ExecPolicy policy_;
  std::vector<SimPixel> pixels_;
  std::vector<std::vector<Event>> rows_;
  std::vector<std::vector<Nudge>> row_nudges_;
  std::vector<SimStats> row_stats_;
  SimStats stats_;
};

struct RoiSample {
  std::size_t index = 0;
  Box box;
};

/// CSV `sample_index,x,y,w,h`, one rectangle per sample; a header line is
/// allowed. Throws Error(Format) or Error(Io).
std::vector<RoiSample> read_roi_track(const std::filesystem::path& path);
std::vector<RoiSample> parse_roi_track(std::string_view text);
/// Rectangle in force at a frame: the latest sample at or before it.
std::optional<Box> roi_at(std::span<const RoiSample> track, std::size_t frame);

struct SimResult {
  PlaneParams plane;
  std::vector<Event> events;
  SimStats stats;
};

/// Geometry from the first frame; throws Error(Parameter) when there is none.
SimResult run_sim(std::span<const Frame> frames, const SimConfig& config,
                  std::span<const RoiSample> roi_track = {},
                  ExecPolicy policy = ExecPolicy::Parallel);
SimResult run_sim(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
                  std::span<const Frame> frames, const SimConfig& config,
                  std::span<const RoiSample> roi_track = {},
                  ExecPolicy policy = ExecPolicy::Parallel);

}  // namespace eventforge
