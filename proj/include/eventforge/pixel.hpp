#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "eventforge/event.hpp"

namespace eventforge {

/// An event as produced by a single pixel: coordinates are attached by the
/// caller that owns the pixel grid.
struct Emission {
  std::uint8_t d = 0;
  Tick t = 0;

  friend bool operator==(const Emission&, const Emission&) = default;
};

/// Queued edge between node k and node k+1: 2^d units over `span` ticks,
/// measured from the parent node's start.
struct PixelEdge {
  std::uint8_t d = 0;
  double span = 0.0;

  /// Integer Δt' as carried by an event (floored).
  Tick floored_span() const noexcept { return static_cast<Tick>(span); }
};

struct PixelNode {
  std::uint8_t d = 0;
  double intensity = 0.0;
  double elapsed = 0.0;
  double start = 0.0;
  std::optional<PixelEdge> edge;
};

struct PixelConfig {
  double dt_max = std::numeric_limits<double>::infinity();
  /// Drop leftover integration after every emission so that the next event
  /// starts on an input boundary (framed sources in list mode).
  bool discard_after_emit = false;
  /// Input boundary spacing for discarding pixels (ticks).
  double boundary = 0.0;
};

/// Per-pixel integration machine.
///
/// List mode keeps the full node chain so that every queued edge event has
/// the largest D' the integrated intensity allows. Collapse mode keeps one
/// node and a single candidate event; on flush it returns the candidate and
/// a filler event (kFillerD) covering the time integrated since.
///
/// A "level" is the interval between two flushes. The first event of a level
/// never spans more than PixelConfig::dt_max ticks; later events coalesce.
class PixelState {
 public:
  explicit PixelState(PixelMode mode = PixelMode::Collapse, PixelConfig config = {});

  PixelMode mode() const noexcept { return mode_; }
  const PixelConfig& config() const noexcept { return config_; }
  void set_config(const PixelConfig& config) noexcept { config_ = config; }

  bool has_baseline() const noexcept { return has_baseline_; }
  double baseline() const noexcept { return baseline_; }
  double current_m() const noexcept { return current_m_; }
  double running_t() const noexcept { return running_t_; }
  double level_start() const noexcept { return level_start_; }
  bool emitted_at_level() const noexcept { return emitted_at_level_; }

  /// Starts a new level at the current running time.
  void begin_level(double baseline, double base_m);

  /// Moves the clock forward without integrating (only valid before the
  /// first integration of a level).
  void set_running_t(double t);

  bool should_flush(double incoming) const noexcept;

  void integrate(double intensity, double span, std::vector<Emission>& out);

  /// Forces the first event of the level once Δt_max has elapsed.
  std::optional<Emission> enforce_dtmax(std::vector<Emission>& out);

  void flush(std::vector<Emission>& out);

  void tick_sensitivity(double elapsed, const SensitivityParams& params,
                        double ref_interval);
  void apply_application_sensitivity(double target_m) noexcept;

  std::span<const PixelNode> nodes() const noexcept { return nodes_; }
  /// Collapse mode only.
  std::optional<Emission> candidate() const;
  /// Edge events (list) or the candidate (collapse) in emission order.
  std::vector<Emission> queued() const;
  double growth_remainder() const noexcept { return growth_; }

 private:
  void integrate_span(double intensity, double span, std::vector<Emission>& out);
  void collapse_integrate(double intensity, double span, std::vector<Emission>& out);
  void list_integrate(double intensity, double span);
  void commit_candidate(std::vector<Emission>& out);
  void pop_edges(std::vector<Emission>& out);
  void emit(std::uint8_t d, double t, std::vector<Emission>& out);

  struct Candidate {
    std::uint8_t d = 0;
    double t = 0.0;
  };

  PixelMode mode_;
  PixelConfig config_;
  std::vector<PixelNode> nodes_;
  std::optional<Candidate> candidate_;

  bool has_baseline_ = false;
  double baseline_ = 0.0;
  double current_m_ = 0.0;
  double growth_ = 0.0;

  double running_t_ = 0.0;
  double level_start_ = 0.0;
  bool emitted_at_level_ = false;
  std::optional<Tick> last_emit_;
};

}  // namespace eventforge
