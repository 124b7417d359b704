#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eventforge/event.hpp"

namespace eventforge {

// Raw container layout, all fields little-endian:
//
//   offset size field
//   0      4    magic "ADDR" (raw) / "ADRC" (compressed)
//   4      1    version (2: absolute-t events)
//   5      1    endianness (0 = little)
//   6      2    width
//   8      2    height
//   10     1    channels (1 or 3)
//   11     1    source kind
//   12     1    pixel mode
//   13     1    reserved (0)
//   14     4    ticks per second
//   18     4    reference interval (ticks)
//   22     4    dt_max (ticks, 0xFFFFFFFF = unbounded)
//   26          events
//
// Event: x u16, y u16, [c u8 when channels == 3], d u8, t u32.

inline constexpr std::size_t kHeaderSize = 26;
inline constexpr std::uint8_t kStreamVersion = 2;
inline constexpr std::array<char, 4> kRawMagic{'A', 'D', 'D', 'R'};
inline constexpr std::array<char, 4> kCompressedMagic{'A', 'D', 'R', 'C'};

constexpr std::size_t event_size(std::uint8_t channels) noexcept {
  return channels == 1 ? 9 : 10;
}

void append_header(std::vector<std::uint8_t>& out, const PlaneParams& plane,
                   const std::array<char, 4>& magic = kRawMagic);
PlaneParams parse_header(std::span<const std::uint8_t> bytes,
                         const std::array<char, 4>& magic = kRawMagic);

void append_event(std::vector<std::uint8_t>& out, const Event& e, std::uint8_t channels);

std::vector<std::uint8_t> write_stream(const PlaneParams& plane, std::span<const Event> events);

/// Sequential reader over a raw stream held in memory.
class StreamReader {
 public:
  explicit StreamReader(std::span<const std::uint8_t> bytes);

  const PlaneParams& plane() const noexcept { return plane_; }
  std::size_t remaining_events() const noexcept;
  /// Throws Error(Truncated) on a partial trailing record and Error(Format)
  /// on out-of-plane coordinates or an invalid D.
  std::optional<Event> next();

 private:
  std::span<const std::uint8_t> bytes_;
  PlaneParams plane_;
  std::size_t pos_ = kHeaderSize;
};

struct DecodedStream {
  PlaneParams plane;
  std::vector<Event> events;
};

DecodedStream read_stream(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Time span covered by one decoded event.
struct EventSpan {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t c = 0;
  std::uint8_t d = 0;
  double start = 0.0;
  double end = 0.0;
  /// Intensity units per tick.
  double rate = 0.0;
  /// True for the inferred continuation that precedes a frame-aligned event.
  bool gap = false;
};

/// Turns absolute-t events into spans by tracking each pixel's previous
/// event. Reserved codes: kZeroD has zero rate, kFillerD repeats the previous
/// rate. Framed list-mode streams start each event on the next reference
/// boundary; the skipped time is reported as a gap span at the old rate.
class SpanDecoder {
 public:
  explicit SpanDecoder(const PlaneParams& plane);

  const PlaneParams& plane() const noexcept { return plane_; }
  void decode(const Event& e, std::vector<EventSpan>& out);

  double last_rate(std::size_t index) const { return last_rate_[index]; }
  Tick last_t(std::size_t index) const { return last_t_[index]; }

 private:
  PlaneParams plane_;
  bool align_;
  std::vector<Tick> last_t_;
  std::vector<double> last_rate_;
};

struct StreamInfo {
  PlaneParams plane;
  bool compressed = false;
  std::size_t bytes = 0;
  std::size_t event_count = 0;
  bool deep = false;
  Tick last_t = 0;
  double duration_s = 0.0;
  double event_rate = 0.0;
  std::optional<double> dynamic_range_bits;
  std::string error;
};

/// Header report; `deep_scan` also walks the events for rate and dynamic
/// range (log2 of max/min non-reserved intensity). Corrupt streams yield a
/// partial report with `error` set.
StreamInfo stream_info(std::span<const std::uint8_t> bytes, bool deep_scan);
std::string format_info(const StreamInfo& info);

}  // namespace eventforge
