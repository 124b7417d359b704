#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/stream_io.hpp"

namespace eventforge {

// Compressed container (.adderc), little-endian:
//
//   26 bytes  stream header as in the raw container, magic "ADRC"
//   4         ADU interval in ticks
//   then one record per non-empty ADU:
//     4       ADU start tick (a multiple of the interval)
//     4       event count
//     4       payload length in bytes
//     n       arithmetic-coded payload
//
// Payload symbol order: an intra pass over cubes (row-major) coding the first
// event of every pixel queue, then an inter pass coding the remaining events
// of each queue, then the end-of-sequence symbol. Each ADU starts from fresh
// contexts.

inline constexpr int kCubeSize = 16;

/// D-context control symbols; D residuals are coded as zigzag(D_r) + 3.
enum class ControlSymbol : std::uint64_t { EmptyQueue = 0, SkipCube = 1, EndOfSequence = 2 };
inline constexpr std::uint64_t kFirstResidualSymbol = 3;

struct CompressParams {
  /// ADU span; 0 selects the stream's dt_max (or 120 reference intervals
  /// when dt_max is unbounded).
  Tick adu_interval = 0;
  /// Intensity band (units per reference interval) a quantized event may
  /// drift; 0 is lossless.
  double m_max = 0.0;
};

Tick resolve_adu_interval(const PlaneParams& plane, Tick requested);

/// Events of one ADU window, held as one t-sorted queue per pixel channel.
struct Adu {
  Tick start = 0;
  Tick span = 0;
  std::uint16_t cubes_x = 0;
  std::uint16_t cubes_y = 0;
  std::vector<std::vector<Event>> queues;

  std::size_t event_count() const;
};

/// Routes events (in any order, per-pixel t-monotone) to the ADU starting at
/// `start`. Events outside [start, start + span) throw Error(Parameter).
Adu build_adu(const PlaneParams& plane, Tick start, Tick span, std::span<const Event> events);

/// Splits a stream into ADUs aligned at multiples of `span`, skipping empty
/// windows.
std::vector<Adu> build_adus(const PlaneParams& plane, Tick span, std::span<const Event> events);

std::vector<std::uint8_t> encode_adu(const PlaneParams& plane, const Adu& adu, double m_max);
/// Events come out in cube scan order, each queue t-sorted.
std::vector<Event> decode_adu(const PlaneParams& plane, Tick start, Tick span,
                              std::span<const std::uint8_t> payload);

/// Inter prediction for the event after one reconstructed at `prev_t` with
/// reconstructed span `prev_span` (times relative to the ADU start).
std::int64_t predict_t(std::int64_t prev_t, std::int64_t prev_span, std::uint8_t prev_d,
                       std::uint8_t d, std::int64_t limit);

struct ShiftInput {
  std::int64_t pred = 0;
  std::int64_t t = 0;          // true time of this event
  std::int64_t prev_true = 0;  // true time of the previous event
  std::int64_t prev_recon = 0; // reconstructed time of the previous event
  std::uint8_t d = 0;
  std::optional<std::int64_t> next_t;  // true time of the successor in the queue
  std::uint8_t next_d = 0;
  std::int64_t limit = 0;  // window length; reconstructed times stay below it
  double m_max = 0.0;
  double ref_interval = 255.0;
  /// Reconstructed level (per reference interval) of the span before this
  /// event, which a filler repeats; unknown for the first event of a queue.
  std::optional<double> carried;
};

struct ShiftChoice {
  int s = 0;
  std::int64_t r = 0;
  std::int64_t t = 0;  // reconstructed time
};

/// Largest shift keeping the reconstructed intensity of this event (and of
/// its successor) strictly inside the M_max band. The boundary may also only
/// move so far that no reference interval it crosses drifts by M_max or more.
ShiftChoice choose_shift(const ShiftInput& in);

std::vector<std::uint8_t> compress_stream(const PlaneParams& plane, std::span<const Event> events,
                                          const CompressParams& params);

struct DecompressResult {
  DecodedStream stream;
  /// Non-empty when trailing data could not be decoded.
  std::string warning;
};

/// Events come out t-sorted (stable within a tick in cube scan order).
DecompressResult decompress_stream(std::span<const std::uint8_t> bytes);

/// Random access over the ADU records of a compressed stream.
class CompressedReader {
 public:
  explicit CompressedReader(std::span<const std::uint8_t> bytes);

  const PlaneParams& plane() const noexcept { return plane_; }
  Tick adu_interval() const noexcept { return interval_; }
  std::size_t adu_count() const noexcept { return records_.size(); }
  Tick adu_start(std::size_t k) const { return records_.at(k).start; }
  std::uint32_t adu_events(std::size_t k) const { return records_.at(k).events; }
  /// Index of the ADU covering tick t, if present.
  std::optional<std::size_t> find_adu(Tick t) const;
  std::vector<Event> decode(std::size_t k) const;
  const std::string& warning() const noexcept { return warning_; }

 private:
  struct Record {
    Tick start;
    std::uint32_t events;
    std::size_t offset;
    std::size_t length;
  };

  std::span<const std::uint8_t> bytes_;
  PlaneParams plane_;
  Tick interval_ = 0;
  std::vector<Record> records_;
  std::string warning_;
};

}  // namespace eventforge
