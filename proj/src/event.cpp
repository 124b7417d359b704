#include "eventforge/event.hpp"

#include "eventforge/error.hpp"

namespace eventforge {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::BadVersion: return "bad-version";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Exhausted: return "exhausted";
  }
  return "unknown";
}

const char* to_string(SourceKind kind) noexcept {
  switch (kind) {
    case SourceKind::Framed: return "framed";
    case SourceKind::Dvs: return "dvs";
    case SourceKind::Adder: return "adder";
    case SourceKind::Simulated: return "simulated";
  }
  return "unknown";
}

const char* to_string(PixelMode mode) noexcept {
  return mode == PixelMode::List ? "list" : "collapse";
}

void PlaneParams::validate() const {
  if (width == 0 || height == 0) {
    throw Error(ErrorKind::Parameter, "plane dimensions must be non-zero");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::Parameter, "channels must be 1 or 3");
  }
  if (ref_interval == 0 || ticks_per_second == 0) {
    throw Error(ErrorKind::Parameter, "time base must be non-zero");
  }
  if (dt_max < ref_interval) {
    throw Error(ErrorKind::Parameter, "dt_max must be at least the reference interval");
  }
  if (source == SourceKind::Framed && ticks_per_second % ref_interval != 0) {
    throw Error(ErrorKind::Parameter,
                "ticks per second must be a multiple of the reference interval");
  }
}

void SensitivityParams::validate() const {
  if (m < 0.0 || m_max < m || m_max > 255.0) {
    throw Error(ErrorKind::Parameter, "contrast thresholds need 0 <= M <= M_max <= 255");
  }
  if (m_velocity < 1) {
    throw Error(ErrorKind::Parameter, "M_v must be at least 1");
  }
}

}  // namespace eventforge
