#include "eventforge/stream_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bytes.hpp"
#include "eventforge/error.hpp"

namespace eventforge {

using detail::get_u16;
using detail::get_u32;
using detail::put_u16;
using detail::put_u32;

void append_header(std::vector<std::uint8_t>& out, const PlaneParams& plane,
                   const std::array<char, 4>& magic) {
  for (char ch : magic) out.push_back(static_cast<std::uint8_t>(ch));
  out.push_back(kStreamVersion);
  out.push_back(0);
  put_u16(out, plane.width);
  put_u16(out, plane.height);
  out.push_back(plane.channels);
  out.push_back(static_cast<std::uint8_t>(plane.source));
  out.push_back(static_cast<std::uint8_t>(plane.mode));
  out.push_back(0);
  put_u32(out, plane.ticks_per_second);
  put_u32(out, plane.ref_interval);
  put_u32(out, plane.dt_max);
}

PlaneParams parse_header(std::span<const std::uint8_t> bytes,
                         const std::array<char, 4>& magic) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw Error(ErrorKind::BadMagic, "not an event stream (bad magic)");
  }
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorKind::Truncated, "stream header truncated");
  }
  const std::uint8_t* p = bytes.data();
  if (p[4] != kStreamVersion) {
    throw Error(ErrorKind::BadVersion,
                "unsupported stream version " + std::to_string(int(p[4])));
  }
  if (p[5] != 0) {
    throw Error(ErrorKind::Format, "only little-endian streams are supported");
  }
  PlaneParams plane;
  plane.width = get_u16(p + 6);
  plane.height = get_u16(p + 8);
  plane.channels = p[10];
  if (p[11] > 3 || p[12] > 1) throw Error(ErrorKind::Format, "bad source kind or pixel mode");
  plane.source = static_cast<SourceKind>(p[11]);
  plane.mode = static_cast<PixelMode>(p[12]);
  plane.ticks_per_second = get_u32(p + 14);
  plane.ref_interval = get_u32(p + 18);
  plane.dt_max = get_u32(p + 22);
  try {
    plane.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Format, std::string("bad header: ") + e.what());
  }
  return plane;
}

void append_event(std::vector<std::uint8_t>& out, const Event& e, std::uint8_t channels) {
  put_u16(out, e.x);
  put_u16(out, e.y);
  if (channels != 1) out.push_back(e.c);
  out.push_back(e.d);
  put_u32(out, e.t);
}

std::vector<std::uint8_t> write_stream(const PlaneParams& plane, std::span<const Event> events) {
  plane.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + events.size() * event_size(plane.channels));
  append_header(out, plane);
  for (const Event& e : events) {
    if (e.x >= plane.width || e.y >= plane.height || e.c >= plane.channels ||
        !is_valid_d(e.d)) {
      throw Error(ErrorKind::Parameter, "event outside the declared plane");
    }
    append_event(out, e, plane.channels);
  }
  return out;
}

StreamReader::StreamReader(std::span<const std::uint8_t> bytes)
    : bytes_(bytes), plane_(parse_header(bytes)) {}

std::size_t StreamReader::remaining_events() const noexcept {
  return (bytes_.size() - pos_) / event_size(plane_.channels);
}

std::optional<Event> StreamReader::next() {
  const std::size_t size = event_size(plane_.channels);
  if (pos_ == bytes_.size()) return std::nullopt;
  if (bytes_.size() - pos_ < size) {
    throw Error(ErrorKind::Truncated, "stream ends inside an event record");
  }
  const std::uint8_t* p = bytes_.data() + pos_;
  Event e;
  e.x = get_u16(p);
  e.y = get_u16(p + 2);
  std::size_t off = 4;
  if (plane_.channels != 1) e.c = p[off++];
  e.d = p[off++];
  e.t = get_u32(p + off);
  pos_ += size;
  if (e.x >= plane_.width || e.y >= plane_.height || e.c >= plane_.channels ||
      !is_valid_d(e.d)) {
    throw Error(ErrorKind::Format, "corrupt event record at byte " + std::to_string(pos_ - size));
  }
  return e;
}

DecodedStream read_stream(std::span<const std::uint8_t> bytes) {
  StreamReader reader(bytes);
  DecodedStream out;
  out.plane = reader.plane();
  out.events.reserve(reader.remaining_events());
  while (auto e = reader.next()) out.events.push_back(*e);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

SpanDecoder::SpanDecoder(const PlaneParams& plane)
    : plane_(plane),
      align_(plane.source == SourceKind::Framed && plane.mode == PixelMode::List),
      last_t_(plane.pixel_count(), 0),
      last_rate_(plane.pixel_count(), 0.0) {}

void SpanDecoder::decode(const Event& e, std::vector<EventSpan>& out) {
  const std::size_t idx = plane_.index(e.x, e.y, e.c);
  double start = last_t_[idx];
  if (align_) {
    const Tick ref = plane_.ref_interval;
    const Tick prev = last_t_[idx];
    const Tick aligned = prev % ref == 0 ? prev : (prev / ref + 1) * ref;
    if (aligned > prev && aligned <= e.t) {
      out.push_back({e.x, e.y, e.c, kFillerD, double(prev), double(aligned),
                     last_rate_[idx], true});
      start = aligned;
    }
  }
  const double end = std::max<double>(e.t, start);
  const double len = end - start;
  double rate = 0.0;
  if (e.d == kZeroD) {
    rate = 0.0;
  } else if (e.d == kFillerD) {
    rate = last_rate_[idx];
  } else if (len > 0.0) {
    rate = pow2(e.d) / len;
  } else {
    rate = last_rate_[idx];
  }
  out.push_back({e.x, e.y, e.c, e.d, start, end, rate, false});
  last_t_[idx] = std::max(last_t_[idx], e.t);
  last_rate_[idx] = rate;
}

StreamInfo stream_info(std::span<const std::uint8_t> bytes, bool deep_scan) {
  StreamInfo info;
  info.bytes = bytes.size();
  info.deep = deep_scan;
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCompressedMagic.data(), 4) == 0) {
    info.compressed = true;
    info.plane = parse_header(bytes, kCompressedMagic);
    return info;
  }
  StreamReader reader(bytes);
  info.plane = reader.plane();
  info.event_count = reader.remaining_events();
  if (!deep_scan) return info;

  SpanDecoder decoder(info.plane);
  std::vector<EventSpan> spans;
  double rate_min = std::numeric_limits<double>::infinity();
  double rate_max = 0.0;
  std::size_t scanned = 0;
  try {
    while (auto e = reader.next()) {
      ++scanned;
      info.last_t = std::max(info.last_t, e->t);
      spans.clear();
      decoder.decode(*e, spans);
      for (const EventSpan& s : spans) {
        if (s.gap || is_reserved(s.d) || s.end <= s.start) continue;
        rate_min = std::min(rate_min, s.rate);
        rate_max = std::max(rate_max, s.rate);
      }
    }
  } catch (const Error& err) {
    info.error = err.what();
  }
  info.event_count = scanned;
  info.duration_s = double(info.last_t) / info.plane.ticks_per_second;
  info.event_rate = info.duration_s > 0.0 ? double(scanned) / info.duration_s : 0.0;
  if (rate_max > 0.0 && std::isfinite(rate_min)) {
    info.dynamic_range_bits = std::log2(rate_max / rate_min);
  }
  return info;
}

std::string format_info(const StreamInfo& info) {
  std::ostringstream os;
  const PlaneParams& p = info.plane;
  os << "format:            " << (info.compressed ? "compressed (.adderc)" : "raw (.adder)")
     << "\n";
  os << "version:           " << int(kStreamVersion) << "\n";
  os << "endianness:        little\n";
  os << "resolution:        " << p.width << "x" << p.height << "\n";
  os << "channels:          " << int(p.channels) << "\n";
  os << "source:            " << to_string(p.source) << "\n";
  os << "pixel mode:        " << to_string(p.mode) << "\n";
  os << "ticks per second:  " << p.ticks_per_second << "\n";
  os << "reference interval:" << " " << p.ref_interval << "\n";
  os << "dt_max:            ";
  if (p.dt_max == kInfiniteTicks) {
    os << "unbounded\n";
  } else {
    os << p.dt_max << "\n";
  }
  os << "file size:         " << info.bytes << " bytes\n";
  if (!info.compressed) os << "events:            " << info.event_count << "\n";
  if (info.deep && !info.compressed) {
    os << std::fixed << std::setprecision(2);
    os << "duration:          " << info.duration_s << " s\n";
    os << "event rate:        " << info.event_rate << " events/s\n";
    os << "dynamic range:     ";
    if (info.dynamic_range_bits) {
      os << *info.dynamic_range_bits << " bits\n";
    } else {
      os << "n/a\n";
    }
  }
  if (!info.error.empty()) os << "error:             " << info.error << "\n";
  return os.str();
}

}  // namespace eventforge
