#include "eventforge/compress.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "bytes.hpp"
#include "eventforge/arith.hpp"
#include "eventforge/error.hpp"

namespace eventforge {

namespace {

constexpr std::size_t kPrefixContexts = 24;
constexpr int kMaxShift = 24;
constexpr int kMaxPrefix = 62;
constexpr std::uint8_t kSeedD = 7;

std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

std::int64_t unzigzag(std::uint64_t u) {
  return static_cast<std::int64_t>(u >> 1) ^ -static_cast<std::int64_t>(u & 1);
}

// Exp-Golomb (k = 0) binarization: unary prefix bins each get their own
// adaptive context, suffix bits are bypass coded.
class GolombContext {
 public:
  GolombContext() : prefix_(kPrefixContexts, FrequencyModel(2)) {}

  void put(ArithEncoder& enc, std::uint64_t u) {
    const std::uint64_t v = u + 1;
    const int n = std::bit_width(v);
    for (int i = 0; i + 1 < n; ++i) enc.encode(bin(i), 1);
    enc.encode(bin(n - 1), 0);
    for (int i = n - 2; i >= 0; --i) enc.encode_bypass((v >> i) & 1);
  }

  std::uint64_t get(ArithDecoder& dec) {
    int n = 1;
    while (dec.decode(bin(n - 1)) == 1) {
      if (++n > kMaxPrefix) throw Error(ErrorKind::Format, "corrupt Exp-Golomb prefix");
    }
    std::uint64_t v = 1;
    for (int i = n - 2; i >= 0; --i) v = (v << 1) | (dec.decode_bypass() ? 1 : 0);
    return v - 1;
  }

 private:
  FrequencyModel& bin(int i) { return prefix_[std::min<std::size_t>(i, kPrefixContexts - 1)]; }

  std::vector<FrequencyModel> prefix_;
};

struct Contexts {
  GolombContext d;
  GolombContext t_intra;
  GolombContext t_inter;
  GolombContext s;
};

std::uint64_t d_symbol(std::uint8_t d, std::uint8_t prev) {
  return zigzag(int(d) - int(prev)) + kFirstResidualSymbol;
}

std::uint8_t d_from_symbol(std::uint64_t sym, std::uint8_t prev) {
  const std::int64_t d = prev + unzigzag(sym - kFirstResidualSymbol);
  if (d < 0 || d > 255 || !is_valid_d(static_cast<std::uint8_t>(d))) {
    throw Error(ErrorKind::Format, "decoded D out of range");
  }
  return static_cast<std::uint8_t>(d);
}

// Visits pixel-channel queue indices cube by cube.
template <typename Fn>
void for_each_cube(const PlaneParams& plane, Fn&& fn) {
  std::vector<std::size_t> members;
  for (int cy = 0; cy < plane.height; cy += kCubeSize) {
    for (int cx = 0; cx < plane.width; cx += kCubeSize) {
      members.clear();
      for (int y = cy; y < std::min<int>(plane.height, cy + kCubeSize); ++y) {
        for (int x = cx; x < std::min<int>(plane.width, cx + kCubeSize); ++x) {
          for (int c = 0; c < plane.channels; ++c) {
            members.push_back(plane.index(std::uint16_t(x), std::uint16_t(y), std::uint8_t(c)));
          }
        }
      }
      fn(members);
    }
  }
}

// Reconstructed state of the last coded event in a queue.
struct QueueState {
  std::int64_t t = 0;
  std::int64_t span = 0;
  std::uint8_t d = 0;
};

}  // namespace

Tick resolve_adu_interval(const PlaneParams& plane, Tick requested) {
  if (requested != 0) return requested;
  if (plane.dt_max != 0 && plane.dt_max != kInfiniteTicks) return plane.dt_max;
  return plane.ref_interval * 120;
}

std::size_t Adu::event_count() const {
  std::size_t n = 0;
  for (const auto& q : queues) n += q.size();
  return n;
}

Adu build_adu(const PlaneParams& plane, Tick start, Tick span, std::span<const Event> events) {
  if (span == 0) throw Error(ErrorKind::Parameter, "ADU span must be non-zero");
  Adu adu;
  adu.start = start;
  adu.span = span;
  adu.cubes_x = static_cast<std::uint16_t>((plane.width + kCubeSize - 1) / kCubeSize);
  adu.cubes_y = static_cast<std::uint16_t>((plane.height + kCubeSize - 1) / kCubeSize);
  adu.queues.resize(plane.pixel_count());
  for (const Event& e : events) {
    if (e.t < start || std::uint64_t(e.t) >= std::uint64_t(start) + span) {
      throw Error(ErrorKind::Parameter, "event outside the ADU window");
    }
    if (e.x >= plane.width || e.y >= plane.height || e.c >= plane.channels) {
      throw Error(ErrorKind::Format, "event outside the plane");
    }
    auto& q = adu.queues[plane.index(e.x, e.y, e.c)];
    if (!q.empty() && q.back().t > e.t) {
      throw Error(ErrorKind::Format, "events of a pixel are not t-ordered");
    }
    q.push_back(e);
  }
  return adu;
}

std::vector<Adu> build_adus(const PlaneParams& plane, Tick span, std::span<const Event> events) {
  if (span == 0) throw Error(ErrorKind::Parameter, "ADU span must be non-zero");
  std::vector<Event> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  std::vector<Adu> out;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const Tick start = sorted[i].t / span * span;
    std::size_t j = i;
    while (j < sorted.size() && std::uint64_t(sorted[j].t) < std::uint64_t(start) + span) ++j;
    out.push_back(build_adu(plane, start, span, std::span(sorted).subspan(i, j - i)));
    i = j;
  }
  return out;
}

std::int64_t predict_t(std::int64_t prev_t, std::int64_t prev_span, std::uint8_t prev_d,
                       std::uint8_t d, std::int64_t limit) {
  std::int64_t step = prev_span;
  if (!is_reserved(prev_d) && !is_reserved(d)) {
    const int dr = int(d) - int(prev_d);
    if (dr >= 0) {
      step = dr >= 40 ? limit : std::min(limit, prev_span << dr);
    } else {
      step = -dr >= 63 ? 0 : prev_span >> -dr;
    }
  }
  return std::min(prev_t + step, limit);
}

ShiftChoice choose_shift(const ShiftInput& in) {
  ShiftChoice exact{0, in.t - in.pred, in.t};
  if (!(in.m_max > 0.0) || !in.next_t) return exact;
  const std::int64_t next = *in.next_t;
  const bool own_band = !is_reserved(in.d);
  const bool next_band = !is_reserved(in.next_d);
  // Reserved events only move when their successor bounds the drift.
  if (!own_band && !next_band) return exact;
  if (in.t <= in.prev_true || next <= in.t) return exact;

  const double ref = in.ref_interval;
  const double i_true = own_band ? pow2(in.d) / double(in.t - in.prev_true) * ref : 0.0;
  const double n_true = next_band ? pow2(in.next_d) / double(next - in.t) * ref : 0.0;
  // Moving the boundary hands |t' - t| ticks to the other side's level; a
  // reference interval overlapping that stretch is off by the level step
  // times the overlap. A filler repeats the level before it.
  double own_level = i_true;
  if (in.d == kFillerD) {
    if (!in.carried) return exact;
    own_level = *in.carried;
  }
  const double next_level = in.next_d == kFillerD ? own_level : n_true;
  const double step = std::abs(own_level - next_level);
  const std::int64_t residual = in.t - in.pred;
  for (int s = kMaxShift; s >= 1; --s) {
    const std::int64_t r = residual >> s;  // floor division
    const std::int64_t t = in.pred + r * (std::int64_t(1) << s);
    if (t <= in.prev_recon || t >= next || t < 0 || t >= in.limit) continue;
    const double moved = std::min(double(std::abs(t - in.t)), ref);
    if (!(step * moved / ref < in.m_max)) continue;
    if (own_band) {
      const double i = pow2(in.d) / double(t - in.prev_recon) * ref;
      if (!(std::abs(i - i_true) < in.m_max)) continue;
    }
    if (next_band) {
      const double i = pow2(in.next_d) / double(next - t) * ref;
      if (!(std::abs(i - n_true) < in.m_max)) continue;
    }
    return {s, r, t};
  }
  return exact;
}

std::vector<std::uint8_t> encode_adu(const PlaneParams& plane, const Adu& adu, double m_max) {
  ArithEncoder enc;
  Contexts ctx;
  const auto start = std::int64_t(adu.start);
  const auto limit = std::int64_t(adu.span);

  // Intra pass: first event of each queue against the previous one in scan order.
  std::vector<bool> cube_live;
  for_each_cube(plane, [&](const std::vector<std::size_t>& members) {
    const bool live = std::any_of(members.begin(), members.end(),
                                  [&](std::size_t i) { return !adu.queues[i].empty(); });
    cube_live.push_back(live);
    if (!live) {
      ctx.d.put(enc, std::uint64_t(ControlSymbol::SkipCube));
      return;
    }
    std::uint8_t prev_d = kSeedD;
    std::int64_t prev_t = 0;
    for (std::size_t i : members) {
      const auto& q = adu.queues[i];
      if (q.empty()) {
        ctx.d.put(enc, std::uint64_t(ControlSymbol::EmptyQueue));
        continue;
      }
      const std::int64_t t = std::int64_t(q.front().t) - start;
      ctx.d.put(enc, d_symbol(q.front().d, prev_d));
      ctx.t_intra.put(enc, zigzag(t - prev_t));
      prev_d = q.front().d;
      prev_t = t;
    }
  });

  // Inter pass: remaining events of each queue.
  std::size_t cube = 0;
  for_each_cube(plane, [&](const std::vector<std::size_t>& members) {
    if (!cube_live[cube++]) return;
    for (std::size_t i : members) {
      const auto& q = adu.queues[i];
      if (q.empty()) continue;
      QueueState st{std::int64_t(q.front().t) - start, std::int64_t(q.front().t) - start,
                    q.front().d};
      std::int64_t prev_true = st.t;
      std::optional<double> carried;
      for (std::size_t b = 1; b < q.size(); ++b) {
        ShiftInput in;
        in.pred = predict_t(st.t, st.span, st.d, q[b].d, limit);
        in.t = std::int64_t(q[b].t) - start;
        in.prev_true = prev_true;
        in.prev_recon = st.t;
        in.d = q[b].d;
        if (b + 1 < q.size()) {
          in.next_t = std::int64_t(q[b + 1].t) - start;
          in.next_d = q[b + 1].d;
        }
        in.limit = limit;
        in.m_max = m_max;
        in.ref_interval = double(plane.ref_interval);
        in.carried = carried;
        const ShiftChoice ch = choose_shift(in);
        if (q[b].d == kZeroD) {
          carried = 0.0;
        } else if (q[b].d != kFillerD && ch.t > st.t) {
          carried = pow2(q[b].d) / double(ch.t - st.t) * in.ref_interval;
        }
        ctx.d.put(enc, d_symbol(q[b].d, st.d));
        ctx.s.put(enc, std::uint64_t(ch.s));
        ctx.t_inter.put(enc, zigzag(ch.r));
        st = {ch.t, ch.t - st.t, q[b].d};
        prev_true = in.t;
      }
      ctx.d.put(enc, std::uint64_t(ControlSymbol::EmptyQueue));
    }
  });
  ctx.d.put(enc, std::uint64_t(ControlSymbol::EndOfSequence));
  return enc.finish();
}

std::vector<Event> decode_adu(const PlaneParams& plane, Tick start, Tick span,
                              std::span<const std::uint8_t> payload) {
  ArithDecoder dec(payload);
  Contexts ctx;
  const auto limit = std::int64_t(span);
  auto check_t = [&](std::int64_t t) {
    if (t < 0 || t >= limit) throw Error(ErrorKind::Format, "decoded time outside the ADU");
    return t;
  };
  auto emit = [&](std::size_t index, std::uint8_t d, std::int64_t t) {
    const std::size_t pixel = index / plane.channels;
    return Event{static_cast<std::uint16_t>(pixel % plane.width),
                 static_cast<std::uint16_t>(pixel / plane.width),
                 static_cast<std::uint8_t>(index % plane.channels), d, Tick(start + t)};
  };

  std::vector<std::optional<QueueState>> firsts(plane.pixel_count());
  std::vector<bool> cube_live;
  for_each_cube(plane, [&](const std::vector<std::size_t>& members) {
    std::uint8_t prev_d = kSeedD;
    std::int64_t prev_t = 0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::uint64_t sym = ctx.d.get(dec);
      if (sym == std::uint64_t(ControlSymbol::SkipCube) && k == 0) {
        cube_live.push_back(false);
        return;
      }
      if (sym == std::uint64_t(ControlSymbol::EmptyQueue)) continue;
      if (sym < kFirstResidualSymbol) throw Error(ErrorKind::Format, "unexpected control symbol");
      const std::uint8_t d = d_from_symbol(sym, prev_d);
      const std::int64_t t = check_t(prev_t + unzigzag(ctx.t_intra.get(dec)));
      firsts[members[k]] = QueueState{t, t, d};
      prev_d = d;
      prev_t = t;
    }
    cube_live.push_back(true);
  });

  std::vector<Event> out;
  std::size_t cube = 0;
  for_each_cube(plane, [&](const std::vector<std::size_t>& members) {
    if (!cube_live[cube++]) return;
    for (std::size_t i : members) {
      if (!firsts[i]) continue;
      QueueState st = *firsts[i];
      out.push_back(emit(i, st.d, st.t));
      for (;;) {
        const std::uint64_t sym = ctx.d.get(dec);
        if (sym == std::uint64_t(ControlSymbol::EmptyQueue)) break;
        if (sym < kFirstResidualSymbol) throw Error(ErrorKind::Format, "unexpected control symbol");
        const std::uint8_t d = d_from_symbol(sym, st.d);
        const std::uint64_t s = ctx.s.get(dec);
        if (s > std::uint64_t(kMaxShift)) throw Error(ErrorKind::Format, "shift out of range");
        const std::int64_t r = unzigzag(ctx.t_inter.get(dec));
        const std::int64_t pred = predict_t(st.t, st.span, st.d, d, limit);
        const std::int64_t t = check_t(pred + r * (std::int64_t(1) << s));
        if (t < st.t) throw Error(ErrorKind::Format, "decoded times go backwards");
        st = {t, t - st.t, d};
        out.push_back(emit(i, d, t));
      }
    }
  });
  if (ctx.d.get(dec) != std::uint64_t(ControlSymbol::EndOfSequence)) {
    throw Error(ErrorKind::Format, "missing end-of-sequence symbol");
  }
  return out;
}

std::vector<std::uint8_t> compress_stream(const PlaneParams& plane, std::span<const Event> events,
                                          const CompressParams& params) {
  plane.validate();
  if (params.m_max < 0.0) throw Error(ErrorKind::Parameter, "m_max must be non-negative");
  const Tick interval = resolve_adu_interval(plane, params.adu_interval);
  const std::vector<Adu> adus = build_adus(plane, interval, events);

  std::vector<std::vector<std::uint8_t>> payloads(adus.size());
  // ADUs share no coder state.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < adus.size(); ++k) {
    payloads[k] = encode_adu(plane, adus[k], params.m_max);
  }

  std::vector<std::uint8_t> out;
  append_header(out, plane, kCompressedMagic);
  detail::put_u32(out, interval);
  for (std::size_t k = 0; k < adus.size(); ++k) {
    detail::put_u32(out, adus[k].start);
    detail::put_u32(out, static_cast<std::uint32_t>(adus[k].event_count()));
    detail::put_u32(out, static_cast<std::uint32_t>(payloads[k].size()));
    out.insert(out.end(), payloads[k].begin(), payloads[k].end());
  }
  return out;
}

CompressedReader::CompressedReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  plane_ = parse_header(bytes, kCompressedMagic);
  if (bytes.size() < kHeaderSize + 4) throw Error(ErrorKind::Truncated, "missing ADU interval");
  interval_ = detail::get_u32(bytes.data() + kHeaderSize);
  if (interval_ == 0) throw Error(ErrorKind::Format, "zero ADU interval");
  std::size_t pos = kHeaderSize + 4;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 12) {
      warning_ = "truncated ADU record header; decoded up to ADU " + std::to_string(records_.size());
      break;
    }
    Record r;
    r.start = detail::get_u32(bytes.data() + pos);
    r.events = detail::get_u32(bytes.data() + pos + 4);
    r.length = detail::get_u32(bytes.data() + pos + 8);
    r.offset = pos + 12;
    if (bytes.size() - r.offset < r.length) {
      warning_ = "truncated ADU payload; decoded up to ADU " + std::to_string(records_.size());
      break;
    }
    if (r.start % interval_ != 0 || (!records_.empty() && r.start <= records_.back().start)) {
      throw Error(ErrorKind::Format, "ADU records out of order");
    }
    records_.push_back(r);
    pos = r.offset + r.length;
  }
}

std::optional<std::size_t> CompressedReader::find_adu(Tick t) const {
  const Tick start = t / interval_ * interval_;
  auto it = std::lower_bound(records_.begin(), records_.end(), start,
                             [](const Record& r, Tick s) { return r.start < s; });
  if (it == records_.end() || it->start != start) return std::nullopt;
  return std::size_t(it - records_.begin());
}

std::vector<Event> CompressedReader::decode(std::size_t k) const {
  const Record& r = records_.at(k);
  std::vector<Event> events =
      decode_adu(plane_, r.start, interval_, bytes_.subspan(r.offset, r.length));
  if (events.size() != r.events) throw Error(ErrorKind::Format, "ADU event count mismatch");
  return events;
}

DecompressResult decompress_stream(std::span<const std::uint8_t> bytes) {
  CompressedReader reader(bytes);
  DecompressResult res;
  res.stream.plane = reader.plane();
  res.warning = reader.warning();
  for (std::size_t k = 0; k < reader.adu_count(); ++k) {
    std::vector<Event> events = reader.decode(k);
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    res.stream.events.insert(res.stream.events.end(), events.begin(), events.end());
  }
  return res;
}

}  // namespace eventforge
