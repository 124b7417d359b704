#include <algorithm>
#include <map>

#include "doctest.h"
#include "eventforge/error.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/sim.hpp"
#include "eventforge/stream_io.hpp"
#include "eventforge/synthetic.hpp"

using namespace eventforge;

namespace {

std::vector<Frame> flat(std::uint16_t w, std::uint16_t h, std::size_t n, std::uint16_t v) {
  return std::vector<Frame>(n, Frame(w, h, 1, v));
}

SimConfig config_of(SimMode mode, std::uint8_t d0 = 0) {
  SimConfig c;
  c.mode = mode;
  c.initial_d = d0;
  return c;
}

}  // namespace

TEST_CASE("constant pixel fires once per frame and repeats") {
  const auto res = run_sim(flat(1, 1, 10, 256), config_of(SimMode::Constant, 8));
  REQUIRE(res.events.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(res.events[k].d == 8);
    CHECK(res.events[k].t == Tick(50 * (k + 1)));
  }
  CHECK(res.stats.repeated_events == 9);
  CHECK(res.stats.empty_events == 0);
  CHECK(res.plane.source == SourceKind::Simulated);

  // A change closes the run with one record.
  auto frames = flat(1, 1, 10, 256);
  frames.push_back(Frame(1, 1, 1, 512));
  const auto changed = run_sim(frames, config_of(SimMode::Constant, 8));
  REQUIRE(changed.stats.repeat_records.size() == 1);
  CHECK(changed.stats.repeat_records[0].count == 9);
  CHECK(changed.stats.repeat_records[0].t == 525);
}

TEST_CASE("dark pixel fires an empty event at dt_max, then throttles") {
  SimConfig c = config_of(SimMode::SelfAdjust, 16);
  Simulator sim(1, 1, 1, c, ExecPolicy::Serial);
  std::vector<Event> ev;
  for (int k = 0; k < 60; ++k) {
    auto e = sim.push_frame(Frame(1, 1, 1, 0));
    ev.insert(ev.end(), e.begin(), e.end());
  }
  REQUIRE(!ev.empty());
  CHECK(ev[0].d == kZeroD);
  CHECK(ev[0].t == 2500);
  CHECK(sim.pixel(0).d == 4);
  CHECK(sim.stats().empty_events == 1);
}

TEST_CASE("throttle formulas") {
  SimPixel px;
  px.d = 16;
  px.predicted = 1200;
  CHECK(adjust_self(px, 2500, true, 50) == -1);
  CHECK(px.d == 4);
  CHECK(px.predicted == doctest::Approx(100.0));
  px.d = 1;
  throttle(px);
  CHECK(px.d == 0);
  throttle(px);
  CHECK(px.d == 0);
  CHECK(stable_bits(100, 100) == 32);
  CHECK(stable_bits(0x80000000u, 0) == 0);
  CHECK(stable_bits(37, 38) == 30);
}

TEST_CASE("aggressive control") {
  SimPixel px;
  px.d = 5;
  CHECK(adjust_aggressive(px, 100, false, 300, false) == 1);
  CHECK(px.d == 6);
  CHECK(adjust_aggressive(px, 200, false, 300, false) == 0);
  CHECK(adjust_aggressive(px, 2500, true, 300, false) == -1);
  CHECK(px.d == 5);
  // Inside the ROI long spans step D down.
  CHECK(adjust_aggressive(px, 80, false, 50, true) == -1);
  px.d = 0;
  CHECK(adjust_aggressive(px, 2500, true, 300, false) == 0);
}

TEST_CASE("roi factor falls off with distance") {
  SimConfig c;
  c.roi_max_factor = 4;
  c.roi_falloff = 2;
  const Box roi{10, 10, 19, 19};
  CHECK(roi_factor(roi, 15, 15, c) == 0);
  CHECK(roi_factor(roi, 20, 15, c) == 4);
  CHECK(roi_factor(roi, 21, 15, c) == 4);
  CHECK(roi_factor(roi, 22, 15, c) == 3);
  CHECK(roi_factor(roi, 0, 0, c) == 1);
}

TEST_CASE("constant mode conserves photons") {
  const auto frames = synth::photon_bar(24, 16, 40, 37, 901, 1, 5, 1);
  for (SimMode m : {SimMode::Constant, SimMode::SelfAdjust, SimMode::Aggressive}) {
    Simulator sim(24, 16, 1, config_of(m, 6), ExecPolicy::Serial);
    for (const Frame& f : frames) sim.push_frame(f);
    const SimStats& s = sim.stats();
    CHECK(s.photons_in == doctest::Approx(s.photons_fired + s.photons_discarded +
                                          sim.residual_photons()));
  }
  Simulator exact(24, 16, 1, config_of(SimMode::Constant, 6), ExecPolicy::Serial);
  for (const Frame& f : frames) exact.push_frame(f);
  CHECK(exact.stats().photons_discarded == 0.0);
  CHECK(exact.stats().photons_in == exact.stats().photons_fired + exact.residual_photons());
}

TEST_CASE("constant mode reconstructs exact-multiple frames bit for bit") {
  const auto frames = synth::photon_bar(32, 24, 30, 160, 640, 16, 4, 1);
  const auto res = run_sim(frames, config_of(SimMode::Constant, 4));
  CHECK(res.stats.empty_events == 0);
  ReconstructParams rp;
  rp.i_max = 65535;
  const auto back = reconstruct_frames(res.plane, res.events, rp);
  REQUIRE(back.size() == frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) CHECK(back[k] == frames[k]);
  // And through the container.
  const auto decoded = read_stream(write_stream(res.plane, res.events));
  CHECK(decoded.events == res.events);
}

TEST_CASE("self adjustment settles at one to two events per interval") {
  SimConfig c = config_of(SimMode::SelfAdjust, 0);
  Simulator sim(4, 4, 1, c, ExecPolicy::Serial);
  for (int k = 0; k < 200; ++k) sim.push_frame(Frame(4, 4, 1, 3000));
  const std::uint64_t before = sim.stats().events;
  for (int k = 0; k < 200; ++k) sim.push_frame(Frame(4, 4, 1, 3000));
  const double rate = double(sim.stats().events - before) / (16.0 * 200);
  CHECK(rate >= 1.0);
  CHECK(rate <= 2.0);
  CHECK(sim.stats().empty_events == 0);
}

TEST_CASE("alternating light keeps D bounded") {
  Simulator sim(2, 2, 1, config_of(SimMode::SelfAdjust, 0), ExecPolicy::Serial);
  int lo = 255, hi = 0;
  for (int k = 0; k < 2000; ++k) {
    sim.push_frame(Frame(2, 2, 1, k % 2 ? 4000 : 40));
    lo = std::min<int>(lo, sim.pixel(0).d);
    hi = std::max<int>(hi, sim.pixel(0).d);
  }
  CHECK(hi <= 12);
  CHECK(hi - lo <= 8);
}

TEST_CASE("radial throttling reaches the square neighbourhood") {
  for (std::uint32_t radius : {2u, 0u}) {
    SimConfig c = config_of(SimMode::Radial, 15);
    c.dt_max = 50;
    c.throttle_radius = radius;
    c.minor_radius = 0;
    Simulator sim(7, 7, 1, c, ExecPolicy::Serial);
    Frame f(7, 7, 1, 32768);
    f.at(3, 3) = 0;
    CHECK(sim.push_frame(f).size() == 49);
    int throttled = 0;
    for (std::size_t i = 0; i < 49; ++i) throttled += sim.pixel(i).d == 3;
    CHECK(throttled == (radius == 2 ? 25 : 1));
  }
}

TEST_CASE("radial mode avoids empty events on a moving edge") {
  const auto frames = synth::photon_bar(48, 16, 120, 20, 20000, 1, 8, 1);
  SimConfig c = config_of(SimMode::SelfAdjust, 4);
  c.dt_max = 500;
  const auto self = run_sim(frames, c);
  c.mode = SimMode::Radial;
  c.throttle_radius = 3;
  const auto radial = run_sim(frames, c);
  CHECK(self.stats.empty_events > 0);
  CHECK(radial.stats.empty_events < self.stats.empty_events);
}

TEST_CASE("temporal foveation") {
  const std::uint16_t w = 64, h = 48;
  const std::size_t n = 120;
  const auto frames = synth::photon_bar(w, h, n, 300, 3000, 1, 6, 1);
  // Track the bar with a box a little wider than it.
  std::vector<RoiSample> track;
  for (std::size_t k = 0; k < n; ++k) {
    const int x0 = int(k % w) - 2;
    track.push_back({k, Box{x0, 0, x0 + 9, h - 1}});
  }
  SimConfig c = config_of(SimMode::Aggressive, 2);
  const auto res = run_sim(frames, c, track);
  std::uint64_t in_ev = 0, out_ev = 0, in_px = 0, out_px = 0;
  std::map<std::size_t, std::vector<Event>> by_frame;
  for (const Event& e : res.events) {
    const std::size_t k = (e.t - 1) / c.ref_interval;
    const Box b = *roi_at(track, k);
    (b.contains(e.x, e.y) ? in_ev : out_ev)++;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Box b = *roi_at(track, k);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) (b.contains(x, y) ? in_px : out_px)++;
  }
  const double in_rate = double(in_ev) / double(in_px);
  const double out_rate = double(out_ev) / double(out_px);
  CHECK(in_rate >= 5.0 * out_rate);

  const auto constant = run_sim(frames, config_of(SimMode::Constant, 2));
  CHECK(res.events.size() < constant.events.size());
}

TEST_CASE("larger roi factor means more events on a static scene") {
  const std::uint16_t w = 80, h = 8;
  const auto frames = flat(w, h, 200, 500);
  const std::vector<RoiSample> track{{0, Box{0, 0, 3, h - 1}}};
  SimConfig c = config_of(SimMode::Aggressive, 2);
  c.roi_max_factor = 8;
  c.roi_falloff = 8;
  const auto res = run_sim(frames, c, track);
  std::map<std::uint32_t, std::pair<double, double>> by_r;  // events, pixels
  for (int x = 4; x < w; ++x) by_r[roi_factor(track[0].box, x, 0, c)].second += h;
  for (const Event& e : res.events) {
    if (e.x >= 4) by_r[roi_factor(track[0].box, e.x, 0, c)].first += 1;
  }
  double prev = 0.0;
  for (const auto& [r, v] : by_r) {
    const double rate = v.first / v.second;
    CHECK(rate >= prev);
    prev = rate;
  }
}

TEST_CASE("serial and parallel simulations agree") {
  const auto frames = synth::photon_bar(40, 30, 50, 90, 5000, 1, 5, 2);
  for (SimMode m : {SimMode::Constant, SimMode::SelfAdjust, SimMode::Radial, SimMode::Aggressive}) {
    const auto a = run_sim(frames, config_of(m, 3), {}, ExecPolicy::Serial);
    const auto b = run_sim(frames, config_of(m, 3), {}, ExecPolicy::Parallel);
    CHECK(a.events == b.events);
    CHECK(a.stats.repeat_records == b.stats.repeat_records);
  }
}

TEST_CASE("simulator edges") {
  const auto none = run_sim(8, 8, 1, std::vector<Frame>{}, SimConfig{});
  CHECK(none.events.empty());
  CHECK_THROWS_AS(run_sim(std::vector<Frame>{}, SimConfig{}), Error);
  CHECK(write_stream(none.plane, none.events).size() == kHeaderSize);

  Simulator sim(4, 4, 1, SimConfig{}, ExecPolicy::Serial);
  CHECK_THROWS_AS(sim.push_frame(Frame(3, 4, 1)), Error);
  SimConfig bad;
  bad.dt_max = 10;
  CHECK_THROWS_AS(Simulator(4, 4, 1, bad), Error);
  CHECK(parse_sim_mode("radial") == SimMode::Radial);
  CHECK_THROWS_AS(parse_sim_mode("fast"), Error);
}

TEST_CASE("roi track parsing") {
  const auto t = parse_roi_track("sample_index,x,y,w,h\n0,1,2,3,4\n\n5, 10,10,2,2\r\n");
  REQUIRE(t.size() == 2);
  CHECK(t[0].box == Box{1, 2, 3, 5});
  CHECK(!roi_at(parse_roi_track("3,0,0,1,1\n"), 2));
  CHECK(roi_at(t, 4)->x0 == 1);
  CHECK(roi_at(t, 9)->x0 == 10);
  CHECK_THROWS_AS(parse_roi_track("0,1,2,3,4\n1,1,2\n"), Error);
  CHECK_THROWS_AS(parse_roi_track("0,1,2,0,4\n"), Error);
  CHECK_THROWS_AS(read_roi_track("/nonexistent/roi.csv"), Error);
}
