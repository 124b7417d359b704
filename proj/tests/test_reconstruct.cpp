#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "doctest.h"
#include "eventforge/reconstruct.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"

using namespace eventforge;

namespace {

PlaneParams plane_of(std::uint16_t w, std::uint16_t h) {
  PlaneParams p;
  p.width = w;
  p.height = h;
  return p;
}

}  // namespace

TEST_CASE("full-scale event fills a frame with 255") {
  const PlaneParams p = plane_of(1, 1);
  const std::vector<Event> ev{{0, 0, 0, 7, 128}, {0, 0, 0, kFillerD, 255}};
  const auto frames = reconstruct_frames(p, ev);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].data[0] == 255);
}

TEST_CASE("spans are weighted by their overlap with each frame") {
  const PlaneParams p = plane_of(1, 1);
  // 2^6 over 255 ticks, then zero for 255 ticks, then 2^7 over 128 and
  // 2^5 over 127 ticks.
  const std::vector<Event> ev{{0, 0, 0, 6, 255},
                              {0, 0, 0, kZeroD, 510},
                              {0, 0, 0, 7, 638},
                              {0, 0, 0, 5, 765}};
  const auto frames = reconstruct_frames(p, ev);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0].data[0] == 64);
  CHECK(frames[1].data[0] == 0);
  CHECK(frames[2].data[0] == 160);

  // One span straddling two frames splits its light by time.
  const std::vector<Event> half{{0, 0, 0, 8, 510}};
  const auto two = reconstruct_frames(p, half);
  REQUIRE(two.size() == 2);
  CHECK(two[0].data[0] == 128);
  CHECK(two[1].data[0] == 128);
}

TEST_CASE("frames wait for every pixel unless the buffer limit is hit") {
  const PlaneParams p = plane_of(2, 1);
  std::vector<Event> ev;
  for (Tick k = 1; k <= 10; ++k) ev.push_back({0, 0, 0, 6, k * 255});
  ev.push_back({1, 0, 0, 7, 128});

  FrameReconstructor waiting(p);
  std::vector<Frame> out;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) waiting.push(ev[i], out);
  CHECK(out.empty());

  ReconstructParams rp;
  rp.buffer_limit = 3;
  FrameReconstructor limited(p, rp);
  std::vector<Frame> forced;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) limited.push(ev[i], forced);
  CHECK(forced.size() >= 7);
  for (const Frame& f : forced) {
    CHECK(f.at(0, 0) == 64);
    CHECK(f.at(1, 0) == 0);
  }
}

TEST_CASE("instantaneous playback scales 2^D by the frame span") {
  const PlaneParams p = plane_of(3, 1);
  InstantaneousSampler s(p);
  s.push({0, 0, 0, 7, 128});
  s.push({1, 0, 0, 5, 128});
  s.push({2, 0, 0, 9, 100});
  CHECK(s.value(0) == doctest::Approx(255.0));
  CHECK(s.value(1) == doctest::Approx(32.0 * 255 / 128));
  CHECK(s.value(2) == doctest::Approx(255.0));  // clamped
  s.push({1, 0, 0, kFillerD, 300});
  CHECK(s.value(1) == doctest::Approx(32.0 * 255 / 128));
  s.push({1, 0, 0, kZeroD, 400});
  CHECK(s.value(1) == 0.0);
  CHECK(s.image().at(0, 0) == 255);
  CHECK(s.push({0, 0, 0, 7, 600}));
  CHECK_FALSE(s.push({0, 0, 0, 7, 601}));
}

TEST_CASE("D and dt views are min-max normalised") {
  const PlaneParams p = plane_of(4, 1);
  EventImageTracker tr(p);
  tr.push({0, 0, 0, 4, 10});
  tr.push({1, 0, 0, 6, 30});
  tr.push({2, 0, 0, 8, 20});
  tr.push({3, 0, 0, kZeroD, 40});
  const GrayImage d = tr.render_d();
  CHECK(d.at(0, 0) == 0);
  CHECK(d.at(1, 0) == 128);
  CHECK(d.at(2, 0) == 255);
  CHECK(d.at(3, 0) == 0);
  const GrayImage dt = tr.render_dt();
  CHECK(dt.at(0, 0) == 0);
  CHECK(dt.at(1, 0) == 255);
  CHECK(dt.at(2, 0) == 128);

  // A filler keeps the D it extends.
  tr.push({2, 0, 0, kFillerD, 60});
  CHECK(tr.render_d().at(2, 0) == 255);

  EventImageTracker flat(plane_of(2, 1));
  flat.push({0, 0, 0, 5, 10});
  flat.push({1, 0, 0, 5, 10});
  CHECK(flat.render_d().at(0, 0) == 255);
  CHECK(flat.render_d().at(1, 0) == 255);
}

TEST_CASE("contrast export counts rounded log crossings") {
  const PlaneParams p = plane_of(1, 1);
  const double theta = 0.15;
  // Rates per tick; L = rate * ref / 255 = rate.
  const std::vector<Event> ev{{0, 0, 0, 7, 256},   // L = 0.5
                              {0, 0, 0, 8, 512},   // L = 1.0
                              {0, 0, 0, 5, 768},   // L = 0.125
                              {0, 0, 0, 5, 1024}}; // unchanged
  const auto out = export_dvs(p, ev, theta);
  // Oracle: walk the reference in theta steps toward each new log level.
  double ref = std::log1p(0.5);
  std::vector<DvsEvent> want;
  const double levels[] = {1.0, 0.125, 0.125};
  const Tick starts[] = {256, 512, 768};
  for (int i = 0; i < 3; ++i) {
    const long k = std::lround((std::log1p(levels[i]) - ref) / theta);
    for (long j = 0; j < std::labs(k); ++j) {
      want.push_back({0, 0, static_cast<std::int8_t>(k > 0 ? 1 : -1), starts[i]});
    }
    ref += double(k) * theta;
  }
  CHECK(out == want);
  CHECK(out.size() == 2 + 4);
}

TEST_CASE("dvs round trip recovers most source events") {
  const auto src = synth::dvs_walk(16, 16, 2'000'000, 8.0, 5'000, 500'000, 3);
  const PlaneParams plane = dvs_plane(16, 16);
  DvsTranscoder tx(plane, {});
  std::vector<Event> events = tx.push(src);
  auto tail = tx.finish(2'000'000);
  events.insert(events.end(), tail.begin(), tail.end());
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  const auto back = export_dvs(plane, events);
  std::multiset<std::tuple<int, int, int, Tick>> have;
  for (const DvsEvent& e : back) have.insert({e.x, e.y, e.p, e.t});
  std::size_t hit = 0;
  for (const DvsEvent& e : src) {
    auto it = have.find({e.x, e.y, e.p, e.t});
    if (it != have.end()) {
      ++hit;
      have.erase(it);
    }
  }
  CHECK(double(hit) >= 0.8 * double(src.size()));
}
