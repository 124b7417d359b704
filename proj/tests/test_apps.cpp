#include <algorithm>
#include <random>

#include "doctest.h"
#include "eventforge/apps.hpp"
#include "eventforge/sim.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"

using namespace eventforge;

TEST_CASE("five collinear points form one cluster") {
  std::vector<Point2> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({3.0 + i, 7.0});
  const auto labels = dbscan(pts, 1.5, 3);
  CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
  const auto boxes = cluster_boxes(pts, 1.5, 3);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0] == Box{3, 7, 7, 7});

  const std::vector<Point2> far{{0, 0}, {5, 0}, {0, 5}, {5, 5}};
  CHECK(cluster_boxes(far, 1.5, 2).empty());
}

TEST_CASE("quarter-area box at one half keeps an eighth") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<DvsEvent> ev(10'000);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      ev[i] = {std::uint16_t(rng() % 64), std::uint16_t(rng() % 64), 1, Tick(i)};
    }
    const std::vector<Box> boxes{{0, 0, 31, 31}};
    total += double(filter_dvs_by_boxes(ev, boxes, 0.5, 0.0, seed).size()) / 10'000.0;
  }
  CHECK(total / 8.0 == doctest::Approx(0.125).epsilon(0.16));
  CHECK(filter_dvs_by_boxes(std::vector<DvsEvent>{{1, 1, 1, 0}}, {}, 0.5, 0.0, 1).empty());
}

TEST_CASE("simulated moving outline: edges first, blob after closing") {
  // Background fires twice per interval at D=4, the outline ten times.
  std::vector<Frame> frames;
  for (int k = 0; k < 20; ++k) {
    Frame f(40, 24, 1, 32);
    for (int y = 8; y < 16; ++y)
      for (int x = 2 + k; x < 10 + k; ++x)
        if (x == 2 + k || x == 9 + k || y == 8 || y == 15) f.at(x, y) = 160;
    frames.push_back(f);
  }
  SimConfig cfg;
  cfg.initial_d = 4;
  const auto sim = run_sim(frames, cfg);
  const auto open = segment_motion(sim.events, 40, 24, cfg.ref_interval, 2, 0);
  const auto closed = segment_motion(sim.events, 40, 24, cfg.ref_interval, 2, 3);
  REQUIRE(open.size() >= 20);
  for (int k = 5; k < 19; ++k) {  // clear of the left border
    const Box square{2 + k, 8, 9 + k, 15};
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 40; ++x) {
        const bool edge = frames[k].at(x, y) == 160;
        CHECK(open[k].mask.at(x, y) == (edge ? 255 : 0));
        CHECK(closed[k].mask.at(x, y) == (square.contains(x, y) ? 255 : 0));
      }
    }
  }
}

TEST_CASE("stream features come from the instantaneous canvas") {
  PlaneParams p;
  p.width = 16;
  p.height = 16;
  // A bright quadrant appears at t=255 on a dark plane.
  std::vector<Event> ev;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) ev.push_back({std::uint16_t(x), std::uint16_t(y), 0, 2, 255});
  for (int y = 8; y < 16; ++y)
    for (int x = 8; x < 16; ++x) ev.push_back({std::uint16_t(x), std::uint16_t(y), 0, 7, 383});
  std::uint64_t tests = 0;
  const auto feats = detect_stream_features(p, ev, {}, &tests);
  CHECK(tests == ev.size());
  REQUIRE_FALSE(feats.empty());
  CHECK(std::any_of(feats.begin(), feats.end(),
                    [](const FeaturePoint& f) { return f.x == 8 && f.y == 8 && f.t == 383; }));
  CHECK(detect_stream_features(p, ev) == feats);
}

TEST_CASE("feature filter keeps events near corners only") {
  // A bright square pops up, stays, then disappears: its corners attract
  // features, the background noise does not.
  std::vector<DvsEvent> ev;
  std::mt19937_64 rng(3);
  for (Tick t = 10'000; t < 300'000; t += 10'000) {
    const bool on = (t / 50'000) % 2 == 0;
    for (int y = 10; y < 22; ++y)
      for (int x = 10; x < 22; ++x)
        for (int k = 0; k < 3; ++k) ev.push_back({std::uint16_t(x), std::uint16_t(y), std::int8_t(on ? 1 : -1), t});
    for (int i = 0; i < 20; ++i) {
      ev.push_back({std::uint16_t(rng() % 32), std::uint16_t(rng() % 32), 1, t + 1 + Tick(i)});
    }
  }
  std::stable_sort(ev.begin(), ev.end(), [](const DvsEvent& a, const DvsEvent& b) { return a.t < b.t; });
  DvsFilterParams params;
  params.min_pts = 2;
  const auto res = filter_dvs_with_features(ev, 32, 32, params);
  CHECK(res.feature_count > 0);
  CHECK(res.events.size() < ev.size());
  const auto again = filter_dvs_with_features(ev, 32, 32, params);
  CHECK(again.events == res.events);
  for (const DvsEvent& e : res.events) {
    const auto k = e.t / params.window;
    REQUIRE(k < res.boxes.size());
    CHECK(std::any_of(res.boxes[k].begin(), res.boxes[k].end(),
                      [&](const Box& b) { return b.contains(e.x, e.y); }));
  }
  params.keep_inside = params.keep_outside = 1.0;
  CHECK(filter_dvs_with_features(ev, 32, 32, params).events.size() == ev.size());
  CHECK(filter_dvs_with_features({}, 32, 32, params).events.empty());
}
