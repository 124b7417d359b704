#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "eventforge/error.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"
#include "eventforge/vision.hpp"
#include "oracles.hpp"

using namespace eventforge;

namespace {

using oracle::brute_corner;

std::set<std::pair<int, int>> as_set(const std::vector<FeaturePoint>& pts) {
  std::set<std::pair<int, int>> s;
  for (const auto& f : pts) s.insert({f.x, f.y});
  return s;
}

std::set<std::pair<int, int>> brute_set(const GrayImage& img, const FastParams& p) {
  std::set<std::pair<int, int>> s;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (brute_corner(img, x, y, p)) s.insert({x, y});
    }
  }
  return s;
}

// Quadratic DBSCAN in the same discovery order.
std::vector<int> brute_dbscan(const std::vector<Point2>& pts, double eps, std::size_t min_pts) {
  const std::size_t n = pts.size();
  auto near = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) <= eps) out.push_back(j);
    }
    return out;
  };
  std::vector<int> label(n, kNoise);
  std::vector<bool> seen(n, false);
  int id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    seen[i] = true;
    auto nb = near(i);
    if (nb.size() < min_pts) continue;
    label[i] = id;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const std::size_t j = nb[k];
      if (label[j] == kNoise) label[j] = id;
      if (seen[j]) continue;
      seen[j] = true;
      auto more = near(j);
      if (more.size() >= min_pts) nb.insert(nb.end(), more.begin(), more.end());
    }
    ++id;
  }
  return label;
}

}  // namespace

TEST_CASE("constructed corners") {
  const FastParams p;
  GrayImage dot(9, 9, 20);
  dot.at(4, 4) = 200;
  CHECK(fast_test_pixel(dot, 4, 4, p));
  CHECK(as_set(fast_detect_dense(dot, p)) == std::set<std::pair<int, int>>{{4, 4}});

  // Corner of a bright square: 11 of 16 circle pixels are darker.
  GrayImage sq(20, 20, 10);
  for (int y = 8; y < 20; ++y)
    for (int x = 8; x < 20; ++x) sq.at(x, y) = 220;
  CHECK(fast_test_pixel(sq, 8, 8, p));
  // A straight edge leaves only 7 darker pixels.
  CHECK_FALSE(fast_test_pixel(sq, 8, 14, p));
  CHECK_FALSE(fast_test_pixel(sq, 14, 14, p));
  // Never within 3 pixels of the border.
  GrayImage edge(9, 9, 20);
  edge.at(2, 4) = 200;
  CHECK_FALSE(fast_test_pixel(edge, 2, 4, p));
  CHECK(fast_detect_dense(edge, p).empty());

  // An arc that wraps past index 0.
  GrayImage wrap(9, 9, 100);
  const int dx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
  const int dy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
  for (int k = 12; k < 12 + 9; ++k) wrap.at(4 + dx[k % 16], 4 + dy[k % 16]) = 10;
  CHECK(fast_test_pixel(wrap, 4, 4, p));
  CHECK(brute_corner(wrap, 4, 4, p));
  wrap.at(4 + dx[0], 4 + dy[0]) = 100;
  CHECK_FALSE(fast_test_pixel(wrap, 4, 4, p));
  CHECK(as_set(fast_detect_dense(wrap, p)) == brute_set(wrap, p));
}

TEST_CASE("async, dense and brute force agree on random canvases") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 50; ++k) {
    FastParams p;
    p.threshold = 5 + k % 30;
    p.arc = 9 + k % 4;
    const GrayImage img = synth::random_canvas(48, 40, 100 + k);
    const auto dense = as_set(fast_detect_dense(img, p));
    CHECK(dense == brute_set(img, p));

    // A full sweep of the canvas through the async detector.
    AsyncFast async(img.width, img.height, p);
    async.canvas() = img;
    std::set<std::pair<int, int>> swept;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (async.update(std::uint16_t(x), std::uint16_t(y), img.at(x, y), 0)) swept.insert({x, y});
      }
    }
    CHECK(swept == dense);

    // Random updates: each verdict matches the dense detector on the
    // current canvas at that pixel.
    std::uniform_int_distribution<int> ux(0, img.width - 1), uy(0, img.height - 1), uv(0, 255);
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
      const int x = ux(rng), y = uy(rng);
      const bool hit = async.update(std::uint16_t(x), std::uint16_t(y), std::uint8_t(uv(rng)),
                                    Tick(i)).has_value();
      const auto now = as_set(fast_detect_dense(async.canvas(), p));
      if (hit != now.contains({x, y})) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("async detection tests far fewer pixels on quiet streams") {
  const std::uint16_t w = 64, h = 64;
  const std::size_t n = 120;
  const auto video = synth::surveillance(w, h, n, 3);
  PlaneParams plane;
  plane.width = w;
  plane.height = h;
  SensitivityParams sens;
  sens.m = 10;
  sens.m_max = 10;
  FramedTranscoder tx(plane, sens, ExecPolicy::Serial);
  std::vector<Event> events;
  for (const Frame& f : video) {
    auto e = tx.push_frame(f);
    events.insert(events.end(), e.begin(), e.end());
  }
  // Below one event per 40 pixels per frame.
  const double per_pixel_frame = double(events.size()) / (double(w) * h * n);
  CHECK(per_pixel_frame < 1.0 / 40.0);

  InstantaneousSampler sampler(plane);
  AsyncFast async(w, h);
  std::uint64_t dense_tests = 0;
  for (const Event& e : events) {
    if (sampler.push(e)) fast_detect_dense(to_gray(sampler.image()), {}, &dense_tests);
    async.update(e.x, e.y, to_gray(sampler.image()).at(e.x, e.y), e.t);
  }
  CHECK(async.pixel_tests() == events.size());
  CHECK(dense_tests >= 10 * async.pixel_tests());
}

TEST_CASE("dbscan matches the quadratic reference") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> pts;
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int c = 0; c < 4; ++c) {
      const double cx = u(rng), cy = u(rng);
      for (int i = 0; i < 40; ++i) pts.push_back({cx + g(rng), cy + g(rng)});
    }
    for (int i = 0; i < 60; ++i) pts.push_back({u(rng), u(rng)});
    std::shuffle(pts.begin(), pts.end(), rng);
    const double eps = 1.5 + trial % 4;
    const std::size_t min_pts = 3 + trial % 5;
    CHECK(dbscan(pts, eps, min_pts) == brute_dbscan(pts, eps, min_pts));
  }
  CHECK(dbscan(std::vector<Point2>{}, 1.0, 3).empty());
  CHECK_THROWS_AS(dbscan(std::vector<Point2>{{0, 0}}, 0.0, 3), Error);
}

TEST_CASE("cluster boxes enclose their members") {
  std::vector<Point2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({10.0 + i * 0.5, 20.0 + (i % 3)});
  for (int i = 0; i < 10; ++i) pts.push_back({60.0 + (i % 2), 5.0 + i * 0.5});
  pts.push_back({90.0, 90.0});
  const auto boxes = cluster_boxes(pts, 1.5, 3);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0] == Box{10, 20, 14, 22});
  CHECK(boxes[1] == Box{60, 5, 61, 9});
}

TEST_CASE("box filter keeps the requested fractions") {
  std::vector<DvsEvent> ev;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40'000; ++i) {
    ev.push_back({std::uint16_t(rng() % 100), std::uint16_t(rng() % 100),
                  std::int8_t(i % 2 ? 1 : -1), Tick(i)});
  }
  const std::vector<Box> boxes{{0, 0, 49, 99}};
  const auto kept = filter_dvs_by_boxes(ev, boxes, 0.9, 0.2, 42);
  std::size_t in_all = 0, in_kept = 0;
  for (const auto& e : ev) in_all += boxes[0].contains(e.x, e.y);
  for (const auto& e : kept) in_kept += boxes[0].contains(e.x, e.y);
  const std::size_t out_all = ev.size() - in_all, out_kept = kept.size() - in_kept;
  CHECK(double(in_kept) / double(in_all) == doctest::Approx(0.9).epsilon(0.02));
  CHECK(double(out_kept) / double(out_all) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(filter_dvs_by_boxes(ev, boxes, 0.9, 0.2, 42) == kept);
  CHECK(filter_dvs_by_boxes(ev, boxes, 0.9, 0.2, 43) != kept);
  CHECK(std::is_sorted(kept.begin(), kept.end(),
                       [](const DvsEvent& a, const DvsEvent& b) { return a.t < b.t; }));
  CHECK(filter_dvs_by_boxes(ev, boxes, 1.0, 1.0, 1).size() == ev.size());
  CHECK_THROWS_AS(filter_dvs_by_boxes(ev, boxes, 1.5, 0.0, 1), Error);
}

TEST_CASE("closing fills holes and keeps the border") {
  GrayImage m(10, 10);
  for (int y = 2; y < 8; ++y)
    for (int x = 2; x < 8; ++x) m.at(x, y) = 255;
  m.at(4, 4) = 0;
  const GrayImage c = close_mask(m, 1);
  CHECK(c.at(4, 4) == 255);
  CHECK(c.at(0, 0) == 0);
  CHECK(c.at(2, 2) == 255);
  CHECK(close_mask(m, 0).pixels == m.pixels);

  GrayImage full(6, 6, 255);
  CHECK(close_mask(full, 2).pixels == full.pixels);
}

TEST_CASE("segmentation marks the moving object") {
  // A 4x4 block fires every 10 ticks, one stray pixel fires once.
  std::vector<Event> ev;
  for (Tick t = 0; t < 200; t += 10) {
    const int ox = int(t / 100) * 10;
    for (int y = 5; y < 9; ++y)
      for (int x = 5 + ox; x < 9 + ox; ++x) ev.push_back({std::uint16_t(x), std::uint16_t(y), 0, 7, t});
  }
  ev.push_back({30, 30, 0, 7, 50});
  const auto masks = segment_motion(ev, 32, 32, 100, 3, 0);
  REQUIRE(masks.size() == 2);
  CHECK(masks[0].start == 0);
  CHECK(masks[1].start == 100);
  CHECK(masks[0].mask.at(5, 5) == 255);
  CHECK(masks[0].mask.at(15, 5) == 0);
  CHECK(masks[1].mask.at(15, 5) == 255);
  CHECK(masks[0].mask.at(30, 30) == 0);
  CHECK(std::count(masks[0].mask.pixels.begin(), masks[0].mask.pixels.end(), 255) == 16);
  CHECK_THROWS_AS(segment_motion(ev, 32, 32, 0, 3), Error);
  CHECK(segment_motion({}, 32, 32, 100, 3).empty());
}
