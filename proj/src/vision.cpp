#include "eventforge/vision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "eventforge/error.hpp"

namespace eventforge {

namespace {

constexpr std::array<std::array<int, 2>, 16> kCircle{{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};

bool inside_margin(const GrayImage& img, int x, int y) {
  return x >= 3 && y >= 3 && x + 3 < img.width && y + 3 < img.height;
}

}  // namespace

bool fast_test_pixel(const GrayImage& img, int x, int y, const FastParams& params) {
  if (!inside_margin(img, x, y)) return false;
  const int c = img.at(x, y);
  const int hi = c + params.threshold;
  const int lo = c - params.threshold;
  int bright = 0;
  int dark = 0;
  // Walk the circle twice so arcs that wrap around index 0 are counted.
  for (int i = 0; i < 32; ++i) {
    const auto& o = kCircle[i & 15];
    const int p = img.at(x + o[0], y + o[1]);
    bright = p > hi ? bright + 1 : 0;
    dark = p < lo ? dark + 1 : 0;
    if (bright >= params.arc || dark >= params.arc) return true;
  }
  return false;
}

std::vector<FeaturePoint> fast_detect_dense(const GrayImage& img, const FastParams& params,
                                            std::uint64_t* pixel_tests) {
  std::vector<FeaturePoint> out;
  const std::uint16_t need = params.arc >= 16 ? 0xFFFF
                                              : static_cast<std::uint16_t>((1u << params.arc) - 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (pixel_tests) ++*pixel_tests;
      if (!inside_margin(img, x, y)) continue;
      const int c = img.at(x, y);
      std::uint16_t bright = 0;
      std::uint16_t dark = 0;
      for (int i = 0; i < 16; ++i) {
        const int p = img.at(x + kCircle[i][0], y + kCircle[i][1]);
        if (p > c + params.threshold) bright |= std::uint16_t(1u << i);
        if (p < c - params.threshold) dark |= std::uint16_t(1u << i);
      }
      bool hit = false;
      if (params.arc <= 16) {
        for (int r = 0; r < 16 && !hit; ++r) {
          const std::uint16_t m =
              static_cast<std::uint16_t>((need << r) | (need >> (16 - r)));
          hit = (bright & m) == m || (dark & m) == m;
        }
      }
      if (hit) out.push_back({std::uint16_t(x), std::uint16_t(y), 0});
    }
  }
  return out;
}

AsyncFast::AsyncFast(std::uint16_t width, std::uint16_t height, FastParams params)
    : canvas_(width, height), params_(params) {}

std::optional<FeaturePoint> AsyncFast::update(std::uint16_t x, std::uint16_t y,
                                              std::uint8_t value, Tick t) {
  canvas_.at(x, y) = value;
  ++tests_;
  if (fast_test_pixel(canvas_, x, y, params_)) return FeaturePoint{x, y, t};
  return std::nullopt;
}

std::vector<int> dbscan(std::span<const Point2> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw Error(ErrorKind::Parameter, "dbscan eps must be positive");
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  // Uniform grid with cell size eps: neighbours lie in the 3x3 cell block.
  auto cell_of = [eps](const Point2& p) {
    return std::pair<long long, long long>{static_cast<long long>(std::floor(p.x / eps)),
                                           static_cast<long long>(std::floor(p.y / eps))};
  };
  auto key = [](long long cx, long long cy) {
    return (static_cast<unsigned long long>(cx) << 32) ^ static_cast<unsigned long long>(cy & 0xFFFFFFFF);
  };
  std::unordered_map<unsigned long long, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < n; ++i) {
    auto [cx, cy] = cell_of(points[i]);
    grid[key(cx, cy)].push_back(i);
  }
  const double eps2 = eps * eps;
  auto neighbours = [&](std::size_t i, std::vector<std::size_t>& out) {
    out.clear();
    auto [cx, cy] = cell_of(points[i]);
    for (long long dy = -1; dy <= 1; ++dy) {
      for (long long dx = -1; dx <= 1; ++dx) {
        auto it = grid.find(key(cx + dx, cy + dy));
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          const double ddx = points[i].x - points[j].x;
          const double ddy = points[i].y - points[j].y;
          if (ddx * ddx + ddy * ddy <= eps2) out.push_back(j);
        }
      }
    }
  };

  std::vector<bool> visited(n, false);
  std::vector<std::size_t> nb;
  std::vector<std::size_t> nb2;
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = true;
    neighbours(i, nb);
    if (nb.size() < min_pts) continue;
    labels[i] = cluster;
    std::vector<std::size_t> frontier(nb.begin(), nb.end());
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const std::size_t j = frontier[k];
      if (labels[j] == kNoise) labels[j] = cluster;
      if (visited[j]) continue;
      visited[j] = true;
      neighbours(j, nb2);
      if (nb2.size() >= min_pts) frontier.insert(frontier.end(), nb2.begin(), nb2.end());
    }
    ++cluster;
  }
  return labels;
}

std::vector<Box> cluster_boxes(std::span<const Point2> points, double eps, std::size_t min_pts) {
  const std::vector<int> labels = dbscan(points, eps, min_pts);
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] == kNoise) continue;
    const auto id = static_cast<std::size_t>(labels[i]);
    const int x = static_cast<int>(std::floor(points[i].x));
    const int y = static_cast<int>(std::floor(points[i].y));
    if (id >= boxes.size()) {
      boxes.resize(id + 1, Box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                               std::numeric_limits<int>::min(), std::numeric_limits<int>::min()});
    }
    Box& b = boxes[id];
    b.x0 = std::min(b.x0, x);
    b.y0 = std::min(b.y0, y);
    b.x1 = std::max(b.x1, x);
    b.y1 = std::max(b.y1, y);
  }
  return boxes;
}

std::vector<DvsEvent> filter_dvs_by_boxes(std::span<const DvsEvent> events,
                                          std::span<const Box> boxes, double keep_inside,
                                          double keep_outside, std::uint64_t seed) {
  if (keep_inside < 0.0 || keep_inside > 1.0 || keep_outside < 0.0 || keep_outside > 1.0) {
    throw Error(ErrorKind::Parameter, "keep fractions must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DvsEvent> out;
  for (const DvsEvent& e : events) {
    const bool inside = std::any_of(boxes.begin(), boxes.end(),
                                    [&](const Box& b) { return b.contains(e.x, e.y); });
    const double keep = inside ? keep_inside : keep_outside;
    // Always draw so the sequence does not depend on the box layout.
    const double r = u(rng);
    if (r < keep) out.push_back(e);
  }
  return out;
}

GrayImage close_mask(const GrayImage& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width;
  const int h = mask.height;
  GrayImage dilated(mask.width, mask.height);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false;
      for (int dy = -radius; dy <= radius && !any; ++dy) {
        for (int dx = -radius; dx <= radius && !any; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < w && yy < h && mask.at(xx, yy)) any = true;
        }
      }
      dilated.at(x, y) = any ? 255 : 0;
    }
  }
  GrayImage closed(mask.width, mask.height);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (int dy = -radius; dy <= radius && all; ++dy) {
        for (int dx = -radius; dx <= radius && all; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < w && yy < h && !dilated.at(xx, yy)) all = false;
        }
      }
      closed.at(x, y) = all ? 255 : 0;
    }
  }
  return closed;
}

std::vector<MotionMask> segment_motion(std::span<const Event> events, std::uint16_t width,
                                       std::uint16_t height, Tick window,
                                       std::uint32_t fire_threshold, int close_radius) {
  if (window == 0) throw Error(ErrorKind::Parameter, "segmentation window must be non-zero");
  Tick last = 0;
  for (const Event& e : events) last = std::max(last, e.t);
  const std::size_t windows = events.empty() ? 0 : std::size_t(last / window) + 1;
  std::vector<std::vector<std::uint32_t>> counts(
      windows, std::vector<std::uint32_t>(std::size_t(width) * height, 0));
  for (const Event& e : events) {
    if (e.x >= width || e.y >= height) continue;
    ++counts[e.t / window][std::size_t(e.y) * width + e.x];
  }
  std::vector<MotionMask> out;
  out.reserve(windows);
  for (std::size_t k = 0; k < windows; ++k) {
    GrayImage mask(width, height);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
      mask.pixels[i] = counts[k][i] > fire_threshold ? 255 : 0;
    }
    out.push_back({Tick(k * window), close_mask(mask, close_radius)});
  }
  return out;
}

}  // namespace eventforge
