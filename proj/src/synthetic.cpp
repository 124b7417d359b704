#include "eventforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace eventforge::synth {

namespace {

struct Square {
  double x, y, vx, vy;
  int size;
  std::uint16_t value;
};

std::vector<Square> make_squares(std::uint16_t width, std::uint16_t height, std::mt19937_64& rng,
                                 int count) {
  std::uniform_real_distribution<double> px(0, width);
  std::uniform_real_distribution<double> py(0, height);
  std::uniform_real_distribution<double> v(-1.5, 1.5);
  std::uniform_int_distribution<int> size(std::max(3, width / 10), std::max(4, width / 5));
  std::vector<Square> sq;
  for (int i = 0; i < count; ++i) {
    sq.push_back({px(rng), py(rng), v(rng), v(rng), size(rng),
                  static_cast<std::uint16_t>(i % 2 == 0 ? 235 : 20)});
  }
  return sq;
}

double bounce(double p, double v, std::size_t t, double limit) {
  // Position of a point bouncing between 0 and limit.
  const double span = 2 * limit;
  double q = std::fmod(p + v * double(t), span);
  if (q < 0) q += span;
  return q <= limit ? q : span - q;
}

std::vector<std::uint8_t> texture(std::uint16_t width, std::uint16_t height, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> base(40, 200);
  std::vector<std::uint8_t> tex(std::size_t(width) * height);
  // Blocky texture: 8x8 tiles of random level plus a gentle gradient.
  const int tiles_x = (width + 7) / 8;
  const int tiles_y = (height + 7) / 8;
  std::vector<int> tile(std::size_t(tiles_x) * tiles_y);
  for (int& t : tile) t = base(rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int v = tile[std::size_t(y / 8) * tiles_x + x / 8] + (x + y) / 8;
      tex[std::size_t(y) * width + x] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  return tex;
}

}  // namespace

std::vector<Frame> moving_squares(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<Square> squares = make_squares(width, height, rng, 3);
  std::vector<Frame> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(width, height, 1);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        f.at(x, y) = static_cast<std::uint16_t>(30 + (150 * (x + y)) / std::max(1, width + height - 2));
      }
    }
    for (const Square& s : squares) {
      const int x0 = static_cast<int>(bounce(s.x, s.vx, t, width - s.size));
      const int y0 = static_cast<int>(bounce(s.y, s.vy, t, height - s.size));
      for (int y = y0; y < std::min<int>(height, y0 + s.size); ++y) {
        for (int x = x0; x < std::min<int>(width, x0 + s.size); ++x) f.at(x, y) = s.value;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Frame> moving_squares_rgb(std::uint16_t width, std::uint16_t height,
                                      std::size_t frames, std::uint64_t seed) {
  const std::vector<Frame> gray = moving_squares(width, height, frames, seed);
  std::vector<Frame> out;
  for (const Frame& g : gray) {
    Frame f(width, height, 3);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int v = g.at(x, y);
        f.at(x, y, 0) = static_cast<std::uint16_t>(v);
        f.at(x, y, 1) = static_cast<std::uint16_t>((v + 60) % 256);
        f.at(x, y, 2) = static_cast<std::uint16_t>(255 - v);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Frame> static_noise(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::uint8_t> tex = texture(width, height, rng);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<Frame> out;
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(width, height, 1);
    for (std::size_t i = 0; i < tex.size(); ++i) {
      f.data[i] = static_cast<std::uint16_t>(std::clamp(std::lround(tex[i] + noise(rng)), 0L, 255L));
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Frame> drifting_texture(std::uint16_t width, std::uint16_t height,
                                    std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    waves.push_back({(u(rng) - 0.5) * 0.6, (u(rng) - 0.5) * 0.6, u(rng) * 6.283, 12 + 18 * u(rng)});
  }
  const double vx = 0.15 + 0.2 * u(rng), vy = 0.1 * u(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Frame> out;
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(width, height, 1);
    const double gain = 1.0 + 0.15 * std::sin(double(t) * 0.05);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = 120.0;
        for (const Wave& w : waves) {
          v += w.amp * std::sin(w.kx * (x - vx * double(t)) + w.ky * (y - vy * double(t)) + w.phase);
        }
        f.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(v * gain + noise(rng)), 0L, 255L));
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Frame> surveillance(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::uint8_t> tex = texture(width, height, rng);
  std::normal_distribution<double> noise(0.0, 1.5);
  std::uniform_real_distribution<double> start(0, 1);
  struct Walker {
    double y, speed, phase;
    int w, h;
    std::uint16_t value;
  };
  std::vector<Walker> walkers;
  for (int i = 0; i < 2; ++i) {
    walkers.push_back({start(rng) * (height - 10), 0.5 + start(rng), start(rng) * width,
                       std::max(3, width / 16), std::max(5, height / 8),
                       static_cast<std::uint16_t>(i ? 225 : 25)});
  }
  std::vector<Frame> out;
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(width, height, 1);
    for (std::size_t i = 0; i < tex.size(); ++i) {
      f.data[i] = static_cast<std::uint16_t>(std::clamp(std::lround(tex[i] + noise(rng)), 0L, 255L));
    }
    for (const Walker& w : walkers) {
      const int x0 = static_cast<int>(std::fmod(w.phase + w.speed * double(t), double(width + w.w))) - w.w;
      const int y0 = static_cast<int>(w.y);
      for (int y = std::max(0, y0); y < std::min<int>(height, y0 + w.h); ++y) {
        for (int x = std::max(0, x0); x < std::min<int>(width, x0 + w.w); ++x) f.at(x, y) = w.value;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<DvsEvent> dvs_walk(std::uint16_t width, std::uint16_t height, Tick duration,
                               double events_per_pixel_per_s, Tick min_gap, Tick reset_interval,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double mean_gap = 1e6 / events_per_pixel_per_s;
  std::exponential_distribution<double> gap(1.0 / std::max(1.0, mean_gap - min_gap));
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<DvsEvent> out;
  for (std::uint16_t y = 0; y < height; ++y) {
    for (std::uint16_t x = 0; x < width; ++x) {
      int level = 0;
      double t = min_gap + gap(rng);
      Tick epoch = 0;
      while (t < duration) {
        const auto tick = static_cast<Tick>(t);
        if (reset_interval) {
          const Tick e = tick / reset_interval;
          if (e != epoch) {
            epoch = e;
            level = 0;
          }
          const Tick into = tick % reset_interval;
          if (into < min_gap || reset_interval - into < min_gap) {
            t += min_gap + gap(rng);
            continue;
          }
        }
        int p = coin(rng) ? 1 : -1;
        if (level + p > 1) p = -1;
        if (level + p < -2) p = 1;
        level += p;
        out.push_back({x, y, static_cast<std::int8_t>(p), tick});
        t += min_gap + gap(rng);
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DvsEvent& a, const DvsEvent& b) { return a.t < b.t; });
  return out;
}

std::vector<Frame> photon_bar(std::uint16_t width, std::uint16_t height, std::size_t frames,
                              std::uint16_t background, std::uint16_t bar, std::uint16_t quantum,
                              int bar_width, int speed) {
  auto snap = [quantum](std::uint16_t v) {
    return static_cast<std::uint16_t>((v / quantum) * quantum);
  };
  std::vector<Frame> out;
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(width, height, 1, snap(background));
    const int x0 = static_cast<int>((t * speed) % (width + bar_width)) - bar_width;
    for (int y = 0; y < height; ++y) {
      for (int x = std::max(0, x0); x < std::min<int>(width, x0 + bar_width); ++x) {
        f.at(x, y) = snap(bar);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

GrayImage random_canvas(std::uint16_t width, std::uint16_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> v(0, 255);
  std::uniform_int_distribution<int> px(0, width - 1);
  std::uniform_int_distribution<int> py(0, height - 1);
  std::uniform_int_distribution<int> sz(3, 12);
  GrayImage img(width, height);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(v(rng));
  for (int b = 0; b < 6; ++b) {
    const int x0 = px(rng), y0 = py(rng), s = sz(rng);
    const auto level = static_cast<std::uint8_t>(v(rng));
    for (int y = y0; y < std::min<int>(height, y0 + s); ++y) {
      for (int x = x0; x < std::min<int>(width, x0 + s); ++x) img.at(x, y) = level;
    }
  }
  return img;
}

}  // namespace eventforge::synth
