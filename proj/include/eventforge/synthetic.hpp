#pragma once

#include <cstdint>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"
#include "eventforge/vision.hpp"

namespace eventforge::synth {

/// Diagonal gradient background with bright and dark squares moving at
/// constant velocity.
std::vector<Frame> moving_squares(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                  std::uint64_t seed = 1);

/// Fixed texture plus fresh Gaussian noise every frame.
std::vector<Frame> static_noise(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                double sigma, std::uint64_t seed = 1);

/// Mostly static textured scene with sensor noise and a few small objects
/// crossing it.
std::vector<Frame> surveillance(std::uint16_t width, std::uint16_t height, std::size_t frames,
                                std::uint64_t seed = 1);

/// Smooth texture drifting with sub-pixel motion under slowly varying
/// illumination and mild noise: the gradual changes a contrast threshold
/// trades away.
std::vector<Frame> drifting_texture(std::uint16_t width, std::uint16_t height,
                                    std::size_t frames, std::uint64_t seed = 1);

/// Colour version of moving_squares.
std::vector<Frame> moving_squares_rgb(std::uint16_t width, std::uint16_t height,
                                      std::size_t frames, std::uint64_t seed = 1);

/// Contrast events from a bounded per-pixel random walk of the latent log
/// level (steps in {-2..+1} around mid-gray, matching the default 0.15
/// threshold and a reset every `reset_interval` ticks). Events of one pixel
/// are at least `min_gap` ticks apart and never on a reset boundary.
std::vector<DvsEvent> dvs_walk(std::uint16_t width, std::uint16_t height, Tick duration,
                               double events_per_pixel_per_s, Tick min_gap = 2000,
                               Tick reset_interval = 500'000, std::uint64_t seed = 1);

/// 16-bit photon-count frames: constant background and a bright bar moving
/// horizontally. Values are multiples of `quantum`.
std::vector<Frame> photon_bar(std::uint16_t width, std::uint16_t height, std::size_t frames,
                              std::uint16_t background, std::uint16_t bar,
                              std::uint16_t quantum = 1, int bar_width = 4, int speed = 1);

/// Random 8-bit canvas with a few flat blocks so corners appear.
GrayImage random_canvas(std::uint16_t width, std::uint16_t height, std::uint64_t seed);

}  // namespace eventforge::synth
