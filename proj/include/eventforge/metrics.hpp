#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "eventforge/event.hpp"
#include "eventforge/image.hpp"

namespace eventforge {

inline constexpr double kPsnrCap = 100.0;

struct Quality {
  double mse = 0.0;
  double psnr = kPsnrCap;
  double ssim = 1.0;
};

/// Mean squared error over every sample. Throws Error(Dimension) when the
/// frames differ in shape.
double mse(const Frame& reference, const Frame& test);
/// 10 log10(peak^2 / mse), capped at 100 dB (identical frames).
double psnr_from_mse(double mse, double peak = 255.0);
/// Mean SSIM over all 8x8 windows (stride 1) and channels, with the usual
/// constants (0.01 peak)^2 and (0.03 peak)^2.
double ssim(const Frame& reference, const Frame& test, double peak = 255.0);
Quality compare(const Frame& reference, const Frame& test, double peak = 255.0);

/// Sequence quality: MSE and SSIM averaged over frames, PSNR from the mean
/// MSE. Compares the common prefix.
Quality compare_sequences(std::span<const Frame> reference, std::span<const Frame> test,
                          double peak = 255.0);

/// One row of the quality meta-parameter table.
struct CrfRow {
  double m = 0.0;
  double m_max = 0.0;
  std::uint32_t m_velocity = 1;
  std::uint32_t feature_radius = 0;
};

inline constexpr int kCrfLossless = 0;
inline constexpr int kCrfHigh = 3;
inline constexpr int kCrfMedium = 6;
inline constexpr int kCrfLow = 9;

const std::array<CrfRow, 10>& crf_table() noexcept;
/// Throws Error(Parameter) outside 0..9.
const CrfRow& crf_row(int crf);
SensitivityParams crf_sensitivity(int crf);

}  // namespace eventforge
