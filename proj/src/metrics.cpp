#include "eventforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eventforge/error.hpp"

namespace eventforge {

namespace {

void same_shape(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw Error(ErrorKind::Dimension, "frames differ in shape");
  }
}

constexpr int kWindow = 8;

}  // namespace

double mse(const Frame& reference, const Frame& test) {
  same_shape(reference, test);
  if (reference.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = double(reference.data[i]) - double(test.data[i]);
    sum += d * d;
  }
  return sum / double(reference.data.size());
}

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Frame& reference, const Frame& test, double peak) {
  same_shape(reference, test);
  const int w = reference.width, h = reference.height, ch = reference.channels;
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const int win_w = std::min(kWindow, w), win_h = std::min(kWindow, h);
  if (win_w == 0 || win_h == 0) return 1.0;
  const double n = double(win_w) * win_h;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < ch; ++c) {
    for (int y0 = 0; y0 + win_h <= h; ++y0) {
      for (int x0 = 0; x0 + win_w <= w; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + win_h; ++y) {
          for (int x = x0; x < x0 + win_w; ++x) {
            const double a = reference.at(x, y, c), b = test.at(x, y, c);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
          }
        }
        const double ma = sa / n, mb = sb / n;
        const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / double(count);
}

Quality compare(const Frame& reference, const Frame& test, double peak) {
  Quality q;
  q.mse = mse(reference, test);
  q.psnr = psnr_from_mse(q.mse, peak);
  q.ssim = ssim(reference, test, peak);
  return q;
}

Quality compare_sequences(std::span<const Frame> reference, std::span<const Frame> test,
                          double peak) {
  const std::size_t n = std::min(reference.size(), test.size());
  Quality q;
  if (n == 0) return q;
  double m = 0.0, s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m += mse(reference[i], test[i]);
    s += ssim(reference[i], test[i], peak);
  }
  q.mse = m / double(n);
  q.psnr = psnr_from_mse(q.mse, peak);
  q.ssim = s / double(n);
  return q;
}

const std::array<CrfRow, 10>& crf_table() noexcept {
  // m, m_max, m_velocity, feature_radius. Calibrated on drifting_texture
  // (64x64, 60 frames, seeds 1, 2, 7): each step from 1 to 9 costs 2.7 to
  // 4.9 dB of mean PSNR. Regenerate with the crf_calibrate bench.
  static const std::array<CrfRow, 10> table{{
      {0, 0, 30, 0},
      {1, 3, 30, 16},
      {2, 6, 30, 14},
      {3, 9, 30, 12},
      {5, 15, 30, 10},
      {8, 24, 30, 8},
      {12, 36, 30, 6},
      {18, 54, 30, 4},
      {27, 81, 30, 3},
      {40, 120, 30, 2},
  }};
  return table;
}

const CrfRow& crf_row(int crf) {
  if (crf < 0 || crf > 9) throw Error(ErrorKind::Parameter, "CRF must be in 0..9, got " + std::to_string(crf));
  return crf_table()[std::size_t(crf)];
}

SensitivityParams crf_sensitivity(int crf) {
  const CrfRow& r = crf_row(crf);
  SensitivityParams s;
  s.m = r.m;
  s.m_max = r.m_max;
  s.m_velocity = r.m_velocity;
  s.feature_radius = r.feature_radius;
  return s;
}

}  // namespace eventforge
