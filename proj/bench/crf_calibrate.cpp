// Mean PSNR and event count per CRF level on the calibration corpus, and
// the PSNR cost of each step.
#include <cstdio>
#include <vector>

#include "eventforge/metrics.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"

using namespace eventforge;

int main() {
  const std::uint64_t seeds[] = {1, 2, 7};
  const std::uint16_t w = 64, h = 64;
  PlaneParams plane;
  plane.width = w;
  plane.height = h;
  std::vector<double> psnr(10, 0.0), events(10, 0.0);
  for (std::uint64_t seed : seeds) {
    const auto frames = synth::drifting_texture(w, h, 60, seed);
    for (int crf = 0; crf < 10; ++crf) {
      const auto ev = transcode_video(plane, frames, crf_sensitivity(crf));
      const auto recon = reconstruct_frames(plane, ev);
      psnr[crf] += compare_sequences(frames, recon).psnr / 3.0;
      events[crf] += double(ev.size()) / 3.0;
    }
  }
  std::printf("crf     m  m_max  psnr_db   events  step_drop_db\n");
  for (int crf = 0; crf < 10; ++crf) {
    const CrfRow& r = crf_row(crf);
    std::printf("%3d %5.0f %6.0f %8.2f %8.0f", crf, r.m, r.m_max, psnr[crf], events[crf]);
    if (crf > 0) std::printf("  %12.2f", psnr[crf - 1] - psnr[crf]);
    std::printf("\n");
  }
  return 0;
}
