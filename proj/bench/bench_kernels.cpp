// Serial reference loops against their OpenMP row-band versions. Outputs
// must match exactly; timings are best of N.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "eventforge/compress.hpp"
#include "eventforge/metrics.hpp"
#include "eventforge/sim.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"
#ifdef EVENTFORGE_HAVE_OPENMP
#include <omp.h>
#endif

using namespace eventforge;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

int threads() {
#ifdef EVENTFORGE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef EVENTFORGE_HAVE_OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

bool report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-22s serial %9.1f ms  parallel %9.1f ms  speedup %5.2fx  %s\n", name, serial,
              parallel, serial / parallel, same ? "identical" : "MISMATCH");
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  const std::uint16_t w = 320, h = 240;
  std::printf("threads: %d\n", threads());
  bool ok = true;

  {
    const auto frames = synth::surveillance(w, h, 60, 1);
    PlaneParams plane;
    plane.width = w;
    plane.height = h;
    const SensitivityParams sens = crf_sensitivity(3);
    std::vector<Event> a, b;
    const double s = best_ms(reps, [&] { a = transcode_video(plane, frames, sens, ExecPolicy::Serial); });
    const double p = best_ms(reps, [&] { b = transcode_video(plane, frames, sens, ExecPolicy::Parallel); });
    ok &= report("framed transcode", s, p, a == b);

    std::vector<std::uint8_t> ca, cb;
    const int n = threads();
    set_threads(1);
    const double cs = best_ms(reps, [&] { ca = compress_stream(plane, a, {0, 9.0}); });
    set_threads(n);
    const double cp = best_ms(reps, [&] { cb = compress_stream(plane, a, {0, 9.0}); });
    ok &= report("adu compression", cs, cp, ca == cb);
  }

  {
    const auto frames = synth::photon_bar(w, h, 60, 300, 6000, 1, 16, 3);
    SimConfig cfg;
    cfg.mode = SimMode::Radial;
    cfg.initial_d = 6;
    SimResult a, b;
    const double s = best_ms(reps, [&] { a = run_sim(frames, cfg, {}, ExecPolicy::Serial); });
    const double p = best_ms(reps, [&] { b = run_sim(frames, cfg, {}, ExecPolicy::Parallel); });
    ok &= report("radial simulation", s, p, a.events == b.events);
  }
  return ok ? 0 : 1;
}
