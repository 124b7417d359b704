#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eventforge/apps.hpp"
#include "eventforge/compress.hpp"
#include "eventforge/dvs_io.hpp"
#include "eventforge/error.hpp"
#include "eventforge/image.hpp"
#include "eventforge/metrics.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/sim.hpp"
#include "eventforge/stream_io.hpp"
#include "eventforge/transcode.hpp"
#include "eventforge/vision.hpp"
#ifdef EVENTFORGE_HAVE_SERVICE
#include "service.hpp"
#endif

namespace fs = std::filesystem;
using namespace eventforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParameter = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter:
    case ErrorKind::Dimension:
      return kExitParameter;
    case ErrorKind::Io:
      return kExitIo;
    default:
      return kExitFormat;
  }
}

bool has_magic(const std::vector<std::uint8_t>& bytes, const char* magic) {
  return bytes.size() >= 4 && std::equal(magic, magic + 4, bytes.begin());
}

DecodedStream load_stream(const fs::path& path) {
  const auto bytes = read_file(path);
  if (has_magic(bytes, "ADRC")) {
    auto res = decompress_stream(bytes);
    if (!res.warning.empty()) std::cerr << "warning: " << res.warning << "\n";
    return std::move(res.stream);
  }
  return read_stream(bytes);
}

void save_stream(const fs::path& path, const PlaneParams& plane, std::span<const Event> events,
                 const CompressParams& compress) {
  if (path.extension() == ".adderc") {
    write_file(path, compress_stream(plane, events, compress));
  } else {
    write_file(path, write_stream(plane, events));
  }
}

bool is_dvs_path(const fs::path& p) {
  const auto ext = p.extension();
  return ext == ".csv" || ext == ".bin" || ext == ".dvs";
}

bool is_adder_path(const fs::path& p) {
  const auto ext = p.extension();
  return ext == ".adder" || ext == ".adderc";
}

// Frame geometry and source options shared by transcode, simulate and serve.
struct InputOptions {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  int channels = 1;
  int bits = 8;
  double fps = 0.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--width", width, "Raw input width");
    cmd->add_option("--height", height, "Raw input height");
    cmd->add_option("--channels", channels, "Raw input channels")->check(CLI::IsMember({1, 3}));
    cmd->add_option("--bits", bits, "Raw input sample depth")->check(CLI::IsMember({8, 16}));
    cmd->add_option("--fps", fps, "Input frame rate (default: from input, else 30)");
  }

  RawGeometry geometry() const {
    return {width, height, std::uint8_t(channels), bits, fps};
  }
};

std::string sequence_name(const fs::path& dir, const char* stem, std::size_t k) {
  std::ostringstream os;
  os << stem << '_' << std::setw(5) << std::setfill('0') << k << ".png";
  return (dir / os.str()).string();
}

void write_sequence(const fs::path& out, const std::vector<GrayImage>& frames, double fps) {
  if (out.extension() == ".y4m") {
    write_y4m(out, frames, fps);
    return;
  }
  fs::create_directories(out);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    write_png(sequence_name(out, "frame", k), frames[k]);
  }
}

// ---------------------------------------------------------------- transcode

struct TranscodeOptions {
  fs::path input, output;
  InputOptions in;
  std::string source = "auto";
  int crf = kCrfHigh;
  std::optional<double> m, m_max;
  std::optional<std::uint32_t> m_velocity;
  Tick ref_interval = 255;
  std::optional<Tick> dt_max;
  std::string mode = "collapse";
  bool features = false;
  bool serial = false;
  bool metrics = false;
  double theta = 0.15;
  Tick adu_interval = 0;
  std::optional<double> compress_m_max;
};

int run_transcode(const TranscodeOptions& o) {
  SensitivityParams sens = crf_sensitivity(o.crf);
  if (o.m) sens.m = *o.m;
  if (o.m_max) sens.m_max = *o.m_max;
  if (o.m_velocity) sens.m_velocity = *o.m_velocity;
  sens.m_max = std::max(sens.m_max, sens.m);
  sens.validate();
  const CompressParams compress{o.adu_interval,
                                o.compress_m_max ? *o.compress_m_max : crf_row(o.crf).m_max};
  const ExecPolicy policy = o.serial ? ExecPolicy::Serial : ExecPolicy::Parallel;

  std::string source = o.source;
  if (source == "auto") {
    source = is_dvs_path(o.input) ? "dvs" : is_adder_path(o.input) ? "adder" : "frames";
  }

  PlaneParams plane;
  std::vector<Event> events;
  std::vector<Frame> frames;
  double fps = 0.0;
  if (source == "frames") {
    frames = load_frames(o.input, o.in.geometry(), &fps);
    if (o.in.fps > 0.0) fps = o.in.fps;
    if (fps <= 0.0) fps = 30.0;
    const Frame& first = frames.front();
    plane.width = first.width;
    plane.height = first.height;
    plane.channels = first.channels;
    plane.ref_interval = o.ref_interval;
    plane.ticks_per_second = Tick(std::lround(double(o.ref_interval) * fps));
    plane.dt_max = o.dt_max ? *o.dt_max : o.ref_interval * 120;
    plane.mode = o.mode == "list" ? PixelMode::List : PixelMode::Collapse;
    plane.validate();
    const bool eight_bit = std::all_of(frames.begin(), frames.end(), [](const Frame& f) {
      return std::all_of(f.data.begin(), f.data.end(), [](std::uint16_t v) { return v < 256; });
    });
    if (eight_bit && plane.ref_interval < 255) {
      std::cerr << "warning: reference interval " << plane.ref_interval
                << " is below 255 ticks for 8-bit input; bright pixels lose precision\n";
    }
    FeatureFeedback ff;
    if (o.features) {
      ff.detect = ff.feedback = true;
      ff.radius = std::max<std::uint32_t>(sens.feature_radius, 1);
      ff.target_m = 0.0;
    }
    events = transcode_video(plane, frames, sens, policy, ff);
  } else if (source == "dvs") {
    const auto dvs = read_dvs(o.input);
    std::uint16_t w = o.in.width, h = o.in.height;
    if (w == 0 || h == 0) {
      for (const DvsEvent& e : dvs) {
        w = std::max<std::uint16_t>(w, std::uint16_t(e.x + 1));
        h = std::max<std::uint16_t>(h, std::uint16_t(e.y + 1));
      }
    }
    plane = dvs_plane(w, h, o.dt_max ? *o.dt_max : 1'000'000);
    DvsParams dp;
    dp.theta = o.theta;
    DvsTranscoder tx(plane, sens, dp);
    events = tx.push(dvs);
    auto tail = tx.finish();
    events.insert(events.end(), tail.begin(), tail.end());
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
  } else if (source == "adder") {
    DecodedStream in = load_stream(o.input);
    PlaneParams out = in.plane;
    if (o.dt_max) out.dt_max = *o.dt_max;
    out.source = SourceKind::Adder;
    events = reencode(in.plane, in.events, out, sens);
    plane = out;
  } else {
    throw Error(ErrorKind::Parameter, "unknown source kind " + source);
  }

  save_stream(o.output, plane, events, compress);
  std::cout << "events: " << events.size() << "\n"
            << "bytes:  " << fs::file_size(o.output) << "\n";

  if (o.metrics && !frames.empty()) {
    std::vector<Event> decoded = events;
    if (o.output.extension() == ".adderc") decoded = load_stream(o.output).events;
    const auto recon = reconstruct_frames(plane, decoded);
    const Quality q = compare_sequences(frames, recon);
    std::cout << std::fixed << std::setprecision(3) << "mse:    " << q.mse << "\n"
              << "psnr:   " << q.psnr << "\n"
              << "ssim:   " << q.ssim << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- export

struct ExportOptions {
  fs::path input, output;
  std::string mode = "accurate";
  double fps = 0.0;
  std::size_t buffer_limit = 0;
  double theta = 0.15;
};

int run_export(const ExportOptions& o) {
  const DecodedStream s = load_stream(o.input);
  const PlaneParams& plane = s.plane;
  const double stream_fps = double(plane.ticks_per_second) / double(plane.ref_interval);
  const double fps = o.fps > 0.0 ? o.fps : stream_fps;
  const Tick frame_ticks =
      std::max<Tick>(1, Tick(std::lround(double(plane.ticks_per_second) / fps)));

  if (o.mode == "dvs") {
    write_dvs(o.output, export_dvs(plane, s.events, o.theta));
    return kExitOk;
  }
  std::vector<GrayImage> out;
  if (o.mode == "accurate") {
    ReconstructParams rp;
    rp.frame_ticks = frame_ticks;
    rp.buffer_limit = o.buffer_limit;
    for (const Frame& f : reconstruct_frames(plane, s.events, rp)) out.push_back(to_gray(f));
  } else if (o.mode == "fast" || o.mode == "d" || o.mode == "dt") {
    // Snapshot the view at every display boundary the stream crosses.
    InstantaneousSampler sampler(plane, 255.0, frame_ticks);
    EventImageTracker tracker(plane);
    std::uint64_t interval = 0;
    auto snapshot = [&] {
      if (o.mode == "fast") return to_gray(sampler.image());
      return o.mode == "d" ? tracker.render_d() : tracker.render_dt();
    };
    for (const Event& e : s.events) {
      while (e.t / frame_ticks > interval) {
        out.push_back(snapshot());
        ++interval;
      }
      sampler.push(e);
      tracker.push(e);
    }
    if (!s.events.empty()) out.push_back(snapshot());
  } else {
    throw Error(ErrorKind::Parameter, "unknown export mode " + o.mode);
  }
  write_sequence(o.output, out, fps);
  std::cout << "frames: " << out.size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- info

int run_info(const fs::path& input, bool deep) {
  const auto bytes = read_file(input);
  StreamInfo info = stream_info(bytes, deep);
  std::cout << format_info(info);
  if (info.compressed) {
    const CompressedReader reader(bytes);
    std::cout << "adu interval:      " << reader.adu_interval() << " ticks\n"
              << "adus:              " << reader.adu_count() << "\n";
    if (deep) {
      const auto res = decompress_stream(bytes);
      const StreamInfo raw = stream_info(write_stream(res.stream.plane, res.stream.events), true);
      std::cout << "events:            " << raw.event_count << "\n"
                << std::fixed << std::setprecision(2)
                << "duration:          " << raw.duration_s << " s\n"
                << "event rate:        " << raw.event_rate << " events/s\n"
                << "raw size:          " << raw.bytes << " bytes\n"
                << "ratio:             " << std::setprecision(4)
                << double(bytes.size()) / double(std::max<std::size_t>(raw.bytes, 1)) << "\n";
    }
  }
  if (!info.error.empty()) return kExitFormat;
  return kExitOk;
}

// ---------------------------------------------------------------- apps

int run_detect(const fs::path& input, const fs::path& output, const FastParams& fast) {
  const DecodedStream s = load_stream(input);
  std::uint64_t tests = 0;
  const auto feats = detect_stream_features(s.plane, s.events, fast, &tests);
  std::ofstream out(output);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + output.string());
  out << "x,y,t\n";
  for (const FeaturePoint& f : feats) out << f.x << ',' << f.y << ',' << f.t << '\n';
  std::cout << "features: " << feats.size() << "\npixel tests: " << tests << "\n";
  return kExitOk;
}

int run_segment(const fs::path& input, const fs::path& output, Tick window,
                std::uint32_t threshold, int close_radius) {
  const DecodedStream s = load_stream(input);
  if (window == 0) window = s.plane.ref_interval;
  const auto masks =
      segment_motion(s.events, s.plane.width, s.plane.height, window, threshold, close_radius);
  fs::create_directories(output);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    write_png(sequence_name(output, "mask", k), masks[k].mask);
  }
  std::cout << "masks: " << masks.size() << "\n";
  return kExitOk;
}

int run_filter_dvs(const fs::path& input, const fs::path& output, std::uint16_t width,
                   std::uint16_t height, const DvsFilterParams& params) {
  const auto events = read_dvs(input);
  if (width == 0 || height == 0) {
    for (const DvsEvent& e : events) {
      width = std::max<std::uint16_t>(width, std::uint16_t(e.x + 1));
      height = std::max<std::uint16_t>(height, std::uint16_t(e.y + 1));
    }
  }
  const auto res = filter_dvs_with_features(events, width, height, params);
  write_dvs(output, res.events);
  std::size_t boxes = 0;
  for (const auto& b : res.boxes) boxes += b.size();
  std::cout << "input: " << events.size() << "\nkept: " << res.events.size()
            << "\nfeatures: " << res.feature_count << "\nboxes: " << boxes << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const fs::path& input, const fs::path& output, const InputOptions& in,
                 SimConfig cfg, const std::string& mode, const fs::path& roi_track,
                 bool serial) {
  cfg.mode = parse_sim_mode(mode);
  cfg.validate();
  const auto frames = load_frames(input, in.geometry());
  std::vector<RoiSample> track;
  if (!roi_track.empty()) track = read_roi_track(roi_track);
  const auto res =
      run_sim(frames, cfg, track, serial ? ExecPolicy::Serial : ExecPolicy::Parallel);
  save_stream(output, res.plane, res.events, {});
  const SimStats& st = res.stats;
  std::cout << "frames:            " << st.frames << "\n"
            << "events:            " << st.events << "\n"
            << "empty events:      " << st.empty_events << "\n"
            << "repeated events:   " << st.repeated_events << "\n"
            << "repeat runs:       " << st.repeat_records.size() << "\n"
            << "events/px/interval " << st.events_per_pixel_per_interval(res.plane.pixel_count())
            << "\n";
  return kExitOk;
}

int default_port() {
  if (const char* env = std::getenv("EVENTFORGE_PORT")) {
    try {
      const int p = std::stoi(env);
      if (p > 0 && p < 65536) return p;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring EVENTFORGE_PORT=" << env << "\n";
  }
  return 8080;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intensity-event video codec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "eventforge 1.0");

  // transcode
  TranscodeOptions tr;
  auto* c_tr = app.add_subcommand("transcode", "Frames, DVS or ADDER input to an event stream");
  c_tr->add_option("input", tr.input, "PNG directory, .y4m, .png, raw dump, DVS .bin/.csv or .adder")
      ->required();
  c_tr->add_option("-o,--output", tr.output, "Output .adder or .adderc")->required();
  tr.in.add(c_tr);
  c_tr->add_option("--source", tr.source)->check(CLI::IsMember({"auto", "frames", "dvs", "adder"}));
  c_tr->add_option("--crf", tr.crf, "Quality 0 (lossless) to 9")->check(CLI::Range(0, 9));
  c_tr->add_option("--m", tr.m, "Contrast threshold override");
  c_tr->add_option("--m-max", tr.m_max, "Threshold ceiling override");
  c_tr->add_option("--m-velocity", tr.m_velocity, "Reference intervals per threshold step");
  c_tr->add_option("--ref", tr.ref_interval, "Ticks per input frame");
  c_tr->add_option("--dt-max", tr.dt_max, "Longest first event of a level, in ticks");
  c_tr->add_option("--mode", tr.mode)->check(CLI::IsMember({"collapse", "list"}));
  c_tr->add_flag("--features", tr.features, "Feature-driven rate control");
  c_tr->add_flag("--serial", tr.serial, "Single-threaded integration");
  c_tr->add_flag("--metrics", tr.metrics, "Report reconstruction quality against the input");
  c_tr->add_option("--theta", tr.theta, "DVS contrast threshold");
  c_tr->add_option("--adu-interval", tr.adu_interval, "ADU span in ticks for .adderc");
  c_tr->add_option("--compress-m-max", tr.compress_m_max, "Coder drift band (default: CRF)");

  // info
  fs::path info_in;
  bool info_deep = false;
  auto* c_info = app.add_subcommand("info", "Stream metadata");
  c_info->add_option("input", info_in)->required();
  c_info->add_flag("--deep", info_deep, "Scan events for rate and dynamic range");

  // export
  ExportOptions ex;
  auto* c_ex = app.add_subcommand("export", "Frames, views or DVS events from a stream");
  c_ex->add_option("input", ex.input)->required();
  c_ex->add_option("-o,--output", ex.output, "PNG directory, .y4m, or DVS .bin/.csv")->required();
  c_ex->add_option("--mode", ex.mode)
      ->check(CLI::IsMember({"accurate", "fast", "d", "dt", "dvs"}));
  c_ex->add_option("--fps", ex.fps, "Output frame rate (default: stream rate)");
  c_ex->add_option("--buffer-limit", ex.buffer_limit, "Pending frames before forcing output");
  c_ex->add_option("--theta", ex.theta, "DVS export threshold");

  // detect
  fs::path det_in, det_out;
  FastParams fast;
  auto* c_det = app.add_subcommand("detect", "Event-driven FAST features to CSV");
  c_det->add_option("input", det_in)->required();
  c_det->add_option("-o,--output", det_out)->required();
  c_det->add_option("--threshold", fast.threshold);
  c_det->add_option("--arc", fast.arc)->check(CLI::Range(1, 16));

  // segment
  fs::path seg_in, seg_out;
  Tick seg_window = 0;
  std::uint32_t seg_threshold = 2;
  int seg_close = 1;
  auto* c_seg = app.add_subcommand("segment", "Event-rate motion masks as PNGs");
  c_seg->add_option("input", seg_in)->required();
  c_seg->add_option("-o,--output", seg_out, "Output directory")->required();
  c_seg->add_option("--window", seg_window, "Window in ticks (default: reference interval)");
  c_seg->add_option("--threshold", seg_threshold, "Events per window a pixel must exceed");
  c_seg->add_option("--close", seg_close, "Closing radius");

  // filter-dvs
  fs::path fd_in, fd_out;
  std::uint16_t fd_w = 0, fd_h = 0;
  DvsFilterParams fd;
  auto* c_fd = app.add_subcommand("filter-dvs", "Keep DVS events near feature clusters");
  c_fd->add_option("input", fd_in)->required();
  c_fd->add_option("-o,--output", fd_out)->required();
  c_fd->add_option("--width", fd_w);
  c_fd->add_option("--height", fd_h);
  c_fd->add_option("--eps", fd.eps, "DBSCAN radius in pixels");
  c_fd->add_option("--min-pts", fd.min_pts, "DBSCAN core size");
  c_fd->add_option("--keep-inside", fd.keep_inside)->check(CLI::Range(0.0, 1.0));
  c_fd->add_option("--keep-outside", fd.keep_outside)->check(CLI::Range(0.0, 1.0));
  c_fd->add_option("--seed", fd.seed);
  c_fd->add_option("--window", fd.window, "Clustering window in microseconds");

  // simulate
  fs::path sim_in, sim_out, sim_roi;
  InputOptions sim_io;
  sim_io.bits = 16;
  SimConfig sim;
  std::string sim_mode = "constant";
  bool sim_serial = false;
  auto* c_sim = app.add_subcommand("simulate", "Integrating-sensor simulation on photon frames");
  c_sim->add_option("input", sim_in, "Photon-count frames (16-bit raw, PNG directory)")
      ->required();
  c_sim->add_option("-o,--output", sim_out)->required();
  sim_io.add(c_sim);
  c_sim->add_option("--mode", sim_mode)
      ->check(CLI::IsMember({"constant", "self_adjust", "radial", "aggressive"}));
  c_sim->add_option("--tps", sim.ticks_per_second);
  c_sim->add_option("--ref", sim.ref_interval, "Ticks per frame");
  c_sim->add_option("--dt-max", sim.dt_max);
  c_sim->add_option("--initial-d", sim.initial_d);
  c_sim->add_option("--throttle-radius", sim.throttle_radius);
  c_sim->add_option("--minor-radius", sim.minor_radius);
  c_sim->add_option("--roi-factor", sim.roi_max_factor);
  c_sim->add_option("--roi-falloff", sim.roi_falloff);
  c_sim->add_option("--roi-track", sim_roi, "CSV sample_index,x,y,w,h");
  c_sim->add_flag("--serial", sim_serial);

  // compress / decompress
  fs::path cmp_in, cmp_out;
  CompressParams cmp;
  auto* c_cmp = app.add_subcommand("compress", ".adder to .adderc");
  c_cmp->add_option("input", cmp_in)->required();
  c_cmp->add_option("-o,--output", cmp_out)->required();
  c_cmp->add_option("--m-max", cmp.m_max, "Drift band; 0 is lossless");
  c_cmp->add_option("--adu-interval", cmp.adu_interval);
  fs::path dec_in, dec_out;
  auto* c_dec = app.add_subcommand("decompress", ".adderc to .adder");
  c_dec->add_option("input", dec_in)->required();
  c_dec->add_option("-o,--output", dec_out)->required();

  // serve
  auto* c_srv = app.add_subcommand("serve", "Tuning service: HTTP / and WebSocket /ws");
#ifdef EVENTFORGE_HAVE_SERVICE
  ServiceConfig srv;
  srv.port = static_cast<unsigned short>(default_port());
  InputOptions srv_io;
  c_srv->add_option("input", srv.input, "Frames to loop (default: synthetic scene)");
  srv_io.add(c_srv);
  c_srv->add_option("--port", srv.port, "Default from EVENTFORGE_PORT, else 8080");
  c_srv->add_option("--address", srv.address);
  c_srv->add_option("--web-root", srv.web_root);
  c_srv->add_option("--crf", srv.crf)->check(CLI::Range(0, 9));
#else
  (void)default_port;
#endif

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParameter;
  }

  try {
    if (*c_tr) return run_transcode(tr);
    if (*c_info) return run_info(info_in, info_deep);
    if (*c_ex) return run_export(ex);
    if (*c_det) return run_detect(det_in, det_out, fast);
    if (*c_seg) return run_segment(seg_in, seg_out, seg_window, seg_threshold, seg_close);
    if (*c_fd) return run_filter_dvs(fd_in, fd_out, fd_w, fd_h, fd);
    if (*c_sim) return run_simulate(sim_in, sim_out, sim_io, sim, sim_mode, sim_roi, sim_serial);
    if (*c_cmp) {
      const DecodedStream s = load_stream(cmp_in);
      write_file(cmp_out, compress_stream(s.plane, s.events, cmp));
      std::cout << "ratio: "
                << double(fs::file_size(cmp_out)) / double(std::max<std::uintmax_t>(fs::file_size(cmp_in), 1))
                << "\n";
      return kExitOk;
    }
    if (*c_dec) {
      const DecodedStream s = load_stream(dec_in);
      write_file(dec_out, write_stream(s.plane, s.events));
      return kExitOk;
    }
    if (*c_srv) {
#ifdef EVENTFORGE_HAVE_SERVICE
      srv.raw = srv_io.geometry();
      TunerService service(srv);
      const unsigned short port = service.start();
      std::cout << "listening on http://" << srv.address << ':' << port << "/" << std::endl;
      service.wait();
      return kExitOk;
#else
      std::cerr << "error: built without the tuning service\n";
      return kExitParameter;
#endif
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return kExitFormat;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
