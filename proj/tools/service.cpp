#include "service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "eventforge/error.hpp"
#include "eventforge/metrics.hpp"
#include "eventforge/reconstruct.hpp"
#include "eventforge/stream_io.hpp"
#include "eventforge/synthetic.hpp"
#include "eventforge/transcode.hpp"
#include "json.hpp"

namespace eventforge {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

// Previews and ticks are dropped for a client whose queue is this deep.
constexpr std::size_t kMaxQueued = 64;

std::string framed(WireKind kind, std::string_view body) {
  std::string out;
  out.reserve(body.size() + 1);
  out.push_back(static_cast<char>(kind));
  out.append(body);
  return out;
}

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class WsSession;

class Hub {
 public:
  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mu_);
    sessions_.push_back(s);
  }
  void broadcast(std::shared_ptr<const std::string> msg, bool droppable);
  std::size_t size() {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  std::mutex mu_;
  std::vector<std::weak_ptr<WsSession>> sessions_;
};

struct Command {
  json body;
  std::weak_ptr<WsSession> from;
};

class Mailbox {
 public:
  void post(Command c) {
    {
      std::lock_guard lock(mu_);
      pending_.push_back(std::move(c));
    }
    cv_.notify_all();
  }
  std::vector<Command> take() {
    std::lock_guard lock(mu_);
    std::vector<Command> out(std::make_move_iterator(pending_.begin()),
                             std::make_move_iterator(pending_.end()));
    pending_.clear();
    return out;
  }
  template <class Pred>
  void wait_for(std::chrono::milliseconds d, Pred stop) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, d, [&] { return !pending_.empty() || stop(); });
  }
  void wake() { cv_.notify_all(); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Command> pending_;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Hub& hub, Mailbox& mailbox)
      : ws_(std::move(socket)), hub_(hub), mailbox_(mailbox) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.binary(true);
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void send(std::shared_ptr<const std::string> msg, bool droppable) {
    net::post(ws_.get_executor(), [self = shared_from_this(), msg, droppable] {
      if (self->closed_) return;
      if (droppable && self->queue_.size() >= kMaxQueued) return;
      self->queue_.push_back(msg);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  void send_error(const std::string& what) {
    send(std::make_shared<const std::string>(
             framed(WireKind::Error, json{{"error", what}}.dump())),
         false);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    hub_.add(shared_from_this());
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      return;
    }
    std::string msg = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    // Binary frames carry the kind byte; bare JSON text is accepted too.
    if (!msg.empty() && msg.front() == static_cast<char>(WireKind::Control)) msg.erase(0, 1);
    try {
      json body = json::parse(msg);
      if (!body.is_object() || !body.contains("type") || !body["type"].is_string()) {
        throw Error(ErrorKind::Format, "control message needs a string \"type\"");
      }
      mailbox_.post({std::move(body), weak_from_this()});
    } catch (const std::exception& e) {
      send_error(std::string("malformed control message: ") + e.what());
    }
    read_next();
  }

  void write_next() {
    ws_.async_write(net::buffer(*queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      queue_.clear();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  Mailbox& mailbox_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closed_ = false;
};

void Hub::broadcast(std::shared_ptr<const std::string> msg, bool droppable) {
  std::lock_guard lock(mu_);
  std::erase_if(sessions_, [](const auto& w) { return w.expired(); });
  for (const auto& w : sessions_) {
    if (auto s = w.lock()) s->send(msg, droppable);
  }
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Hub& hub, Mailbox& mailbox, std::filesystem::path root)
      : stream_(std::move(socket)), hub_(hub), mailbox_(mailbox), root_(std::move(root)) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::read_next, shared_from_this()));
  }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      if (req_.target() != "/ws") return;
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_, mailbox_)->run(std::move(req_));
      return;
    }
    respond(handle());
  }

  http::response<http::string_body> handle() {
    auto reply = [&](http::status status, std::string body, std::string_view type) {
      http::response<http::string_body> res{status, req_.version()};
      res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
      res.keep_alive(req_.keep_alive());
      res.body() = std::move(body);
      res.prepare_payload();
      return res;
    };
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      return reply(http::status::method_not_allowed, "GET only\n", "text/plain");
    }
    std::string target(req_.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos) {
      return reply(http::status::bad_request, "bad path\n", "text/plain");
    }
    if (target == "/") target = "/index.html";
    const std::filesystem::path path = root_ / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in) return reply(http::status::not_found, "not found\n", "text/plain");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return reply(http::status::ok, std::move(body), mime_type(path));
  }

  void respond(http::response<http::string_body> res) {
    auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *sp,
                      [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
                        if (ec || !sp->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read_next();
                      });
  }

  beast::tcp_stream stream_;
  Hub& hub_;
  Mailbox& mailbox_;
  std::filesystem::path root_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

enum class View { Intensity, D, Dt };

const char* view_name(View v) {
  switch (v) {
    case View::D:
      return "d";
    case View::Dt:
      return "dt";
    default:
      return "intensity";
  }
}

// The transcode loop. Only the worker thread touches this state.
class Pipeline {
 public:
  Pipeline(std::vector<Frame> frames, double fps, int crf)
      : frames_(std::move(frames)), fps_(fps), crf_(crf), sens_(crf_sensitivity(crf)) {
    plane_.width = frames_.front().width;
    plane_.height = frames_.front().height;
    plane_.channels = frames_.front().channels;
    plane_.ticks_per_second = Tick(std::lround(double(plane_.ref_interval) * fps_));
    reset(0);
  }

  // Transcodes one frame and returns the messages to broadcast.
  std::vector<std::pair<std::string, bool>> step() {
    const Frame& src = frames_[cursor_];
    history_.push_back(cursor_);
    const auto events = tx_->push_frame(src);
    std::vector<Frame> recon;
    for (const Event& e : events) {
      tracker_->push(e);
      rec_->push(e, recon);
    }
    for (const Frame& f : recon) {
      if (history_.empty()) break;
      last_quality_ = compare(frames_[history_.front()], f);
      history_.pop_front();
    }
    ++frame_;
    cursor_ = (cursor_ + 1) % frames_.size();

    std::vector<std::pair<std::string, bool>> out;
    const double bytes_per_frame = double(plane_.pixel_count());
    const double adder_bytes = double(events.size() * event_size(plane_.channels));
    json tick{{"frame", frame_},
              {"t", double(frame_) / fps_},
              {"mse", last_quality_.mse},
              {"psnr", last_quality_.psnr},
              {"ssim", last_quality_.ssim},
              {"source_bps", bytes_per_frame * 8.0 * fps_},
              {"adder_bps", adder_bytes * 8.0 * fps_},
              {"events_per_s", double(events.size()) * fps_},
              {"events", events.size()},
              {"crf", crf_}};
    out.emplace_back(framed(WireKind::Metrics, tick.dump()), true);

    GrayImage preview;
    if (view_ == View::D) {
      preview = tracker_->render_d();
    } else if (view_ == View::Dt) {
      preview = tracker_->render_dt();
    } else {
      preview = to_gray(tx_->level_image());
    }
    const auto png = encode_png(preview);
    std::string msg(1, static_cast<char>(WireKind::Preview));
    msg.append(png.begin(), png.end());
    out.emplace_back(std::move(msg), true);

    if (features_) {
      json pts = json::array();
      for (const FeaturePoint& f : tx_->last_features()) pts.push_back({f.x, f.y});
      out.emplace_back(framed(WireKind::Features, json{{"frame", frame_}, {"points", pts}}.dump()),
                       true);
    }
    return out;
  }

  // Applies one control message; throws Error on a bad request.
  void apply(const json& m) {
    const std::string type = m.at("type").get<std::string>();
    if (type == "set_crf") {
      const int crf = m.at("value").get<int>();
      const SensitivityParams sens = crf_sensitivity(crf);
      crf_ = crf;
      sens_ = sens;
      tx_->set_sensitivity(sens_);
      configure_features();
    } else if (type == "set_params") {
      PlaneParams plane = plane_;
      SensitivityParams sens = sens_;
      if (m.contains("ref_interval")) plane.ref_interval = m["ref_interval"].get<Tick>();
      if (m.contains("dt_max")) plane.dt_max = m["dt_max"].get<Tick>();
      if (m.contains("m")) sens.m = m["m"].get<double>();
      if (m.contains("m_max")) sens.m_max = m["m_max"].get<double>();
      if (m.contains("m_velocity")) sens.m_velocity = m["m_velocity"].get<std::uint32_t>();
      plane.ticks_per_second = Tick(std::lround(double(plane.ref_interval) * fps_));
      plane.validate();
      sens.validate();
      const bool restart = !(plane == plane_);
      plane_ = plane;
      sens_ = sens;
      if (restart) {
        reset(cursor_);
      } else {
        tx_->set_sensitivity(sens_);
      }
    } else if (type == "toggle_features") {
      features_ = m.contains("enabled") ? m["enabled"].get<bool>() : !features_;
      configure_features();
    } else if (type == "toggle_view") {
      const std::string v = m.at("view").get<std::string>();
      if (v == "intensity") {
        view_ = View::Intensity;
      } else if (v == "d") {
        view_ = View::D;
      } else if (v == "dt") {
        view_ = View::Dt;
      } else {
        throw Error(ErrorKind::Parameter, "view must be d, dt or intensity");
      }
    } else if (type == "pause") {
      paused_ = m.contains("paused") ? m["paused"].get<bool>() : !paused_;
    } else if (type == "seek_adu") {
      const auto adu = m.at("adu").get<std::int64_t>();
      if (adu < 0) throw Error(ErrorKind::Parameter, "ADU index must be >= 0");
      const std::size_t per_adu = std::max<std::size_t>(1, plane_.dt_max / plane_.ref_interval);
      reset((std::size_t(adu) * per_adu) % frames_.size());
    } else {
      throw Error(ErrorKind::Parameter, "unknown control type " + type);
    }
  }

  json state() const {
    return {{"crf", crf_},
            {"m", sens_.m},
            {"m_max", sens_.m_max},
            {"m_velocity", sens_.m_velocity},
            {"ref_interval", plane_.ref_interval},
            {"dt_max", plane_.dt_max},
            {"features", features_},
            {"view", view_name(view_)},
            {"paused", paused_},
            {"frame", frame_},
            {"width", plane_.width},
            {"height", plane_.height}};
  }

  bool paused() const { return paused_; }

 private:
  void reset(std::size_t cursor) {
    cursor_ = cursor;
    tx_ = std::make_unique<FramedTranscoder>(plane_, sens_);
    ReconstructParams rp;
    rp.buffer_limit = 4;
    rec_ = std::make_unique<FrameReconstructor>(plane_, rp);
    tracker_ = std::make_unique<EventImageTracker>(plane_);
    history_.clear();
    configure_features();
  }

  void configure_features() {
    FeatureFeedback ff;
    ff.detect = ff.feedback = features_;
    ff.radius = std::max<std::uint32_t>(sens_.feature_radius, 1);
    tx_->set_features(ff);
  }

  std::vector<Frame> frames_;
  double fps_;
  int crf_;
  SensitivityParams sens_;
  PlaneParams plane_;
  std::unique_ptr<FramedTranscoder> tx_;
  std::unique_ptr<FrameReconstructor> rec_;
  std::unique_ptr<EventImageTracker> tracker_;
  std::deque<std::size_t> history_;
  Quality last_quality_;
  std::size_t cursor_ = 0;
  std::uint64_t frame_ = 0;
  bool features_ = false;
  bool paused_ = false;
  View view_ = View::Intensity;
};

}  // namespace

struct TunerService::Impl {
  explicit Impl(ServiceConfig c) : config(std::move(c)) {}

  void accept() {
    acceptor->async_accept(net::make_strand(io), [this](beast::error_code ec, tcp::socket s) {
      if (!ec) std::make_shared<HttpSession>(std::move(s), hub, mailbox, config.web_root)->run();
      if (acceptor->is_open()) accept();
    });
  }

  void work(Pipeline pipeline) {
    using clock = std::chrono::steady_clock;
    const auto period = config.playback_fps > 0.0
                            ? std::chrono::duration_cast<clock::duration>(
                                  std::chrono::duration<double>(1.0 / config.playback_fps))
                            : clock::duration::zero();
    auto next = clock::now();
    while (!stopping) {
      for (Command& c : mailbox.take()) {
        try {
          pipeline.apply(c.body);
          json ack{{"type", c.body["type"]}, {"ok", true}, {"state", pipeline.state()}};
          hub.broadcast(std::make_shared<const std::string>(framed(WireKind::Ack, ack.dump())),
                        false);
        } catch (const std::exception& e) {
          if (auto s = c.from.lock()) s->send_error(e.what());
        }
      }
      if (pipeline.paused()) {
        mailbox.wait_for(std::chrono::milliseconds(50), [&] { return stopping.load(); });
        continue;
      }
      try {
        for (auto& [msg, droppable] : pipeline.step()) {
          hub.broadcast(std::make_shared<const std::string>(std::move(msg)), droppable);
        }
      } catch (const std::exception& e) {
        std::cerr << "worker: " << e.what() << "\n";
        stopping = true;
        break;
      }
      if (period > clock::duration::zero()) {
        next += period;
        const auto now = clock::now();
        if (next < now) next = now;
        mailbox.wait_for(std::chrono::duration_cast<std::chrono::milliseconds>(next - now),
                         [&] { return stopping.load(); });
      }
    }
  }

  ServiceConfig config;
  net::io_context io;
  std::optional<tcp::acceptor> acceptor;
  std::optional<net::signal_set> signals;
  Hub hub;
  Mailbox mailbox;
  std::atomic<bool> stopping{false};
  std::thread net_thread;
  std::thread worker;
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool done = false;
};

TunerService::TunerService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

TunerService::~TunerService() { stop(); }

unsigned short TunerService::start() {
  Impl& s = *impl_;
  std::vector<Frame> frames;
  double fps = 30.0;
  if (s.config.input.empty()) {
    frames = synth::drifting_texture(64, 64, 90, 1);
  } else {
    double file_fps = 0.0;
    frames = load_frames(s.config.input, s.config.raw, &file_fps);
    if (file_fps > 0.0) fps = file_fps;
  }
  if (frames.empty()) throw Error(ErrorKind::Parameter, "no input frames");
  Pipeline pipeline(std::move(frames), fps, s.config.crf);

  beast::error_code ec;
  const auto address = net::ip::make_address(s.config.address, ec);
  if (ec) throw Error(ErrorKind::Parameter, "bad address " + s.config.address);
  s.acceptor.emplace(s.io);
  const tcp::endpoint ep{address, s.config.port};
  s.acceptor->open(ep.protocol(), ec);
  if (!ec) s.acceptor->set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor->bind(ep, ec);
  if (!ec) s.acceptor->listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot listen on port " + std::to_string(s.config.port) +
                                         ": " + ec.message());
  const unsigned short port = s.acceptor->local_endpoint().port();

  s.signals.emplace(s.io, SIGINT, SIGTERM);
  s.signals->async_wait([this](beast::error_code e, int) {
    if (!e) stop();
  });
  s.accept();
  s.net_thread = std::thread([&s] { s.io.run(); });
  s.worker = std::thread([&s, p = std::move(pipeline)]() mutable { s.work(std::move(p)); });
  return port;
}

void TunerService::stop() {
  Impl& s = *impl_;
  s.stopping = true;
  s.mailbox.wake();
  net::post(s.io, [&s] {
    beast::error_code ec;
    if (s.acceptor) s.acceptor->close(ec);
    if (s.signals) s.signals->cancel(ec);
    s.io.stop();
  });
  if (s.worker.joinable() && s.worker.get_id() != std::this_thread::get_id()) s.worker.join();
  if (s.net_thread.joinable() && s.net_thread.get_id() != std::this_thread::get_id()) {
    s.net_thread.join();
  }
  {
    std::lock_guard lock(s.done_mu);
    s.done = true;
  }
  s.done_cv.notify_all();
}

void TunerService::wait() {
  Impl& s = *impl_;
  std::unique_lock lock(s.done_mu);
  s.done_cv.wait(lock, [&] { return s.done; });
}

}  // namespace eventforge
