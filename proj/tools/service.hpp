#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "eventforge/image.hpp"

namespace eventforge {

/// Message kinds, the first byte of every WebSocket frame.
enum class WireKind : std::uint8_t {
  Control = 0x01,
  Ack = 0x02,
  Error = 0x03,
  Metrics = 0x04,
  Preview = 0x05,
  Features = 0x06,
};

struct ServiceConfig {
  /// Frames looped by the transcode worker; empty selects a synthetic scene.
  std::filesystem::path input;
  RawGeometry raw;
  std::filesystem::path web_root = EVENTFORGE_WEB_ROOT;
  std::string address = "127.0.0.1";
  unsigned short port = 8080;
  int crf = 3;
  /// Frames per second the worker plays; 0 runs unthrottled.
  double playback_fps = 30.0;
};

/// HTTP GET serves `web_root` (`/` is index.html); `/ws` upgrades to the
/// control and data channel. Control messages are JSON objects with a
/// "type" of set_crf, set_params, toggle_features, toggle_view, pause or
/// seek_adu; they take effect at the next frame boundary and are answered
/// with an Ack carrying the new state to every client, or an Error to the
/// sender only.
class TunerService {
 public:
  explicit TunerService(ServiceConfig config);
  ~TunerService();
  TunerService(const TunerService&) = delete;
  TunerService& operator=(const TunerService&) = delete;

  /// Binds and starts the network and worker threads; returns the bound
  /// port (useful with port 0).
  unsigned short start();
  void stop();
  /// Blocks until stop() or a signal.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace eventforge
