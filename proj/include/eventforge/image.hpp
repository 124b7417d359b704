#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eventforge {

/// 8-bit single-channel image, row-major.
struct GrayImage {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::uint16_t w, std::uint16_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
};

/// Interleaved frame with up to 16-bit samples (8-bit sources use 0..255).
struct Frame {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t channels = 1;
  std::vector<std::uint16_t> data;

  Frame() = default;
  Frame(std::uint16_t w, std::uint16_t h, std::uint8_t c, std::uint16_t fill = 0)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  std::uint16_t at(int x, int y, int c = 0) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  std::uint16_t& at(int x, int y, int c = 0) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Luma (BT.601 weights) for colour frames, identity for gray; clamps to 255.
GrayImage to_gray(const Frame& frame);
Frame from_gray(const GrayImage& img);

Frame read_png(const std::filesystem::path& path);
/// 8-bit output unless `sixteen_bit`; samples above 255 are clamped otherwise.
void write_png(const std::filesystem::path& path, const Frame& frame, bool sixteen_bit = false);
void write_png(const std::filesystem::path& path, const GrayImage& img);
std::vector<std::uint8_t> encode_png(const GrayImage& img);

void write_pgm(const std::filesystem::path& path, const GrayImage& img);

/// YUV4MPEG2 sequences: the reader keeps the luma plane of any 8-bit
/// chroma layout; the writer emits Cmono.
std::vector<Frame> read_y4m(const std::filesystem::path& path, double* fps = nullptr);
void write_y4m(const std::filesystem::path& path, const std::vector<GrayImage>& frames,
               double fps);

/// Headerless dumps: width*height*channels samples per frame, 8-bit or
/// 16-bit little-endian.
std::vector<Frame> read_raw_frames(const std::filesystem::path& path, std::uint16_t width,
                                   std::uint16_t height, std::uint8_t channels, int bits = 8);
void write_raw_frames(const std::filesystem::path& path, const std::vector<Frame>& frames,
                      int bits = 8);

struct RawGeometry {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t channels = 1;
  int bits = 8;
  double fps = 0.0;
};

/// Raw dumps may carry their geometry in `<dump>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& raw);
void write_sidecar(const std::filesystem::path& raw, const RawGeometry& geometry);
RawGeometry read_sidecar(const std::filesystem::path& raw);

/// A directory of PNGs (sorted by name), a .y4m, a single .png, or a raw
/// dump described by `geometry` or its sidecar.
std::vector<Frame> load_frames(const std::filesystem::path& path, RawGeometry geometry = {},
                               double* fps = nullptr);

}  // namespace eventforge
