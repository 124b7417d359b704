#include "eventforge/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "eventforge/error.hpp"
#include "json.hpp"

namespace eventforge {

GrayImage to_gray(const Frame& frame) {
  GrayImage img(frame.width, frame.height);
  const std::size_t n = std::size_t(frame.width) * frame.height;
  for (std::size_t i = 0; i < n; ++i) {
    double v;
    if (frame.channels == 3) {
      v = 0.299 * frame.data[3 * i] + 0.587 * frame.data[3 * i + 1] +
          0.114 * frame.data[3 * i + 2];
    } else {
      v = frame.data[i * frame.channels];
    }
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return img;
}

Frame from_gray(const GrayImage& img) {
  Frame f(img.width, img.height, 1);
  std::copy(img.pixels.begin(), img.pixels.end(), f.data.begin());
  return f;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

void png_warn(png_structp, png_const_charp) {}

void png_write_vec(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

// Writes rows with libpng into `sink` (FILE* or vector).
void write_png_rows(std::FILE* file, std::vector<std::uint8_t>* vec, std::uint32_t width,
                    std::uint32_t height, int color_type, int bit_depth,
                    const std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw Error(ErrorKind::Io, "png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "png: write failed");
  }
  if (file) {
    png_init_io(png, file);
  } else {
    png_set_write_fn(png, vec, png_write_vec, png_flush_noop);
  }
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngPixels {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<std::uint8_t> buf;
  std::vector<png_bytep> rows;
};

// Runs libpng with setjmp error handling; no C++ objects are created between
// setjmp and the reads, only the heap-held PngPixels is filled.
bool decode_png(std::FILE* file, PngPixels* px) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  px->channels = png_get_channels(png, info);
  px->depth = png_get_bit_depth(png, info);
  px->width = png_get_image_width(png, info);
  px->height = png_get_image_height(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  px->buf.resize(row_bytes * px->height);
  px->rows.resize(px->height);
  for (std::size_t y = 0; y < px->height; ++y) px->rows[y] = px->buf.data() + y * row_bytes;
  png_read_image(png, px->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

Frame read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  auto px = std::make_unique<PngPixels>();
  if (!decode_png(file.get(), px.get())) {
    throw Error(ErrorKind::Format, "png: cannot decode " + path.string());
  }
  if ((px->channels != 1 && px->channels != 3) || px->width > 65535 || px->height > 65535) {
    throw Error(ErrorKind::Format, "unsupported png layout");
  }
  Frame frame(static_cast<std::uint16_t>(px->width), static_cast<std::uint16_t>(px->height),
              static_cast<std::uint8_t>(px->channels));
  const std::size_t per_row = std::size_t(frame.width) * frame.channels;
  for (std::size_t y = 0; y < frame.height; ++y) {
    const std::uint8_t* row = px->rows[y];
    for (std::size_t i = 0; i < per_row; ++i) {
      frame.data[y * per_row + i] = px->depth == 16
                                        ? static_cast<std::uint16_t>(row[2 * i] | (row[2 * i + 1] << 8))
                                        : row[i];
    }
  }
  return frame;
}

void write_png(const std::filesystem::path& path, const Frame& frame, bool sixteen_bit) {
  const int depth = sixteen_bit ? 16 : 8;
  const std::size_t per_row = std::size_t(frame.width) * frame.channels;
  const std::size_t bytes = sixteen_bit ? 2 : 1;
  std::vector<std::uint8_t> buf(per_row * bytes * frame.height);
  for (std::size_t i = 0; i < frame.data.size(); ++i) {
    const std::uint16_t v = frame.data[i];
    if (sixteen_bit) {
      buf[2 * i] = static_cast<std::uint8_t>(v);
      buf[2 * i + 1] = static_cast<std::uint8_t>(v >> 8);
    } else {
      buf[i] = static_cast<std::uint8_t>(std::min<std::uint16_t>(v, 255));
    }
  }
  std::vector<png_bytep> rows(frame.height);
  for (std::size_t y = 0; y < frame.height; ++y) rows[y] = buf.data() + y * per_row * bytes;
  FilePtr file = open_file(path, "wb");
  write_png_rows(file.get(), nullptr, frame.width, frame.height,
                 frame.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, depth, rows);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  write_png(path, from_gray(img));
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> copy = img.pixels;
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = copy.data() + y * img.width;
  std::vector<std::uint8_t> out;
  write_png_rows(nullptr, &out, img.width, img.height, PNG_COLOR_TYPE_GRAY, 8, rows);
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

std::vector<Frame> read_y4m(const std::filesystem::path& path, double* fps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string tok;
  hs >> tok;
  if (tok != "YUV4MPEG2") throw Error(ErrorKind::BadMagic, "not a Y4M file");
  int w = 0, h = 0;
  std::string chroma = "420";
  double rate = 30.0;
  while (hs >> tok) {
    switch (tok[0]) {
      case 'W': w = std::stoi(tok.substr(1)); break;
      case 'H': h = std::stoi(tok.substr(1)); break;
      case 'C': chroma = tok.substr(1); break;
      case 'F': {
        const auto colon = tok.find(':');
        if (colon != std::string::npos) {
          rate = std::stod(tok.substr(1, colon - 1)) / std::stod(tok.substr(colon + 1));
        }
        break;
      }
      default: break;
    }
  }
  if (w <= 0 || h <= 0 || w > 65535 || h > 65535) {
    throw Error(ErrorKind::Format, "Y4M header lacks valid dimensions");
  }
  if (fps) *fps = rate;
  const std::size_t luma = std::size_t(w) * h;
  std::size_t chroma_bytes = 0;
  if (chroma.rfind("420", 0) == 0) {
    chroma_bytes = 2 * (std::size_t((w + 1) / 2) * ((h + 1) / 2));
  } else if (chroma.rfind("422", 0) == 0) {
    chroma_bytes = 2 * (std::size_t((w + 1) / 2) * h);
  } else if (chroma.rfind("444", 0) == 0) {
    chroma_bytes = 2 * luma;
  } else if (chroma != "mono") {
    throw Error(ErrorKind::Format, "unsupported Y4M chroma " + chroma);
  }
  std::vector<Frame> frames;
  std::string line;
  std::vector<char> buf(luma + chroma_bytes);
  while (std::getline(in, line)) {
    if (line.rfind("FRAME", 0) != 0) throw Error(ErrorKind::Format, "bad Y4M frame marker");
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw Error(ErrorKind::Truncated, "Y4M frame truncated");
    }
    Frame f(static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h), 1);
    for (std::size_t i = 0; i < luma; ++i) f.data[i] = static_cast<std::uint8_t>(buf[i]);
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_y4m(const std::filesystem::path& path, const std::vector<GrayImage>& frames,
               double fps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  const int w = frames.empty() ? 1 : frames[0].width;
  const int h = frames.empty() ? 1 : frames[0].height;
  const long num = std::lround(fps * 1000);
  out << "YUV4MPEG2 W" << w << " H" << h << " F" << num << ":1000 Ip A1:1 Cmono\n";
  for (const GrayImage& f : frames) {
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(f.pixels.data()),
              static_cast<std::streamsize>(f.pixels.size()));
  }
}

std::vector<Frame> read_raw_frames(const std::filesystem::path& path, std::uint16_t width,
                                   std::uint16_t height, std::uint8_t channels, int bits) {
  if (width == 0 || height == 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorKind::Parameter, "raw frames need width, height and 1 or 3 channels");
  }
  if (bits != 8 && bits != 16) throw Error(ErrorKind::Parameter, "raw frames are 8 or 16 bit");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::size_t samples = std::size_t(width) * height * channels;
  const std::size_t size = samples * std::size_t(bits / 8);
  std::vector<unsigned char> buf(size);
  std::vector<Frame> frames;
  while (in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size))) {
    Frame f(width, height, channels);
    for (std::size_t i = 0; i < samples; ++i) {
      f.data[i] = bits == 8 ? buf[i] : std::uint16_t(buf[2 * i] | (buf[2 * i + 1] << 8));
    }
    frames.push_back(std::move(f));
  }
  if (in.gcount() != 0) throw Error(ErrorKind::Truncated, "raw frame dump ends mid-frame");
  return frames;
}

void write_raw_frames(const std::filesystem::path& path, const std::vector<Frame>& frames,
                      int bits) {
  if (bits != 8 && bits != 16) throw Error(ErrorKind::Parameter, "raw frames are 8 or 16 bit");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  for (const Frame& f : frames) {
    for (std::uint16_t v : f.data) {
      if (bits == 8) {
        out.put(static_cast<char>(std::min<std::uint16_t>(v, 255)));
      } else {
        out.put(static_cast<char>(v & 0xFF));
        out.put(static_cast<char>(v >> 8));
      }
    }
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& raw) {
  return std::filesystem::path(raw.string() + ".json");
}

void write_sidecar(const std::filesystem::path& raw, const RawGeometry& g) {
  nlohmann::json j{{"width", g.width}, {"height", g.height}, {"channels", g.channels},
                   {"bits", g.bits}, {"fps", g.fps}};
  std::ofstream out(sidecar_path(raw));
  if (!out) throw Error(ErrorKind::Io, "cannot create " + sidecar_path(raw).string());
  out << j.dump(2) << "\n";
}

RawGeometry read_sidecar(const std::filesystem::path& raw) {
  const auto path = sidecar_path(raw);
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parameter, "raw input needs --width/--height or " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    RawGeometry g;
    g.width = j.at("width").get<std::uint16_t>();
    g.height = j.at("height").get<std::uint16_t>();
    g.channels = j.value("channels", std::uint8_t{1});
    g.bits = j.value("bits", 8);
    g.fps = j.value("fps", 0.0);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "bad sidecar " + path.string() + ": " + e.what());
  }
}

std::vector<Frame> load_frames(const std::filesystem::path& path, RawGeometry geometry,
                               double* fps) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::Io, "no PNG frames in " + path.string());
    std::vector<Frame> frames;
    for (const auto& f : files) frames.push_back(read_png(f));
    for (const Frame& f : frames) {
      if (f.width != frames[0].width || f.height != frames[0].height ||
          f.channels != frames[0].channels) {
        throw Error(ErrorKind::Dimension, "PNG frames differ in size");
      }
    }
    if (fps) *fps = geometry.fps;
    return frames;
  }
  const std::string ext = path.extension().string();
  if (ext == ".y4m") return read_y4m(path, fps);
  if (ext == ".png") {
    if (fps) *fps = geometry.fps;
    return {read_png(path)};
  }
  if (geometry.width == 0 || geometry.height == 0) geometry = read_sidecar(path);
  if (fps) *fps = geometry.fps;
  return read_raw_frames(path, geometry.width, geometry.height, geometry.channels, geometry.bits);
}

}  // namespace eventforge
