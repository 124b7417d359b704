#include "eventforge/dvs_io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <string>

#include "bytes.hpp"
#include "eventforge/error.hpp"

namespace eventforge {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_csv(const std::filesystem::path& path) { return path.extension() == ".csv"; }

}  // namespace

std::vector<std::uint8_t> encode_dvs(std::span<const DvsEvent> events) {
  std::vector<std::uint8_t> out;
  out.reserve(events.size() * kDvsRecordSize);
  for (const DvsEvent& e : events) {
    detail::put_u16(out, e.x);
    detail::put_u16(out, e.y);
    out.push_back(static_cast<std::uint8_t>(e.p));
    detail::put_u32(out, e.t);
  }
  return out;
}

std::vector<DvsEvent> decode_dvs(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kDvsRecordSize != 0) {
    throw Error(ErrorKind::Truncated, "DVS file ends mid-record");
  }
  std::vector<DvsEvent> out(bytes.size() / kDvsRecordSize);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint8_t* p = bytes.data() + i * kDvsRecordSize;
    DvsEvent& e = out[i];
    e.x = detail::get_u16(p);
    e.y = detail::get_u16(p + 2);
    e.p = static_cast<std::int8_t>(p[4]);
    e.t = detail::get_u32(p + 5);
    if (e.p != 1 && e.p != -1) {
      throw Error(ErrorKind::Format, "DVS record " + std::to_string(i) + " has bad polarity");
    }
  }
  return out;
}

std::string format_dvs_csv(std::span<const DvsEvent> events) {
  std::string out = "x,y,p,t\n";
  for (const DvsEvent& e : events) {
    out += std::to_string(e.x) + ',' + std::to_string(e.y) + ',' + std::to_string(int(e.p)) +
           ',' + std::to_string(e.t) + '\n';
  }
  return out;
}

std::vector<DvsEvent> parse_dvs_csv(std::string_view text) {
  std::vector<DvsEvent> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    long long v[4];
    const char* p = line.data();
    const char* end = p + line.size();
    bool ok = true;
    for (int field = 0; field < 4 && ok; ++field) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      auto [next, ec] = std::from_chars(p, end, v[field]);
      ok = ec == std::errc();
      p = next;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (field < 3) {
        ok = ok && p < end && *p == ',';
        ++p;
      }
    }
    ok = ok && p == end;
    if (!ok) {
      if (line_no == 1) continue;  // header
      throw Error(ErrorKind::Format, "bad DVS line " + std::to_string(line_no));
    }
    if (v[0] < 0 || v[0] > 0xFFFF || v[1] < 0 || v[1] > 0xFFFF || (v[2] != 1 && v[2] != -1) ||
        v[3] < 0 || v[3] > 0xFFFFFFFFLL) {
      throw Error(ErrorKind::Format, "DVS value out of range on line " + std::to_string(line_no));
    }
    out.push_back({std::uint16_t(v[0]), std::uint16_t(v[1]), std::int8_t(v[2]), Tick(v[3])});
  }
  return out;
}

std::vector<DvsEvent> read_dvs(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (is_csv(path)) {
    return parse_dvs_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  return decode_dvs(bytes);
}

void write_dvs(const std::filesystem::path& path, std::span<const DvsEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  if (is_csv(path)) {
    out << format_dvs_csv(events);
  } else {
    const auto bytes = encode_dvs(events);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace eventforge
