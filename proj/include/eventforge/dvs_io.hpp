#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eventforge/event.hpp"

namespace eventforge {

/// Headerless records: x u16, y u16, p i8, t u32, little-endian.
inline constexpr std::size_t kDvsRecordSize = 9;

std::vector<std::uint8_t> encode_dvs(std::span<const DvsEvent> events);
/// Throws Error(Truncated) on a partial record, Error(Format) on p outside {-1, 1}.
std::vector<DvsEvent> decode_dvs(std::span<const std::uint8_t> bytes);

/// `x,y,p,t` per line; a header line is allowed.
std::string format_dvs_csv(std::span<const DvsEvent> events);
std::vector<DvsEvent> parse_dvs_csv(std::string_view text);

/// `.csv` files use the text form, everything else the binary one.
std::vector<DvsEvent> read_dvs(const std::filesystem::path& path);
void write_dvs(const std::filesystem::path& path, std::span<const DvsEvent> events);

}  // namespace eventforge
