#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace eventforge {

/// Cumulative-frequency model over symbols 0..n-1. Adaptive models start at
/// one count per symbol and halve all counts once the total reaches
/// kHalveAt.
class FrequencyModel {
 public:
  static constexpr std::uint32_t kHalveAt = 1u << 13;

  explicit FrequencyModel(std::size_t symbols, bool adaptive = true);
  /// Fixed model from explicit counts (all must be non-zero).
  static FrequencyModel fixed(std::span<const std::uint32_t> counts);

  std::size_t size() const noexcept { return counts_.size(); }
  std::uint32_t total() const noexcept { return total_; }
  std::uint32_t low(std::size_t s) const;
  std::uint32_t count(std::size_t s) const { return counts_[s]; }
  /// Symbol whose cumulative range contains `target` (< total()).
  std::size_t find(std::uint32_t target) const;
  void update(std::size_t s);

  bool operator==(const FrequencyModel&) const = default;

 private:
  std::vector<std::uint32_t> counts_;
  std::uint32_t total_ = 0;
  bool adaptive_ = true;
};

/// Binary integer arithmetic coder (32-bit range, carry handled with
/// pending bits).
class ArithEncoder {
 public:
  void encode(std::uint32_t low, std::uint32_t high, std::uint32_t total);
  void encode(FrequencyModel& model, std::size_t symbol);
  /// Equiprobable bit without a model.
  void encode_bypass(bool bit);
  /// Terminates the code and returns the bytes.
  std::vector<std::uint8_t> finish();

 private:
  void put_bit(bool bit);

  std::uint64_t low_ = 0;
  std::uint64_t high_ = 0xFFFFFFFFull;
  std::uint64_t pending_ = 0;
  std::vector<std::uint8_t> bytes_;
  std::uint8_t current_ = 0;
  int nbits_ = 0;
};

class ArithDecoder {
 public:
  /// Throws Error(Exhausted) once more than 32 bits past the end are needed.
  explicit ArithDecoder(std::span<const std::uint8_t> bytes);

  std::size_t decode(FrequencyModel& model);
  bool decode_bypass();

 private:
  std::uint32_t target(std::uint32_t total) const;
  void consume(std::uint32_t low, std::uint32_t high, std::uint32_t total);
  bool next_bit();

  std::span<const std::uint8_t> bytes_;
  std::size_t bit_pos_ = 0;
  std::uint64_t low_ = 0;
  std::uint64_t high_ = 0xFFFFFFFFull;
  std::uint64_t value_ = 0;
};

/// Whole-message helpers: symbols are coded with the given model (adapted
/// as they go); `eof` terminates the message.
std::vector<std::uint8_t> arith_encode(std::span<const std::size_t> symbols, FrequencyModel model,
                                       std::size_t eof);
std::vector<std::size_t> arith_decode(std::span<const std::uint8_t> bytes, FrequencyModel model,
                                      std::size_t eof);

/// Exact interval [low/denom, high/denom) reached by coding `symbols` with a
/// fixed model, in unbounded precision up to 128-bit denominators.
struct ExactInterval {
  unsigned __int128 low = 0;
  unsigned __int128 high = 1;
  unsigned __int128 denom = 1;

  double low_value() const { return double(low) / double(denom); }
  double high_value() const { return double(high) / double(denom); }
};

ExactInterval exact_interval(const FrequencyModel& model, std::span<const std::size_t> symbols);

/// Decodes the rational value num/den under a fixed model until `eof`.
std::vector<std::size_t> decode_value(const FrequencyModel& model, std::uint64_t num,
                                      std::uint64_t den, std::size_t eof,
                                      std::size_t max_symbols = 1 << 16);

}  // namespace eventforge
