#include "eventforge/arith.hpp"


#include "eventforge/error.hpp"

namespace eventforge {

namespace {

constexpr std::uint64_t kTop = 0xFFFFFFFFull;
constexpr std::uint64_t kHalf = 0x80000000ull;
constexpr std::uint64_t kQuarter = 0x40000000ull;
constexpr std::uint64_t kThreeQuarters = 0xC0000000ull;

}  // namespace

FrequencyModel::FrequencyModel(std::size_t symbols, bool adaptive)
    : counts_(symbols, 1), total_(static_cast<std::uint32_t>(symbols)), adaptive_(adaptive) {
  if (symbols == 0) throw Error(ErrorKind::Parameter, "model needs at least one symbol");
}

FrequencyModel FrequencyModel::fixed(std::span<const std::uint32_t> counts) {
  FrequencyModel m(counts.size(), false);
  m.counts_.assign(counts.begin(), counts.end());
  m.total_ = 0;
  for (std::uint32_t c : counts) {
    if (c == 0) throw Error(ErrorKind::Parameter, "every symbol needs a non-zero count");
    m.total_ += c;
  }
  if (m.total_ >= (1u << 16)) throw Error(ErrorKind::Parameter, "model total too large");
  return m;
}

std::uint32_t FrequencyModel::low(std::size_t s) const {
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < s; ++i) acc += counts_[i];
  return acc;
}

std::size_t FrequencyModel::find(std::uint32_t target) const {
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    acc += counts_[i];
    if (target < acc) return i;
  }
  return counts_.size() - 1;
}

void FrequencyModel::update(std::size_t s) {
  if (!adaptive_) return;
  counts_[s] += 1;
  total_ += 1;
  if (total_ >= kHalveAt) {
    total_ = 0;
    for (std::uint32_t& c : counts_) {
      c = (c + 1) / 2;
      total_ += c;
    }
  }
}

void ArithEncoder::put_bit(bool bit) {
  current_ = static_cast<std::uint8_t>((current_ << 1) | (bit ? 1 : 0));
  if (++nbits_ == 8) {
    bytes_.push_back(current_);
    current_ = 0;
    nbits_ = 0;
  }
}

void ArithEncoder::encode(std::uint32_t low, std::uint32_t high, std::uint32_t total) {
  const std::uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * high / total - 1;
  low_ = low_ + range * low / total;
  for (;;) {
    if (high_ < kHalf) {
      put_bit(false);
      for (; pending_; --pending_) put_bit(true);
    } else if (low_ >= kHalf) {
      put_bit(true);
      for (; pending_; --pending_) put_bit(false);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

void ArithEncoder::encode(FrequencyModel& model, std::size_t symbol) {
  const std::uint32_t lo = model.low(symbol);
  encode(lo, lo + model.count(symbol), model.total());
  model.update(symbol);
}

void ArithEncoder::encode_bypass(bool bit) { encode(bit ? 1 : 0, bit ? 2 : 1, 2); }

std::vector<std::uint8_t> ArithEncoder::finish() {
  // Two more bits pin a value inside [low, high].
  ++pending_;
  if (low_ < kQuarter) {
    put_bit(false);
    for (; pending_; --pending_) put_bit(true);
  } else {
    put_bit(true);
    for (; pending_; --pending_) put_bit(false);
  }
  while (nbits_ != 0) put_bit(false);
  return std::move(bytes_);
}

ArithDecoder::ArithDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 32; ++i) value_ = (value_ << 1) | (next_bit() ? 1 : 0);
}

bool ArithDecoder::next_bit() {
  const std::size_t total_bits = bytes_.size() * 8;
  if (bit_pos_ >= total_bits + 32) {
    throw Error(ErrorKind::Exhausted, "arithmetic code exhausted before end of message");
  }
  bool bit = false;
  if (bit_pos_ < total_bits) bit = (bytes_[bit_pos_ / 8] >> (7 - bit_pos_ % 8)) & 1;
  ++bit_pos_;
  return bit;
}

std::uint32_t ArithDecoder::target(std::uint32_t total) const {
  const std::uint64_t range = high_ - low_ + 1;
  return static_cast<std::uint32_t>(((value_ - low_ + 1) * total - 1) / range);
}

void ArithDecoder::consume(std::uint32_t low, std::uint32_t high, std::uint32_t total) {
  const std::uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * high / total - 1;
  low_ = low_ + range * low / total;
  for (;;) {
    if (high_ < kHalf) {
      // nothing
    } else if (low_ >= kHalf) {
      value_ -= kHalf;
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      value_ -= kQuarter;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    value_ = ((value_ << 1) | (next_bit() ? 1 : 0)) & kTop;
  }
}

std::size_t ArithDecoder::decode(FrequencyModel& model) {
  const std::size_t s = model.find(target(model.total()));
  const std::uint32_t lo = model.low(s);
  consume(lo, lo + model.count(s), model.total());
  model.update(s);
  return s;
}

bool ArithDecoder::decode_bypass() {
  const bool bit = target(2) >= 1;
  consume(bit ? 1 : 0, bit ? 2 : 1, 2);
  return bit;
}

std::vector<std::uint8_t> arith_encode(std::span<const std::size_t> symbols, FrequencyModel model,
                                       std::size_t eof) {
  ArithEncoder enc;
  for (std::size_t s : symbols) {
    if (s >= model.size() || s == eof) throw Error(ErrorKind::Parameter, "symbol outside the model");
    enc.encode(model, s);
  }
  enc.encode(model, eof);
  return enc.finish();
}

std::vector<std::size_t> arith_decode(std::span<const std::uint8_t> bytes, FrequencyModel model,
                                      std::size_t eof) {
  ArithDecoder dec(bytes);
  std::vector<std::size_t> out;
  for (;;) {
    const std::size_t s = dec.decode(model);
    if (s == eof) return out;
    out.push_back(s);
  }
}

ExactInterval exact_interval(const FrequencyModel& model, std::span<const std::size_t> symbols) {
  using u128 = unsigned __int128;
  ExactInterval iv;
  const u128 total = model.total();
  for (std::size_t s : symbols) {
    if (s >= model.size()) throw Error(ErrorKind::Parameter, "symbol outside the model");
    if (iv.denom > (~u128(0)) / (total * total)) {
      throw Error(ErrorKind::Parameter, "message too long for exact interval arithmetic");
    }
    const u128 width = iv.high - iv.low;
    iv.low = iv.low * total + width * model.low(s);
    iv.high = iv.low + width * model.count(s);
    iv.denom *= total;
  }
  return iv;
}

std::vector<std::size_t> decode_value(const FrequencyModel& model, std::uint64_t num,
                                      std::uint64_t den, std::size_t eof,
                                      std::size_t max_symbols) {
  using u128 = unsigned __int128;
  if (den == 0 || num >= den) throw Error(ErrorKind::Parameter, "value must lie in [0, 1)");
  // Keep the value as (v - low) / width with exact integers.
  u128 v = num;
  u128 d = den;
  const u128 total = model.total();
  std::vector<std::size_t> out;
  while (out.size() < max_symbols) {
    // Symbol s with low(s)/total <= v/d < high(s)/total.
    const auto scaled = static_cast<std::uint32_t>(v * total / d);
    const std::size_t s = model.find(scaled);
    if (s == eof) return out;
    out.push_back(s);
    // v' = (v/d - low/total) / (count/total) = (v*total - low*d) / (count*d)
    const u128 nv = v * total - u128(model.low(s)) * d;
    const u128 nd = u128(model.count(s)) * d;
    v = nv;
    d = nd;
    if (d > (u128(1) << 100)) throw Error(ErrorKind::Parameter, "value needs too much precision");
  }
  throw Error(ErrorKind::Exhausted, "no end-of-message symbol within the symbol limit");
}

}  // namespace eventforge
