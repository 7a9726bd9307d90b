#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "menage/error.hpp"

namespace menage {

// ceil(log2(n)) for n >= 1, clamped below at `floor`.
inline unsigned ceil_log2(std::uint64_t n, unsigned floor = 1) {
  unsigned bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < n) ++bits;
  return bits < floor ? floor : bits;
}

// Fixed-width bit row assembled most-significant field first.
class BitRow {
 public:
  void push(std::uint64_t value, unsigned width) {
    for (unsigned b = width; b-- > 0;) bits_.push_back(static_cast<std::uint8_t>((value >> b) & 1U));
  }

  std::size_t size() const { return bits_.size(); }

  // Lowercase hex, zero-padded on the left to a whole number of digits.
  std::string to_hex() const {
    const std::size_t digits = (bits_.size() + 3) / 4;
    const std::size_t pad = digits * 4 - bits_.size();
    std::string out;
    out.reserve(digits);
    unsigned nibble = 0;
    unsigned filled = static_cast<unsigned>(pad);
    for (auto b : bits_) {
      nibble = (nibble << 1) | b;
      if (++filled == 4) {
        out.push_back("0123456789abcdef"[nibble]);
        nibble = 0;
        filled = 0;
      }
    }
    return out;
  }

  static BitRow from_hex(std::string_view hex, std::size_t width, std::size_t line) {
    const std::size_t digits = (width + 3) / 4;
    if (hex.size() != digits) {
      fail(ErrorKind::kMalformed, "mem-image",
           "line " + std::to_string(line) + ": expected " + std::to_string(digits) +
               " hex digits, got " + std::to_string(hex.size()));
    }
    BitRow row;
    for (char c : hex) {
      unsigned v = 0;
      if (c >= '0' && c <= '9') {
        v = static_cast<unsigned>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        v = static_cast<unsigned>(c - 'a' + 10);
      } else {
        fail(ErrorKind::kMalformed, "mem-image",
             "line " + std::to_string(line) + ": invalid hex digit '" + std::string(1, c) + "'");
      }
      row.push(v, 4);
    }
    const std::size_t pad = digits * 4 - width;
    for (std::size_t b = 0; b < pad; ++b) {
      if (row.bits_[b] != 0) {
        fail(ErrorKind::kMalformed, "mem-image",
             "line " + std::to_string(line) + ": padding bits are not zero");
      }
    }
    row.bits_.erase(row.bits_.begin(), row.bits_.begin() + static_cast<std::ptrdiff_t>(pad));
    return row;
  }

  // Sequential most-significant-first field reader.
  class Reader {
   public:
    explicit Reader(const BitRow& row) : row_(row) {}
    std::uint64_t take(unsigned width) {
      std::uint64_t v = 0;
      for (unsigned b = 0; b < width; ++b) v = (v << 1) | row_.bits_.at(pos_++);
      return v;
    }

   private:
    const BitRow& row_;
    std::size_t pos_ = 0;
  };

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace menage
