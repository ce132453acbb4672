#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "anytime/rng.hpp"

namespace anytime::gf2 {

// A short bit vector packed into one machine word. Used for message blocks
// (k bits) and code blocks (n bits); both are at most 64 bits, which covers
// every configuration this library targets and keeps decoder inner loops
// allocation-free.
struct BitBlock {
  uint64_t bits = 0;
  uint32_t len = 0;

  static constexpr uint32_t kMaxLen = 64;

  static uint64_t mask(uint32_t len) {
    return len >= 64 ? ~0ull : (1ull << len) - 1;
  }

  static BitBlock zero(uint32_t len) { return from_bits(0, len); }

  static BitBlock from_bits(uint64_t value, uint32_t len) {
    if (len > kMaxLen) throw std::invalid_argument("BitBlock: len > 64");
    return BitBlock{value & mask(len), len};
  }

  bool bit(uint32_t i) const { return (bits >> i) & 1u; }

  void set_bit(uint32_t i, bool v) {
    bits = v ? (bits | (1ull << i)) : (bits & ~(1ull << i));
  }

  BitBlock operator^(const BitBlock& o) const {
    if (len != o.len) throw std::invalid_argument("BitBlock: length mismatch");
    return BitBlock{bits ^ o.bits, len};
  }

  bool operator==(const BitBlock&) const = default;

  // Bit 0 first, e.g. from_bits(0b10, 3) -> "010".
  std::string to_string() const {
    std::string s(len, '0');
    for (uint32_t i = 0; i < len; ++i)
      if (bit(i)) s[i] = '1';
    return s;
  }
};

// Dense matrix over GF(2), stored column-major with each column packed into a
// word (rows <= 64). Matrix-vector products are column XORs gated by the
// vector's bits, which is the hot operation in tree-code encoding.
struct Matrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<uint64_t> col;  // col[j] bit i == entry (i, j)

  Matrix() = default;
  Matrix(uint32_t r, uint32_t c) : rows(r), cols(c), col(c, 0) {
    if (r > BitBlock::kMaxLen) throw std::invalid_argument("Matrix: rows > 64");
  }

  bool get(uint32_t r, uint32_t c) const { return (col[c] >> r) & 1u; }

  void set(uint32_t r, uint32_t c, bool v) {
    col[c] = v ? (col[c] | (1ull << r)) : (col[c] & ~(1ull << r));
  }

  // y = M x over GF(2); x.len must equal cols.
  BitBlock mul(const BitBlock& x) const {
    if (x.len != cols) throw std::invalid_argument("Matrix::mul: dim mismatch");
    uint64_t acc = 0;
    uint64_t b = x.bits;
    while (b) {
      const unsigned j = static_cast<unsigned>(__builtin_ctzll(b));
      acc ^= col[j];
      b &= b - 1;
    }
    return BitBlock{acc, rows};
  }

  uint32_t rank() const;

  bool operator==(const Matrix&) const = default;
};

Matrix random_matrix(uint32_t rows, uint32_t cols, Rng& rng);

// Uniform over the set of full-column-rank rows x cols matrices
// (rejection sampling; requires cols <= rows).
Matrix random_full_column_rank(uint32_t rows, uint32_t cols, Rng& rng);

}  // namespace anytime::gf2
