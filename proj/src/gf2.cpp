#include "anytime/gf2.hpp"

namespace anytime::gf2 {

uint32_t Matrix::rank() const {
  // Gaussian elimination on a scratch copy of the columns.
  std::vector<uint64_t> c = col;
  uint32_t r = 0;
  for (uint32_t j = 0; j < cols; ++j) {
    // Find a column with a set bit not yet used as a pivot.
    uint32_t pivot = 0;
    bool found = false;
    for (uint32_t row = 0; row < rows && !found; ++row) {
      if ((c[j] >> row) & 1u) {
        pivot = row;
        found = true;
      }
    }
    if (!found) continue;
    ++r;
    for (uint32_t j2 = j + 1; j2 < cols; ++j2) {
      if ((c[j2] >> pivot) & 1u) c[j2] ^= c[j];
    }
  }
  return r;
}

Matrix random_matrix(uint32_t rows, uint32_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (uint32_t j = 0; j < cols; ++j) m.col[j] = rng.bits(rows);
  return m;
}

Matrix random_full_column_rank(uint32_t rows, uint32_t cols, Rng& rng) {
  if (cols > rows)
    throw std::invalid_argument("random_full_column_rank: cols > rows");
  // Rejection keeps the distribution uniform over the full-rank subset; the
  // acceptance probability is > 0.28 for any dimensions, so this terminates
  // quickly in practice.
  for (;;) {
    Matrix m = random_matrix(rows, cols, rng);
    if (m.rank() == cols) return m;
  }
}

}  // namespace anytime::gf2
