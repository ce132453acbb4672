#include "anytime/treecode.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace anytime::treecode {

void LtiCode::finalize() {
  flat_cols.assign(static_cast<size_t>(horizon) * k, 0);
  for (uint32_t t = 0; t < horizon; ++t)
    for (uint32_t j = 0; j < k; ++j)
      flat_cols[static_cast<size_t>(t) * k + j] = blocks[t].col[j];
}

void LtiCode::validate() const {
  if (k == 0 || n <= k) throw std::invalid_argument("LtiCode: need 0 < k < n");
  if (n > gf2::BitBlock::kMaxLen)
    throw std::invalid_argument("LtiCode: n > 64 unsupported");
  if (horizon == 0 || blocks.size() != horizon)
    throw std::invalid_argument("LtiCode: kernel size != horizon");
  for (const auto& g : blocks)
    if (g.rows != n || g.cols != k)
      throw std::invalid_argument("LtiCode: kernel block dimension mismatch");
  if (blocks[0].rank() != k)
    throw std::invalid_argument("LtiCode: G_1 must have full column rank");
  if (!translation.empty()) {
    if (translation.size() != horizon)
      throw std::invalid_argument("LtiCode: translation size != horizon");
    for (uint64_t v : translation)
      if (v & ~gf2::BitBlock::mask(n))
        throw std::invalid_argument("LtiCode: translation word out of range");
  }
  if (flat_cols.size() != static_cast<size_t>(horizon) * k)
    throw std::invalid_argument("LtiCode: finalize() not called");
}

LtiCode sample_lti(uint32_t n, uint32_t k, uint32_t horizon, bool affine,
                   Rng& rng) {
  if (k == 0 || n <= k) throw std::invalid_argument("sample_lti: need 0 < k < n");
  if (n > gf2::BitBlock::kMaxLen)
    throw std::invalid_argument("sample_lti: n > 64 unsupported");
  if (horizon == 0) throw std::invalid_argument("sample_lti: horizon == 0");
  LtiCode code;
  code.n = n;
  code.k = k;
  code.horizon = horizon;
  code.blocks.reserve(horizon);
  code.blocks.push_back(gf2::random_full_column_rank(n, k, rng));
  for (uint32_t t = 1; t < horizon; ++t)
    code.blocks.push_back(gf2::random_matrix(n, k, rng));
  if (affine) {
    code.translation.resize(horizon);
    for (uint32_t t = 0; t < horizon; ++t) code.translation[t] = rng.bits(n);
  }
  code.finalize();
  return code;
}

static uint64_t convolve(const LtiCode& code, std::span<const BitBlock> prefix,
                         uint32_t t) {
  // acc = sum_{i=1..t} G_{t-i+1} b_i, all 1-based; prefix[i-1] = b_i.
  uint64_t acc = 0;
  for (uint32_t i = 1; i <= t; ++i) {
    const size_t base = static_cast<size_t>(t - i) * code.k;
    uint64_t b = prefix[i - 1].bits;
    while (b) {
      const unsigned j = static_cast<unsigned>(__builtin_ctzll(b));
      acc ^= code.flat_cols[base + j];
      b &= b - 1;
    }
  }
  return acc;
}

BitBlock encode_step(const LtiCode& code, EncoderState& state, const BitBlock& b) {
  if (b.len != code.k) throw std::invalid_argument("encode_step: block length != k");
  if (state.depth() >= code.horizon)
    throw std::out_of_range("encode_step: past code horizon");
  state.history.push_back(b);
  const uint32_t t = state.depth();
  uint64_t acc = convolve(code, state.history, t);
  if (code.affine()) acc ^= code.translation[t - 1];
  return BitBlock{acc, code.n};
}

std::vector<BitBlock> encode_prefix(const LtiCode& code,
                                    std::span<const BitBlock> message) {
  EncoderState st;
  std::vector<BitBlock> out;
  out.reserve(message.size());
  for (const auto& b : message) out.push_back(encode_step(code, st, b));
  return out;
}

PartialSum partial_sum(const LtiCode& code, std::span<const BitBlock> prefix) {
  const uint32_t t = static_cast<uint32_t>(prefix.size()) + 1;
  if (t > code.horizon) throw std::out_of_range("partial_sum: past code horizon");
  for (const auto& b : prefix)
    if (b.len != code.k)
      throw std::invalid_argument("partial_sum: block length != k");
  PartialSum ps;
  ps.next_depth = t;
  // Only terms with i <= t-1 appear; the i = t term belongs to the candidate.
  uint64_t acc = 0;
  for (uint32_t i = 1; i < t; ++i) {
    const size_t base = static_cast<size_t>(t - i) * code.k;
    uint64_t b = prefix[i - 1].bits;
    while (b) {
      const unsigned j = static_cast<unsigned>(__builtin_ctzll(b));
      acc ^= code.flat_cols[base + j];
      b &= b - 1;
    }
  }
  ps.acc = acc;
  return ps;
}

BitBlock branch_extend(const LtiCode& code, const PartialSum& ps,
                       const BitBlock& b_next) {
  if (b_next.len != code.k)
    throw std::invalid_argument("branch_extend: block length != k");
  if (ps.next_depth < 1 || ps.next_depth > code.horizon)
    throw std::out_of_range("branch_extend: cache depth out of range");
  uint64_t acc = ps.acc;
  uint64_t b = b_next.bits;
  while (b) {
    const unsigned j = static_cast<unsigned>(__builtin_ctzll(b));
    acc ^= code.flat_cols[j];  // G_1 columns sit at the start of flat_cols
    b &= b - 1;
  }
  if (code.affine()) acc ^= code.translation[ps.next_depth - 1];
  return BitBlock{acc, code.n};
}

SubblockDims subblock_expand(uint32_t n, uint32_t k) {
  if (k == 0 || n <= k)
    throw std::invalid_argument("subblock_expand: need 0 < k < n");
  const uint32_t g = std::gcd(n, k);
  return SubblockDims{n / g, k / g, g};
}

std::string serialize(const LtiCode& code) {
  std::ostringstream os;
  os << code.n << ' ' << code.k << ' ' << code.horizon << ' '
     << (code.affine() ? 1 : 0) << '\n';
  os << std::hex;
  for (uint32_t t = 0; t < code.horizon; ++t) {
    const gf2::Matrix& g = code.blocks[t];
    for (uint32_t r = 0; r < code.n; ++r) {
      uint64_t row = 0;
      for (uint32_t j = 0; j < code.k; ++j)
        if (g.get(r, j)) row |= 1ull << j;
      os << row << (r + 1 == code.n ? '\n' : ' ');
    }
  }
  if (code.affine())
    for (uint32_t t = 0; t < code.horizon; ++t)
      os << code.translation[t] << '\n';
  return os.str();
}

LtiCode parse(const std::string& text) {
  std::istringstream is(text);
  LtiCode code;
  int affine = 0;
  if (!(is >> code.n >> code.k >> code.horizon >> affine))
    throw std::invalid_argument("treecode parse: bad header");
  if (affine != 0 && affine != 1)
    throw std::invalid_argument("treecode parse: affine flag must be 0/1");
  if (code.k == 0 || code.n <= code.k || code.n > gf2::BitBlock::kMaxLen ||
      code.horizon == 0)
    throw std::invalid_argument("treecode parse: bad dimensions");
  is >> std::hex;
  code.blocks.reserve(code.horizon);
  for (uint32_t t = 0; t < code.horizon; ++t) {
    gf2::Matrix g(code.n, code.k);
    for (uint32_t r = 0; r < code.n; ++r) {
      uint64_t row = 0;
      if (!(is >> row)) throw std::invalid_argument("treecode parse: truncated kernel");
      if (row & ~gf2::BitBlock::mask(code.k))
        throw std::invalid_argument("treecode parse: row word out of range");
      for (uint32_t j = 0; j < code.k; ++j)
        if ((row >> j) & 1u) g.set(r, j, true);
    }
    code.blocks.push_back(std::move(g));
  }
  if (affine) {
    code.translation.resize(code.horizon);
    for (uint32_t t = 0; t < code.horizon; ++t) {
      if (!(is >> code.translation[t]))
        throw std::invalid_argument("treecode parse: truncated translation");
      if (code.translation[t] & ~gf2::BitBlock::mask(code.n))
        throw std::invalid_argument("treecode parse: translation out of range");
    }
  }
  code.finalize();
  code.validate();
  return code;
}

void save_code(const LtiCode& code, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_code: cannot open " + path);
  f << serialize(code);
  if (!f) throw std::runtime_error("save_code: write failed: " + path);
}

LtiCode load_code(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_code: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

uint64_t code_hash(const LtiCode& code) {
  const std::string s = serialize(code);
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace anytime::treecode
