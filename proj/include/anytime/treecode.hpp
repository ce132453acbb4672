#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "anytime/gf2.hpp"
#include "anytime/rng.hpp"

namespace anytime::treecode {

using gf2::BitBlock;

// Linear time-invariant tree code over GF(2) with a finite working horizon.
// The code block at depth t is the truncated convolution
//     c_t = sum_{i=1..t} G_{t-i+1} b_i   (+ v_t when affine),
// so the whole code is determined by the kernel blocks G_1..G_horizon (each
// n x k) and, optionally, a translation block v_t per depth. G_1 has full
// column rank, which makes every depth's branch map injective.
struct LtiCode {
  uint32_t n = 0;        // code block length (bits per tree branch)
  uint32_t k = 0;        // message block length
  uint32_t horizon = 0;  // deepest encodable block index
  std::vector<gf2::Matrix> blocks;    // blocks[t-1] = G_t
  std::vector<uint64_t> translation;  // per-depth n-bit words; empty if linear

  // Column-flattened kernel (flat_cols[(t-1)*k + j] = column j of G_t),
  // rebuilt by finalize(); decoders walk this instead of chasing the
  // per-matrix vectors.
  std::vector<uint64_t> flat_cols;

  bool affine() const { return !translation.empty(); }
  double rate() const { return static_cast<double>(k) / n; }

  // Rebuilds flat_cols; call after constructing/mutating blocks by hand.
  void finalize();

  // Throws unless 0 < k < n <= 64, all kernel blocks are n x k, horizon
  // matches, G_1 has full column rank, and translation (when present) has one
  // in-range word per depth.
  void validate() const;
};

// Draws a code from the LTI ensemble: G_1 uniform over full-column-rank
// matrices, G_2..G_horizon i.i.d. uniform, translation blocks (when affine)
// i.i.d. uniform.
LtiCode sample_lti(uint32_t n, uint32_t k, uint32_t horizon, bool affine,
                   Rng& rng);

// Incremental encoder; keeps the message history so each step is an explicit
// truncated convolution (O(t * k) column XORs at depth t).
struct EncoderState {
  std::vector<BitBlock> history;
  uint32_t depth() const { return static_cast<uint32_t>(history.size()); }
};

// Appends b as block depth+1 and returns c_{depth+1}.
BitBlock encode_step(const LtiCode& code, EncoderState& state, const BitBlock& b);

// Encodes a whole message prefix from a fresh encoder.
std::vector<BitBlock> encode_prefix(const LtiCode& code,
                                    std::span<const BitBlock> message);

// Contribution of an already-fixed prefix b_1..b_{t-1} to the code block at
// depth t. branch_extend completes it with a candidate b_t; the result equals
// encode_step on the same prefix.
struct PartialSum {
  uint64_t acc = 0;       // XOR of G_{t-i+1} b_i over the prefix
  uint32_t next_depth = 1;  // the depth t this sum feeds (1-based)
};

PartialSum partial_sum(const LtiCode& code, std::span<const BitBlock> prefix);

BitBlock branch_extend(const LtiCode& code, const PartialSum& ps,
                       const BitBlock& b_next);

// Equal-rate sub-block shape: (n, k) -> (n/g, k/g, g) with g = gcd(n, k).
// Encoding g sub-blocks per step reduces decoder fan-out from 2^k to 2^(k/g).
struct SubblockDims {
  uint32_t n = 0, k = 0, factor = 1;
};
SubblockDims subblock_expand(uint32_t n, uint32_t k);

// Plain-text serialization. Header line "n k horizon affine", then one line
// per depth with n hex row-words (row i of G_t, bit j = column j, value
// sum_j G_t[i][j] 2^j), then (if affine) one line per depth with the n-bit
// translation word in hex. Round-trips bit-exactly.
std::string serialize(const LtiCode& code);
LtiCode parse(const std::string& text);
void save_code(const LtiCode& code, const std::string& path);
LtiCode load_code(const std::string& path);

// FNV-1a over the serialized text; campaign metadata records this.
uint64_t code_hash(const LtiCode& code);

}  // namespace anytime::treecode
