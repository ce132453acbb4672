#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "anytime/channel.hpp"
#include "anytime/gf2.hpp"
#include "anytime/treecode.hpp"

namespace anytime::seqdec {

// Metric configuration shared by both sequential decoders. The per-branch
// metric of a candidate code block c against received symbols z_1..z_n is
//   sum_j [ log2 w(z_j | c_j) - log2 p(z_j) ] - n * bias,
// with p the equiprobable-input output marginal. bias is per channel use;
// delta is the Fano threshold quantum (stack decoding ignores it).
struct MetricConfig {
  double bias = 0.0;
  double delta = 1.0;
};

struct DecoderLimits {
  uint64_t max_nodes = 1'000'000;  // branch-computation (expansion) budget
  uint64_t max_stack = 8'000'000;  // frontier size cap (stack decoder only)
  // Pops more than this many depths below the deepest visited node are
  // discarded (stack), and lookback below it is refused (Fano). Depth units
  // are tree branches. kNoWindow disables the limit.
  uint64_t backtrack_window = kNoWindow;
  static constexpr uint64_t kNoWindow = ~0ull;
};

enum class DecodeStatus : uint8_t {
  kCompleted,        // a full-length path was certified best
  kBudgetExhausted,  // ran out of branch computations
  kFrontierOverflow  // stack frontier exceeded max_stack
};

struct DecodeResult {
  std::vector<gf2::BitBlock> decoded;  // committed message path
  // work[i] = branch computations spent on tree depth i+1 (= expansions of
  // depth-i prefixes). All ones on every depth means a single clean sweep.
  std::vector<uint64_t> work;
  DecodeStatus status = DecodeStatus::kCompleted;
  double path_metric = 0.0;
  uint64_t metric_evaluations = 0;

  uint64_t total_work() const {
    uint64_t s = 0;
    for (uint64_t w : work) s += w;
    return s;
  }
};

// Node record used by the stack decoder's arena; exposed for white-box tests.
struct PathNode {
  int32_t parent = -1;
  uint32_t depth = 0;
  gf2::BitBlock block;   // branch taken into this node (root: zero block)
  double metric = 0.0;   // accumulated path metric
};

double branch_metric(const channel::ChannelModel& ch, const gf2::BitBlock& c,
                     std::span<const channel::Symbol> z,
                     const MetricConfig& cfg);

// Invoked once per branch computation with the expanded node's message
// prefix (span size = the node's depth; the root expansion passes an empty
// span). Lets a caller that knows the transmitted message attribute each
// computation to the tree node where the expanded path leaves the correct
// path — the per-node work whose tail the complexity campaign measures.
// Decoding behavior is unaffected; an empty function disables the hook.
using ExpansionObserver = std::function<void(std::span<const gf2::BitBlock>)>;

// Stack (best-first) sequential decoder. Pops the best frontier node -- ties
// broken toward larger depth, then smaller branch-block value, then earlier
// creation -- and expands all 2^k extensions. On budget exhaustion or
// frontier overflow the deepest best-metric path created so far is committed.
DecodeResult stack_decode(const treecode::LtiCode& code,
                          const channel::ChannelModel& ch,
                          std::span<const channel::Symbol> received,
                          const MetricConfig& cfg, const DecoderLimits& limits,
                          const ExpansionObserver& observer = {});

// Fano sequential decoder (threshold variant): single path plus lookback,
// threshold moves in multiples of cfg.delta (> 0 required), tightened on
// first visits and lowered when neither a forward nor a backward move is
// possible. Memory is O(path length); revisits recompute branch metrics and
// are charged to the same work counters as the stack decoder.
DecodeResult fano_decode(const treecode::LtiCode& code,
                         const channel::ChannelModel& ch,
                         std::span<const channel::Symbol> received,
                         const MetricConfig& cfg, const DecoderLimits& limits,
                         const ExpansionObserver& observer = {});

// Exhaustive maximum-likelihood decoder over all 2^(k t) messages; testing
// oracle only (requires k * t <= 24). Ties resolve to the lexicographically
// smallest message sequence.
std::vector<gf2::BitBlock> ml_decode_bruteforce(
    const treecode::LtiCode& code, const channel::ChannelModel& ch,
    std::span<const channel::Symbol> received);

// Delay of the first (oldest) erroneous block: d = t - oldest_error_index
// (1-based); nullopt when the sequences agree. Used to bin anytime error
// events: an event at delay d means blocks older than t - d were all correct.
std::optional<uint32_t> first_error_delay(
    std::span<const gf2::BitBlock> truth,
    std::span<const gf2::BitBlock> decoded);

}  // namespace anytime::seqdec
