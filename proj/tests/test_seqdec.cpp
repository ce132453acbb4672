// Unit tests for the sequential decoders: frozen branch-metric constants,
// bit-exact agreement between the stack decoder and a naive priority-list
// reference, noiseless single-sweep behavior, maximum-likelihood
// certification and comparison, Fano/stack agreement, and the error-delay
// bookkeeping.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "anytime/channel.hpp"
#include "anytime/rng.hpp"
#include "anytime/seqdec.hpp"
#include "anytime/treecode.hpp"

using namespace anytime;
using namespace anytime::gf2;
using namespace anytime::treecode;
using namespace anytime::seqdec;
using anytime::channel::ChannelModel;
using anytime::channel::Symbol;
using anytime::channel::make_bsc;

namespace {

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))

// Single-kernel repetition code with c_t = (b_t, b_t): the two depth-one
// codewords differ in both positions, so a reception matching one position
// of each produces an exact metric tie.
LtiCode probe_code() {
  LtiCode code;
  code.n = 2;
  code.k = 1;
  code.horizon = 1;
  code.blocks.assign(1, Matrix(2, 1));
  code.blocks[0].set(0, 0, true);
  code.blocks[0].set(1, 0, true);
  code.finalize();
  code.validate();
  return code;
}

std::vector<BitBlock> random_message(uint32_t k, uint32_t t, Rng& rng) {
  std::vector<BitBlock> msg;
  msg.reserve(t);
  for (uint32_t i = 0; i < t; ++i)
    msg.push_back(BitBlock::from_bits(rng.bits(k), k));
  return msg;
}

bool same_result(const DecodeResult& a, const DecodeResult& b) {
  return a.status == b.status && a.decoded == b.decoded && a.work == b.work &&
         a.metric_evaluations == b.metric_evaluations &&
         a.path_metric == b.path_metric;  // identical arithmetic, exact ==
}

ChannelModel make_bec(double eps) {
  return ChannelModel({"0", "e", "1"}, {1.0 - eps, eps, 0.0},
                      {0.0, eps, 1.0 - eps}, {2, 1, 0});
}

// Biased path metric of a message sequence, recomputed via branch_metric.
double path_metric_of(const LtiCode& code, const ChannelModel& ch,
                      std::span<const BitBlock> msg,
                      std::span<const Symbol> received,
                      const MetricConfig& cfg) {
  const auto cw = encode_prefix(code, msg);
  double m = 0.0;
  for (size_t t = 0; t < cw.size(); ++t)
    m += branch_metric(ch, cw[t],
                       received.subspan(t * code.n, code.n), cfg);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("seqdec");

TEST_CASE("per-symbol metric constants at the benchmark operating point") {
  // Crossover 0.01, bias 0.5: a matching symbol contributes
  // log2(0.99) + 1 - 0.5, a flipped one log2(0.01) + 1 - 0.5.
  const ChannelModel ch = make_bsc(0.01);
  const MetricConfig cfg{0.5, 1.0};
  const BitBlock zero_bit = BitBlock::zero(1);
  const std::vector<Symbol> match{0};
  const std::vector<Symbol> flip{1};
  CHECK_NEAR(branch_metric(ch, zero_bit, match, cfg), 0.48550, 1e-5);
  CHECK_NEAR(branch_metric(ch, zero_bit, flip, cfg), -6.14386, 1e-5);
}

TEST_CASE("branch metric is the position-ordered sum of symbol terms") {
  const ChannelModel ch = make_bsc(0.05);
  const MetricConfig cfg{0.3, 1.0};
  Rng rng(seed_split(5, "bm"));
  for (int trial = 0; trial < 100; ++trial) {
    const uint32_t n = 1 + static_cast<uint32_t>(rng.below(8));
    const BitBlock c = BitBlock::from_bits(rng.bits(n), n);
    std::vector<Symbol> z(n);
    for (auto& s : z) s = static_cast<Symbol>(rng.bits(1));
    double want = 0.0;
    for (uint32_t j = 0; j < n; ++j)
      want += std::log2(ch.w(z[j], c.bit(j))) - std::log2(ch.marginal(z[j])) -
              cfg.bias;
    CHECK(branch_metric(ch, c, z, cfg) == want);  // same grouping, exact
  }
}

TEST_CASE("stack decoder resolves exact metric ties toward smaller branches") {
  // With c_t = (b_t, b_t) and received (-, +), both branch values score the
  // same metric; the documented order picks the smaller message block.
  const LtiCode code = probe_code();
  const ChannelModel ch = make_bsc(0.01);
  const MetricConfig cfg{0.5, 1.0};
  const std::vector<Symbol> received{1, 0};
  const DecodeResult res = stack_decode(code, ch, received, cfg, {});
  REQUIRE(res.status == DecodeStatus::kCompleted);
  REQUIRE(res.decoded.size() == 1);
  CHECK(res.decoded[0].bits == 0);
  CHECK_NEAR(res.path_metric, 0.48550 - 6.14386, 2e-5);

  // A clean reception of the zero branch scores two matching terms.
  const std::vector<Symbol> clean{0, 0};
  const DecodeResult res2 = stack_decode(code, ch, clean, cfg, {});
  CHECK(res2.decoded[0].bits == 0);
  CHECK_NEAR(res2.path_metric, 2 * 0.48550, 2e-5);
}

TEST_CASE("stack decoder equals the naive priority-list reference") {
  Rng rng(seed_split(40, "parity"));
  const std::vector<std::pair<uint32_t, uint32_t>> shapes{
      {2, 1}, {3, 1}, {4, 1}, {3, 2}, {4, 2}, {5, 2}, {4, 3}, {6, 4}};
  const std::vector<double> ps{0.02, 0.05, 0.1};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [n, k] = shapes[rng.below(shapes.size())];
    const uint32_t t_max = std::min<uint32_t>(12 / k, 6);
    const uint32_t t = 1 + static_cast<uint32_t>(rng.below(t_max));
    const ChannelModel ch = make_bsc(ps[rng.below(ps.size())]);
    const LtiCode code = sample_lti(n, k, t, rng.bits(1) != 0, rng);
    const auto msg = random_message(k, t, rng);
    const auto sent = encode_prefix(code, msg);
    const auto received = channel::simulate_blocks(ch, sent, rng);

    const MetricConfig cfg{rng.bits(1) ? code.rate()
                                       : channel::cutoff_rate(ch),
                           1.0};
    DecoderLimits limits;
    switch (trial % 4) {
      case 0: limits.max_nodes = 200; break;
      case 1: limits.max_nodes = 40; break;
      case 2: limits.max_nodes = 200; limits.max_stack = 8; break;
      case 3: limits.max_nodes = 200; limits.backtrack_window = 1; break;
    }
    const DecodeResult got = stack_decode(code, ch, received, cfg, limits);
    const DecodeResult want =
        oracle::ref_stack_decode(code, ch, received, cfg, limits);
    CHECK(same_result(got, want));
  }
}

TEST_CASE("noiseless reception is decoded in one sweep by both decoders") {
  Rng rng(seed_split(41, "clean"));
  const ChannelModel ch = make_bsc(0.0);
  for (const auto& [n, k, t] :
       std::vector<std::tuple<uint32_t, uint32_t, uint32_t>>{
           {2, 1, 6}, {5, 2, 12}, {20, 4, 25}, {7, 3, 10}}) {
    const LtiCode code = sample_lti(n, k, t, true, rng);
    const auto msg = random_message(k, t, rng);
    const auto received = channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
    const MetricConfig cfg{code.rate(), 2.0};
    for (const bool use_fano : {false, true}) {
      const DecodeResult res =
          use_fano ? fano_decode(code, ch, received, cfg, {})
                   : stack_decode(code, ch, received, cfg, {});
      REQUIRE(res.status == DecodeStatus::kCompleted);
      CHECK(res.decoded == msg);
      REQUIRE(res.work.size() == t);
      for (uint64_t w : res.work) CHECK(w == 1);
      CHECK(res.total_work() == t);
    }
  }
}

TEST_CASE("noiseless single sweep survives a zero-width lookback window") {
  Rng rng(seed_split(42, "win0"));
  const ChannelModel ch = make_bsc(0.0);
  const LtiCode code = sample_lti(4, 1, 10, false, rng);
  const auto msg = random_message(1, 10, rng);
  const auto received = channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
  DecoderLimits limits;
  limits.backtrack_window = 0;
  const DecodeResult res =
      stack_decode(code, ch, received, {code.rate(), 1.0}, limits);
  REQUIRE(res.status == DecodeStatus::kCompleted);
  CHECK(res.decoded == msg);
  CHECK(res.total_work() == 10);
}

TEST_CASE("budget exhaustion commits the deepest best partial path") {
  Rng rng(seed_split(43, "budget"));
  const ChannelModel ch = make_bsc(0.2);
  const LtiCode code = sample_lti(2, 1, 8, false, rng);
  const auto msg = random_message(1, 8, rng);
  const auto received = channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
  DecoderLimits limits;
  limits.max_nodes = 1;
  const DecodeResult res =
      stack_decode(code, ch, received, {code.rate(), 1.0}, limits);
  CHECK(res.status == DecodeStatus::kBudgetExhausted);
  REQUIRE(res.decoded.size() == 1);  // only the root was ever expanded
  CHECK(res.total_work() == 1);
}

TEST_CASE("frontier overflow commits the deepest best partial path") {
  Rng rng(seed_split(44, "overflow"));
  const ChannelModel ch = make_bsc(0.1);
  const LtiCode code = sample_lti(3, 2, 6, false, rng);
  const auto msg = random_message(2, 6, rng);
  const auto received = channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
  DecoderLimits limits;
  limits.max_stack = 3;  // the root expansion alone pushes four children
  const DecodeResult res =
      stack_decode(code, ch, received, {code.rate(), 1.0}, limits);
  CHECK(res.status == DecodeStatus::kFrontierOverflow);
  CHECK(res.decoded.size() == 1);
}

TEST_CASE("decoder input validation") {
  Rng rng(seed_split(45, "val"));
  const ChannelModel ch = make_bsc(0.1);
  const LtiCode code = sample_lti(4, 1, 3, false, rng);
  const MetricConfig cfg{0.25, 1.0};
  const std::vector<Symbol> short_rx{0, 0, 0};  // not a multiple of n
  CHECK_THROWS(stack_decode(code, ch, short_rx, cfg, {}));
  const std::vector<Symbol> long_rx(16, 0);  // four blocks, horizon is three
  CHECK_THROWS(stack_decode(code, ch, long_rx, cfg, {}));
  const std::vector<Symbol> bad_sym{0, 0, 0, 7};
  CHECK_THROWS(stack_decode(code, ch, bad_sym, cfg, {}));
  DecoderLimits zero;
  zero.max_nodes = 0;
  const std::vector<Symbol> ok(4, 0);
  CHECK_THROWS(stack_decode(code, ch, ok, cfg, zero));
  // The Fano threshold quantum must be positive.
  CHECK_THROWS(fano_decode(code, ch, ok, {0.25, 0.0}, {}));
  // Fan-out above 2^20 branch extensions per node is refused.
  const LtiCode wide = sample_lti(22, 21, 1, false, rng);
  const std::vector<Symbol> rx22(22, 0);
  CHECK_THROWS(stack_decode(wide, ch, rx22, cfg, {}));
}

TEST_CASE("nonpositive increments certify the committed path as global max") {
  // With bias >= log2(2(1-p)) every branch metric is <= 0, so the first
  // full-length pop dominates every prefix still open: the committed path
  // maximizes the biased metric, hence also the raw likelihood.
  Rng rng(seed_split(46, "cert"));
  const ChannelModel ch = make_bsc(0.01);
  const MetricConfig cfg{1.0, 1.0};
  int completed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const LtiCode code = sample_lti(2, 1, 8, rng.bits(1) != 0, rng);
    const auto msg = random_message(1, 8, rng);
    const auto received =
        channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
    const DecodeResult res = stack_decode(code, ch, received, cfg, {});
    if (res.status != DecodeStatus::kCompleted) continue;
    ++completed;
    const auto ml = ml_decode_bruteforce(code, ch, received);
    CHECK_NEAR(oracle::ref_log_likelihood(code, ch, res.decoded, received),
               oracle::ref_log_likelihood(code, ch, ml, received), 1e-9);
    CHECK_NEAR(path_metric_of(code, ch, ml, received, cfg), res.path_metric,
               1e-9);
  }
  CHECK(completed == 200);  // tiny tree, generous budget: all must finish
}

TEST_CASE("exhaustive decoder corrects any single flip at distance three") {
  Rng rng(seed_split(47, "dmin"));
  const ChannelModel ch = make_bsc(0.05);
  const uint32_t t = 4;
  int usable = 0;
  for (int attempt = 0; attempt < 200 && usable < 25; ++attempt) {
    const LtiCode code = sample_lti(4, 1, t, false, rng);
    // Minimum distance of the unrolled linear code over all nonzero messages.
    uint32_t dmin = 1000;
    for (uint64_t v = 1; v < (1ull << t); ++v) {
      std::vector<BitBlock> m;
      for (uint32_t i = 0; i < t; ++i)
        m.push_back(BitBlock::from_bits((v >> i) & 1, 1));
      uint32_t w = 0;
      for (const auto& c : oracle::ref_encode_prefix(code, m))
        w += static_cast<uint32_t>(std::popcount(c.bits));
      dmin = std::min(dmin, w);
    }
    if (dmin < 3) continue;
    ++usable;
    const auto msg = random_message(1, t, rng);
    const auto sent = encode_prefix(code, msg);
    std::vector<Symbol> received;
    for (const auto& c : sent)
      for (uint32_t j = 0; j < code.n; ++j)
        received.push_back(c.bit(j) ? 1 : 0);
    received[rng.below(received.size())] ^= 1u;  // one flipped symbol
    CHECK(ml_decode_bruteforce(code, ch, received) == msg);
  }
  CHECK(usable == 25);
}

TEST_CASE("exhaustive decoder breaks full ties toward the smallest message") {
  // On a fully erased reception every message is equally likely.
  Rng rng(seed_split(48, "mltie"));
  const ChannelModel bec = make_bec(0.3);
  const LtiCode code = sample_lti(3, 1, 4, false, rng);
  const std::vector<Symbol> erased(12, 1);
  const auto ml = ml_decode_bruteforce(code, bec, erased);
  REQUIRE(ml.size() == 4);
  for (const auto& b : ml) CHECK(b.bits == 0);
  // Guard on the exhaustive search size.
  const LtiCode big = sample_lti(8, 5, 5, false, rng);
  const std::vector<Symbol> rx(40, 0);
  CHECK_THROWS(ml_decode_bruteforce(big, bec, rx));
}

TEST_CASE("stack decoding stays within three times the exhaustive error rate") {
  // Any-error comparison on a short all-zero-tolerant setup: rate 1/4 code,
  // crossover 0.05, cutoff-rate bias, six-block horizon.
  Rng rng_codes(seed_split(49, "gapcode"));
  const ChannelModel ch = make_bsc(0.05);
  const uint32_t t = 6;
  const LtiCode code = sample_lti(4, 1, t, true, rng_codes);
  const MetricConfig cfg{channel::cutoff_rate(ch), 1.0};
  uint64_t stack_err = 0;
  uint64_t ml_err = 0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(seed_split(1000 + trial, "gap"));
    const auto msg = random_message(1, t, rng);
    const auto received =
        channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
    const DecodeResult res = stack_decode(code, ch, received, cfg, {});
    if (res.status != DecodeStatus::kCompleted || res.decoded != msg)
      ++stack_err;
    if (ml_decode_bruteforce(code, ch, received) != msg) ++ml_err;
  }
  CHECK(ml_err > 0);  // the comparison must actually see error events
  CHECK(stack_err <= 3 * ml_err);
}

TEST_CASE("threshold decoder agrees with the stack decoder almost always") {
  Rng rng_code(seed_split(50, "fscode"));
  const ChannelModel ch = make_bsc(0.05);
  const uint32_t t = 8;
  const LtiCode code = sample_lti(4, 1, t, true, rng_code);
  const MetricConfig cfg{channel::cutoff_rate(ch), 2.0};
  int agree = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(seed_split(2000 + trial, "fs"));
    const auto msg = random_message(1, t, rng);
    const auto received =
        channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
    const DecodeResult st = stack_decode(code, ch, received, cfg, {});
    const DecodeResult fa = fano_decode(code, ch, received, cfg, {});
    if (st.decoded == fa.decoded) ++agree;
  }
  CHECK(agree >= 950);
}

TEST_CASE("threshold decoder with a huge quantum sweeps clean receptions") {
  Rng rng(seed_split(51, "bigdelta"));
  const ChannelModel ch = make_bsc(0.0);
  const LtiCode code = sample_lti(5, 2, 9, false, rng);
  const auto msg = random_message(2, 9, rng);
  const auto received =
      channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
  const DecodeResult res =
      fano_decode(code, ch, received, {code.rate(), 1000.0}, {});
  REQUIRE(res.status == DecodeStatus::kCompleted);
  CHECK(res.decoded == msg);
  CHECK(res.total_work() == 9);
}

TEST_CASE("threshold decoder budget exhaustion commits its snapshot") {
  Rng rng(seed_split(52, "fbudget"));
  const ChannelModel ch = make_bsc(0.2);
  const LtiCode code = sample_lti(2, 1, 10, false, rng);
  const auto msg = random_message(1, 10, rng);
  const auto received =
      channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
  DecoderLimits limits;
  limits.max_nodes = 3;
  const DecodeResult res =
      fano_decode(code, ch, received, {code.rate(), 1.0}, limits);
  CHECK(res.status == DecodeStatus::kBudgetExhausted);
  CHECK(res.decoded.size() <= 10);
}

TEST_CASE("first-error delay bookkeeping") {
  auto blocks = [](std::initializer_list<uint64_t> vals) {
    std::vector<BitBlock> out;
    for (uint64_t v : vals) out.push_back(BitBlock::from_bits(v, 2));
    return out;
  };
  const auto truth = blocks({1, 2, 3, 0});
  // Only block 3 wrong: oldest error index 3, delay 4 - 3 = 1.
  CHECK(first_error_delay(truth, blocks({1, 2, 0, 0})) == 1u);
  // Blocks 1 and 4 wrong: oldest error index 1, delay 4 - 1 = 3.
  CHECK(first_error_delay(truth, blocks({0, 2, 3, 1})) == 3u);
  CHECK(first_error_delay(truth, truth) == std::nullopt);
  const auto shorter = blocks({1, 2, 3});
  CHECK_THROWS(first_error_delay(truth, shorter));
}

TEST_CASE("work accounting: totals match the per-depth histogram") {
  Rng rng(seed_split(53, "work"));
  const ChannelModel ch = make_bsc(0.08);
  const LtiCode code = sample_lti(3, 1, 8, false, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const auto msg = random_message(1, 8, rng);
    const auto received =
        channel::simulate_blocks(ch, encode_prefix(code, msg), rng);
    const DecodeResult res =
        stack_decode(code, ch, received, {code.rate(), 1.0}, {});
    REQUIRE(res.status == DecodeStatus::kCompleted);
    REQUIRE(res.work.size() == 8);
    uint64_t s = 0;
    for (uint64_t w : res.work) s += w;
    CHECK(res.total_work() == s);
    // Every expansion evaluates all 2^k candidate branches.
    CHECK(res.metric_evaluations == 2 * s);
  }
}

TEST_SUITE_END();
