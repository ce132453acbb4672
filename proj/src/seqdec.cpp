#include "anytime/seqdec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

namespace anytime::seqdec {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// One metric term: code bit `bit` against received symbol z. Every decoder
// and the public branch_metric sum exactly these doubles in position order,
// so independently computed path metrics agree bit-for-bit (ties included).
inline double symbol_term(const channel::ChannelModel& ch, channel::Symbol z,
                          bool bit, double bias) {
  const double w = ch.w(z, bit);
  if (w <= 0.0) return kNegInf;
  return std::log2(w) - std::log2(ch.marginal(z)) - bias;
}

uint32_t checked_block_count(const treecode::LtiCode& code,
                             const channel::ChannelModel& ch,
                             std::span<const channel::Symbol> received) {
  code.validate();
  if (received.empty() || received.size() % code.n != 0)
    throw std::invalid_argument("decode: received length not a multiple of n");
  const uint64_t t = received.size() / code.n;
  if (t > code.horizon)
    throw std::invalid_argument("decode: received exceeds code horizon");
  for (channel::Symbol z : received)
    if (z >= ch.size()) throw std::invalid_argument("decode: bad symbol");
  return static_cast<uint32_t>(t);
}

// Products G_1 * b for all 2^k candidate blocks (subset-XOR table); keeps the
// child loop branch-free. Falls back to nothing above 20 bits -- decoding
// with such fan-out is impractical anyway and callers are expected to use
// sub-block encoding instead.
std::vector<uint64_t> g1_products(const treecode::LtiCode& code) {
  if (code.k > 20)
    throw std::invalid_argument(
        "decode: k > 20 unsupported; use sub-block encoding");
  std::vector<uint64_t> tab(size_t{1} << code.k, 0);
  for (uint64_t cand = 1; cand < tab.size(); ++cand) {
    const uint64_t low = cand & (~cand + 1);
    tab[cand] =
        tab[cand ^ low] ^
        code.flat_cols[static_cast<unsigned>(__builtin_ctzll(low))];
  }
  return tab;
}

// Lazily filled per-depth metric terms: term(depth d0-based, position j,
// code bit b). Recomputation would give identical doubles; the cache is
// purely a speed matter.
class DepthTerms {
 public:
  DepthTerms(const channel::ChannelModel& ch,
             std::span<const channel::Symbol> received, uint32_t n,
             double bias)
      : ch_(ch), z_(received), n_(n), bias_(bias),
        terms_(2 * received.size()), filled_(received.size() / n, false) {}

  // Pointers to n doubles each for code-bit 0 / code-bit 1 at tree depth d.
  std::pair<const double*, const double*> at(uint32_t d) {
    if (!filled_[d]) {
      for (uint32_t j = 0; j < n_; ++j) {
        const channel::Symbol z = z_[size_t{d} * n_ + j];
        terms_[2 * size_t{d} * n_ + j] = symbol_term(ch_, z, false, bias_);
        terms_[(2 * size_t{d} + 1) * n_ + j] = symbol_term(ch_, z, true, bias_);
      }
      filled_[d] = true;
    }
    const double* base = terms_.data() + 2 * size_t{d} * n_;
    return {base, base + n_};
  }

 private:
  const channel::ChannelModel& ch_;
  std::span<const channel::Symbol> z_;
  uint32_t n_;
  double bias_;
  std::vector<double> terms_;
  std::vector<uint8_t> filled_;
};

inline double block_metric(uint64_t code_bits, uint32_t n, const double* t0,
                           const double* t1) {
  double m = 0.0;
  for (uint32_t j = 0; j < n; ++j)
    m += ((code_bits >> j) & 1u) ? t1[j] : t0[j];
  return m;
}

}  // namespace

double branch_metric(const channel::ChannelModel& ch, const gf2::BitBlock& c,
                     std::span<const channel::Symbol> z,
                     const MetricConfig& cfg) {
  if (z.size() != c.len)
    throw std::invalid_argument("branch_metric: symbol count != block length");
  double m = 0.0;
  for (uint32_t j = 0; j < c.len; ++j) {
    if (z[j] >= ch.size())
      throw std::invalid_argument("branch_metric: bad symbol");
    m += symbol_term(ch, z[j], c.bit(j), cfg.bias);
  }
  return m;
}

DecodeResult stack_decode(const treecode::LtiCode& code,
                          const channel::ChannelModel& ch,
                          std::span<const channel::Symbol> received,
                          const MetricConfig& cfg, const DecoderLimits& limits,
                          const ExpansionObserver& observer) {
  const uint32_t t_blocks = checked_block_count(code, ch, received);
  if (limits.max_nodes == 0)
    throw std::invalid_argument("stack_decode: max_nodes must be >= 1");
  const uint32_t n = code.n, k = code.k;
  const std::vector<uint64_t> g1 = g1_products(code);
  DepthTerms terms(ch, received, n, cfg.bias);
  std::vector<gf2::BitBlock> observed_prefix;
  if (observer)
    observed_prefix.assign(t_blocks, gf2::BitBlock::zero(k));

  std::vector<PathNode> nodes;
  nodes.push_back(PathNode{-1, 0, gf2::BitBlock::zero(k), 0.0});

  // Strict total order; the id tiebreak makes pop order independent of heap
  // internals, which the reference-oracle equivalence tests rely on.
  auto better = [&nodes](uint32_t a, uint32_t b) {
    const PathNode& x = nodes[a];
    const PathNode& y = nodes[b];
    if (x.metric != y.metric) return x.metric > y.metric;
    if (x.depth != y.depth) return x.depth > y.depth;
    if (x.block.bits != y.block.bits) return x.block.bits < y.block.bits;
    return a < b;
  };
  auto heap_cmp = [&better](uint32_t a, uint32_t b) { return better(b, a); };
  std::priority_queue<uint32_t, std::vector<uint32_t>, decltype(heap_cmp)>
      frontier(heap_cmp);
  frontier.push(0);

  // Deepest-then-best-metric node created so far; committed on abnormal stops.
  uint32_t best_partial = 0;
  auto consider_partial = [&](uint32_t id) {
    const PathNode& x = nodes[id];
    const PathNode& y = nodes[best_partial];
    if (x.depth != y.depth ? x.depth > y.depth : x.metric > y.metric)
      best_partial = id;
  };

  DecodeResult result;
  result.work.assign(t_blocks, 0);
  uint64_t expansions = 0;
  uint32_t deepest_popped = 0;

  auto commit = [&](uint32_t id, DecodeStatus status) {
    result.status = status;
    result.path_metric = nodes[id].metric;
    result.decoded.resize(nodes[id].depth);
    for (int32_t u = static_cast<int32_t>(id); nodes[u].depth > 0;
         u = nodes[u].parent)
      result.decoded[nodes[u].depth - 1] = nodes[u].block;
  };

  for (;;) {
    if (frontier.empty()) {
      // Only reachable when zero-probability transitions prune every branch.
      commit(best_partial, DecodeStatus::kBudgetExhausted);
      return result;
    }
    const uint32_t id = frontier.top();
    frontier.pop();
    if (limits.backtrack_window != DecoderLimits::kNoWindow &&
        nodes[id].depth + limits.backtrack_window < deepest_popped)
      continue;  // stale: fell out of the backtrack window
    deepest_popped = std::max(deepest_popped, nodes[id].depth);
    if (nodes[id].depth == t_blocks) {
      commit(id, DecodeStatus::kCompleted);
      return result;
    }
    if (expansions == limits.max_nodes) {
      commit(best_partial, DecodeStatus::kBudgetExhausted);
      return result;
    }

    // Expand: one partial-sum walk up the prefix, then 2^k cheap extensions.
    ++expansions;
    const uint32_t d = nodes[id].depth;
    ++result.work[d];
    const uint32_t target = d + 1;
    uint64_t acc = 0;
    for (int32_t u = static_cast<int32_t>(id); nodes[u].depth > 0;
         u = nodes[u].parent) {
      if (observer) observed_prefix[nodes[u].depth - 1] = nodes[u].block;
      const size_t base = size_t{target - nodes[u].depth} * k;
      uint64_t b = nodes[u].block.bits;
      while (b) {
        acc ^= code.flat_cols[base + static_cast<unsigned>(__builtin_ctzll(b))];
        b &= b - 1;
      }
    }
    if (code.affine()) acc ^= code.translation[target - 1];
    if (observer) observer(std::span(observed_prefix.data(), d));

    const auto [t0, t1] = terms.at(d);
    const double parent_metric = nodes[id].metric;
    for (uint64_t cand = 0; cand < (uint64_t{1} << k); ++cand) {
      ++result.metric_evaluations;
      const double m = block_metric(acc ^ g1[cand], n, t0, t1);
      if (m == kNegInf) continue;  // zero-probability branch
      const uint32_t child = static_cast<uint32_t>(nodes.size());
      nodes.push_back(PathNode{static_cast<int32_t>(id), target,
                               gf2::BitBlock::from_bits(cand, k),
                               parent_metric + m});
      consider_partial(child);
      frontier.push(child);
    }
    if (frontier.size() > limits.max_stack) {
      commit(best_partial, DecodeStatus::kFrontierOverflow);
      return result;
    }
  }
}

DecodeResult fano_decode(const treecode::LtiCode& code,
                         const channel::ChannelModel& ch,
                         std::span<const channel::Symbol> received,
                         const MetricConfig& cfg, const DecoderLimits& limits,
                         const ExpansionObserver& observer) {
  const uint32_t t_blocks = checked_block_count(code, ch, received);
  if (!(cfg.delta > 0.0))
    throw std::invalid_argument("fano_decode: delta must be > 0");
  if (limits.max_nodes == 0)
    throw std::invalid_argument("fano_decode: max_nodes must be >= 1");
  const uint32_t n = code.n, k = code.k;
  const std::vector<uint64_t> g1 = g1_products(code);
  DepthTerms terms(ch, received, n, cfg.bias);
  const double delta = cfg.delta;

  struct Child {
    double metric;  // total path metric through this branch
    uint32_t cand;
  };
  struct FanoNode {
    uint32_t depth = 0;
    gf2::BitBlock block;
    double metric = 0.0;
    uint32_t next = 0;           // index of the branch currently under test
    std::vector<Child> children;  // sorted: metric desc, then cand asc
  };

  std::vector<FanoNode> path;
  path.push_back(FanoNode{0, gf2::BitBlock::zero(k), 0.0, 0, {}});

  DecodeResult result;
  result.work.assign(t_blocks, 0);
  uint64_t builds = 0;

  // Deepest best-metric path seen; committed on budget exhaustion.
  std::vector<gf2::BitBlock> snap_blocks;
  uint32_t snap_depth = 0;
  double snap_metric = 0.0;

  auto commit_snapshot = [&]() {
    result.status = DecodeStatus::kBudgetExhausted;
    result.decoded = snap_blocks;
    result.path_metric = snap_metric;
  };

  // Computes the children of path.back(); returns false when the budget is
  // spent. Work accounting matches the stack decoder: one branch computation
  // per (re)build of a node's child set.
  std::vector<gf2::BitBlock> observed_prefix;
  if (observer)
    observed_prefix.assign(t_blocks, gf2::BitBlock::zero(k));

  auto build_children = [&]() -> bool {
    if (builds == limits.max_nodes) return false;
    ++builds;
    FanoNode& cur = path.back();
    ++result.work[cur.depth];
    if (observer) {
      for (uint32_t i = 1; i <= cur.depth; ++i)
        observed_prefix[i - 1] = path[i].block;
      observer(std::span(observed_prefix.data(), cur.depth));
    }
    const uint32_t target = cur.depth + 1;
    uint64_t acc = 0;
    for (uint32_t i = 1; i <= cur.depth; ++i) {
      const size_t base = size_t{target - i} * k;
      uint64_t b = path[i].block.bits;
      while (b) {
        acc ^= code.flat_cols[base + static_cast<unsigned>(__builtin_ctzll(b))];
        b &= b - 1;
      }
    }
    if (code.affine()) acc ^= code.translation[target - 1];
    const auto [t0, t1] = terms.at(cur.depth);
    cur.children.clear();
    cur.children.reserve(size_t{1} << k);
    for (uint64_t cand = 0; cand < (uint64_t{1} << k); ++cand) {
      ++result.metric_evaluations;
      cur.children.push_back(
          Child{cur.metric + block_metric(acc ^ g1[cand], n, t0, t1),
                static_cast<uint32_t>(cand)});
    }
    // stable: equal metrics keep candidate order, so ties resolve to the
    // smaller block value as in the stack decoder.
    std::stable_sort(cur.children.begin(), cur.children.end(),
                     [](const Child& a, const Child& b) {
                       return a.metric > b.metric;
                     });
    return true;
  };

  double threshold = 0.0;
  if (!build_children()) {  // max_nodes >= 1, so this cannot fail
    commit_snapshot();
    return result;
  }

  for (;;) {
    FanoNode& cur = path.back();
    const double ahead = cur.next < cur.children.size()
                             ? cur.children[cur.next].metric
                             : kNegInf;
    if (ahead >= threshold) {
      // Forward move; tighten the threshold on first visits.
      if (cur.metric < threshold + delta)
        while (ahead >= threshold + delta) threshold += delta;
      const Child& ch_taken = cur.children[cur.next];
      FanoNode next_node;
      next_node.depth = cur.depth + 1;
      next_node.block = gf2::BitBlock::from_bits(ch_taken.cand, k);
      next_node.metric = ch_taken.metric;
      path.push_back(std::move(next_node));
      const FanoNode& now = path.back();
      if (now.depth > snap_depth ||
          (now.depth == snap_depth && now.metric > snap_metric)) {
        snap_depth = now.depth;
        snap_metric = now.metric;
        snap_blocks.resize(now.depth);
        for (uint32_t i = 1; i <= now.depth; ++i)
          snap_blocks[i - 1] = path[i].block;
      }
      if (now.depth == t_blocks) {
        result.status = DecodeStatus::kCompleted;
        result.decoded.resize(t_blocks);
        for (uint32_t i = 1; i <= t_blocks; ++i)
          result.decoded[i - 1] = path[i].block;
        result.path_metric = now.metric;
        return result;
      }
      if (!build_children()) {
        commit_snapshot();
        return result;
      }
      continue;
    }

    // No forward move. Back up if the previous node tolerates the threshold
    // and the window allows retreating; otherwise lower the threshold and
    // retry from the best branch.
    bool can_back = path.size() > 1 && path[path.size() - 2].metric >= threshold;
    if (can_back && limits.backtrack_window != DecoderLimits::kNoWindow) {
      // Popping would place the path head at depth cur.depth - 1; refuse to
      // drop more than backtrack_window below the deepest depth reached.
      if (uint64_t{cur.depth - 1} + limits.backtrack_window < snap_depth)
        can_back = false;
    }
    if (!can_back) {
      if (cur.children.empty() ||
          cur.children.front().metric == kNegInf) {
        // Every branch has probability zero and there is nothing to retreat
        // to; lowering the threshold forever would not help.
        commit_snapshot();
        return result;
      }
      threshold -= delta;
      cur.next = 0;
    } else {
      path.pop_back();
      ++path.back().next;
    }
  }
}

std::vector<gf2::BitBlock> ml_decode_bruteforce(
    const treecode::LtiCode& code, const channel::ChannelModel& ch,
    std::span<const channel::Symbol> received) {
  const uint32_t t_blocks = checked_block_count(code, ch, received);
  if (uint64_t{code.k} * t_blocks > 24)
    throw std::invalid_argument("ml_decode_bruteforce: k * t > 24");
  const uint32_t n = code.n, k = code.k;

  // Pure likelihood terms (no marginal, no bias): argmax is what matters and
  // ties resolve by lexicographic DFS order.
  std::vector<gf2::BitBlock> best(t_blocks, gf2::BitBlock::zero(k));
  double best_metric = kNegInf;
  std::vector<gf2::BitBlock> prefix;
  prefix.reserve(t_blocks);

  std::function<void(uint32_t, double)> dfs = [&](uint32_t depth,
                                                  double metric) {
    if (depth == t_blocks) {
      if (metric > best_metric) {
        best_metric = metric;
        best = prefix;
      }
      return;
    }
    const treecode::PartialSum ps = treecode::partial_sum(code, prefix);
    for (uint64_t cand = 0; cand < (uint64_t{1} << k); ++cand) {
      const gf2::BitBlock b = gf2::BitBlock::from_bits(cand, k);
      const gf2::BitBlock c = treecode::branch_extend(code, ps, b);
      double m = 0.0;
      for (uint32_t j = 0; j < n; ++j) {
        const double w = ch.w(received[size_t{depth} * n + j], c.bit(j));
        if (w <= 0.0) {
          m = kNegInf;
          break;
        }
        m += std::log2(w);
      }
      if (m == kNegInf) continue;  // the all-zeros default stands if no
                                   // message has positive likelihood
      prefix.push_back(b);
      dfs(depth + 1, metric + m);
      prefix.pop_back();
    }
  };
  dfs(0, 0.0);
  return best;
}

std::optional<uint32_t> first_error_delay(
    std::span<const gf2::BitBlock> truth,
    std::span<const gf2::BitBlock> decoded) {
  if (truth.size() != decoded.size())
    throw std::invalid_argument("first_error_delay: length mismatch");
  const uint32_t t = static_cast<uint32_t>(truth.size());
  for (uint32_t i = 0; i < t; ++i)
    if (!(truth[i] == decoded[i])) return t - (i + 1);
  return std::nullopt;
}

}  // namespace anytime::seqdec
