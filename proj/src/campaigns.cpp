#include "anytime/campaigns.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace anytime::harness {

namespace {

using channel::ChannelModel;
using gf2::BitBlock;
using treecode::LtiCode;

std::string decoder_name(DecoderKind kind) {
  return kind == DecoderKind::kStack ? "stack" : "fano";
}

DecoderKind parse_decoder(const std::string& name) {
  if (name == "stack") return DecoderKind::kStack;
  if (name == "fano") return DecoderKind::kFano;
  throw std::invalid_argument("unknown decoder '" + name +
                              "' (expected stack or fano)");
}

seqdec::DecoderLimits limits_from(const KeyValueConfig& kv) {
  seqdec::DecoderLimits lim;
  lim.max_nodes = kv.get_u64("max_nodes", lim.max_nodes);
  lim.max_stack = kv.get_u64("max_stack", lim.max_stack);
  lim.backtrack_window = kv.get_u64("window", lim.backtrack_window);
  return lim;
}

// Shared per-trial harness: random message prefix -> encode -> channel ->
// sequential decode. Everything is drawn from the trial's own stream.
struct TrialOutcome {
  seqdec::DecodeResult result;
  std::vector<BitBlock> message;
};

TrialOutcome run_trial(const LtiCode& code, const ChannelModel& ch,
                       uint32_t t, DecoderKind decoder,
                       const seqdec::MetricConfig& metric,
                       const seqdec::DecoderLimits& limits, Rng& rng) {
  TrialOutcome out;
  out.message.reserve(t);
  for (uint32_t i = 0; i < t; ++i)
    out.message.push_back(BitBlock::from_bits(rng.bits(code.k), code.k));
  const auto codeword = treecode::encode_prefix(code, out.message);
  const auto received = channel::simulate_blocks(ch, codeword, rng);
  out.result = decoder == DecoderKind::kStack
                   ? seqdec::stack_decode(code, ch, received, metric, limits)
                   : seqdec::fano_decode(code, ch, received, metric, limits);
  return out;
}

LtiCode obtain_code(const std::string& code_file, uint32_t n, uint32_t k,
                    uint32_t horizon, bool affine, uint64_t seed) {
  if (!code_file.empty()) {
    LtiCode code = treecode::load_code(code_file);
    if (code.horizon < horizon)
      throw std::invalid_argument("loaded code horizon " +
                                  std::to_string(code.horizon) +
                                  " is shorter than the requested prefix " +
                                  std::to_string(horizon));
    return code;
  }
  Rng rng(seed_split(seed, "code"));
  return treecode::sample_lti(n, k, horizon, affine, rng);
}

void put(Csv& csv, const std::string& key, const std::string& value) {
  csv.metadata.emplace_back(key, value);
}
void put(Csv& csv, const std::string& key, double value) {
  csv.metadata.emplace_back(key, format_double(value));
}
void put(Csv& csv, const std::string& key, uint64_t value) {
  csv.metadata.emplace_back(key, format_u64(value));
}

void put_limits(Csv& csv, const seqdec::DecoderLimits& lim) {
  put(csv, "max_nodes", lim.max_nodes);
  put(csv, "max_stack", lim.max_stack);
  put(csv, "window",
      lim.backtrack_window == seqdec::DecoderLimits::kNoWindow
          ? std::string("none")
          : format_u64(lim.backtrack_window));
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

void run_trials(uint64_t trials, unsigned workers,
                const std::function<void(uint64_t)>& fn) {
  if (workers <= 1 || trials <= 1) {
    for (uint64_t i = 0; i < trials; ++i) fn(i);
    return;
  }
  std::atomic<uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto body = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const uint64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= trials) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  const unsigned count =
      static_cast<unsigned>(std::min<uint64_t>(workers, trials));
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// exponents

ExponentsConfig ExponentsConfig::from(const KeyValueConfig& kv) {
  kv.require_known({"p", "rate_step"});
  ExponentsConfig cfg;
  cfg.p = kv.get_double("p", cfg.p);
  cfg.rate_step = kv.get_double("rate_step", cfg.rate_step);
  if (cfg.rate_step <= 0)
    throw std::invalid_argument("rate_step must be positive");
  return cfg;
}

ExponentsResult run_exponents(const ExponentsConfig& cfg) {
  const ChannelModel ch = channel::make_bsc(cfg.p);
  ExponentsResult res;
  res.cutoff = channel::cutoff_rate(ch);
  res.critical = channel::critical_rate(ch);
  res.cap = channel::capacity(ch);
  for (uint64_t i = 1;; ++i) {
    const double rate = static_cast<double>(i) * cfg.rate_step;
    if (rate >= res.cap) break;
    ExponentsRow row;
    row.rate = rate;
    const auto g = channel::gallager_exponent(ch, rate);
    row.gallager = g.value;
    row.gallager_rho = g.rho_star;
    const auto jc = channel::jelinek_exponent(ch, res.cutoff, rate);
    row.j_bias_cutoff = jc.value;
    row.j_bias_cutoff_rho = jc.rho_star;
    const auto jr = channel::jelinek_exponent(ch, rate, rate);
    row.j_bias_rate = jr.value;
    row.j_bias_rate_rho = jr.rho_star;
    res.rows.push_back(row);
  }
  return res;
}

Csv exponents_csv(const ExponentsConfig& cfg, const ExponentsResult& res) {
  Csv csv;
  put(csv, "campaign", std::string("exponents"));
  put(csv, "channel", std::string("bsc"));
  put(csv, "p", cfg.p);
  put(csv, "rate_step", cfg.rate_step);
  put(csv, "cutoff_rate", res.cutoff);
  put(csv, "critical_rate", res.critical);
  put(csv, "capacity", res.cap);
  csv.header = {"rate",
                "gallager",
                "gallager_rho",
                "jelinek_bias_cutoff",
                "jelinek_bias_rate",
                "cutoff_rate",
                "critical_rate"};
  const std::string cutoff = format_double(res.cutoff);
  const std::string critical = format_double(res.critical);
  for (const auto& r : res.rows) {
    csv.rows.push_back({format_double(r.rate), format_double(r.gallager),
                        format_double(r.gallager_rho),
                        format_double(r.j_bias_cutoff),
                        format_double(r.j_bias_rate), cutoff, critical});
  }
  return csv;
}

// ---------------------------------------------------------------------------
// anytime

AnytimeConfig AnytimeConfig::from(const KeyValueConfig& kv) {
  kv.require_known({"p", "n", "k", "t", "trials", "affine", "bias", "decoder",
                    "delta", "d0", "d_max", "max_nodes", "max_stack", "window",
                    "code_file", "cert_eps"});
  AnytimeConfig cfg;
  cfg.p = kv.get_double("p", cfg.p);
  cfg.n = static_cast<uint32_t>(kv.get_u64("n", cfg.n));
  cfg.k = static_cast<uint32_t>(kv.get_u64("k", cfg.k));
  cfg.t = static_cast<uint32_t>(kv.get_u64("t", cfg.t));
  cfg.trials = kv.get_u64("trials", cfg.trials);
  cfg.affine = kv.get_bool("affine", cfg.affine);
  if (kv.has("bias")) cfg.bias = kv.get_double("bias");
  cfg.decoder = parse_decoder(kv.get_str("decoder", "stack"));
  cfg.delta = kv.get_double("delta", cfg.delta);
  cfg.d0 = static_cast<uint32_t>(kv.get_u64("d0", cfg.d0));
  if (kv.has("d_max"))
    cfg.d_max = static_cast<uint32_t>(kv.get_u64("d_max"));
  cfg.limits = limits_from(kv);
  cfg.code_file = kv.get_str("code_file", "");
  cfg.cert_eps = kv.get_double("cert_eps", cfg.cert_eps);
  return cfg;
}

AnytimeResult run_anytime(const AnytimeConfig& cfg, uint64_t seed,
                          unsigned workers) {
  if (cfg.t < 3) throw std::invalid_argument("anytime campaign needs t >= 3");
  const ChannelModel ch = channel::make_bsc(cfg.p);
  const LtiCode code =
      obtain_code(cfg.code_file, cfg.n, cfg.k, cfg.t, cfg.affine, seed);
  const uint32_t t = cfg.t;
  const uint32_t d_max = cfg.d_max.value_or(t - 2);
  if (cfg.d0 >= d_max || d_max > t - 1)
    throw std::invalid_argument("need d0 < d_max <= t - 1");

  AnytimeResult res;
  res.trials = cfg.trials;
  res.cutoff = channel::cutoff_rate(ch);
  if (code.rate() >= res.cutoff)
    std::fprintf(stderr,
                 "warning: code rate %.6f is not below the cutoff rate %.6f; "
                 "sequential decoding guarantees do not apply\n",
                 code.rate(), res.cutoff);
  res.bias_used = cfg.bias.value_or(res.cutoff);
  res.e_j_at_bias =
      channel::jelinek_exponent(ch, res.bias_used, code.rate()).value;
  res.cert_bound = channel::certification_bound(cfg.cert_eps, code.n, cfg.d0);
  res.code_hash = treecode::code_hash(code);

  const seqdec::MetricConfig metric{res.bias_used, cfg.delta};

  // Per-trial outcome, written only by its own worker: -2 decode incomplete,
  // -1 error free, d >= 0 first-error delay. Aggregation below is a single
  // deterministic pass, so worker count never changes the result.
  std::vector<int32_t> outcomes(cfg.trials, -1);
  run_trials(cfg.trials, workers, [&](uint64_t i) {
    Rng rng(seed_split(seed, "trial:" + std::to_string(i)));
    const TrialOutcome out =
        run_trial(code, ch, t, cfg.decoder, metric, cfg.limits, rng);
    if (out.result.status != seqdec::DecodeStatus::kCompleted) {
      outcomes[i] = -2;
      return;
    }
    const auto delay =
        seqdec::first_error_delay(out.message, out.result.decoded);
    outcomes[i] = delay ? static_cast<int32_t>(*delay) : -1;
  });

  // events[d] = trials whose oldest error sits exactly d steps back; bins are
  // disjoint, so each error trial contributes to one row.
  std::vector<uint64_t> events(t, 0);
  for (const int32_t o : outcomes) {
    if (o == -1) continue;
    if (o == -2) {
      res.incomplete++;
      continue;
    }
    res.error_trials++;
    events[static_cast<uint32_t>(o)]++;
  }
  res.rows.reserve(t);
  for (uint32_t d = 0; d < t; ++d) {
    AnytimeResult::DelayRow row;
    row.d = d;
    row.events = events[d];
    row.p_hat =
        static_cast<double>(events[d]) / static_cast<double>(cfg.trials);
    row.cp95_upper = clopper_pearson_upper(events[d], cfg.trials);
    res.rows.push_back(row);
  }

  // Zero-event delays carry no point estimate and are excluded; their
  // uncertainty is still visible through the emitted upper confidence bound.
  std::vector<double> xs, ys;
  for (uint32_t d = cfg.d0; d <= d_max; ++d) {
    if (events[d] == 0) continue;
    xs.push_back(static_cast<double>(code.n) * d);
    ys.push_back(std::log2(res.rows[d].p_hat));
  }
  if (xs.size() >= 2) {
    const LineFit fit = least_squares(xs, ys);
    res.beta_hat = -fit.slope;
    res.fit_intercept = fit.intercept;
    res.beta_valid = true;
  }
  return res;
}

Csv anytime_csv(const AnytimeConfig& cfg, uint64_t seed,
                const AnytimeResult& res) {
  Csv csv;
  put(csv, "campaign", std::string("anytime"));
  put(csv, "channel", std::string("bsc"));
  put(csv, "p", cfg.p);
  put(csv, "n", uint64_t{cfg.n});
  put(csv, "k", uint64_t{cfg.k});
  put(csv, "t", uint64_t{cfg.t});
  put(csv, "trials", res.trials);
  put(csv, "affine", uint64_t{cfg.affine ? 1u : 0u});
  put(csv, "decoder", decoder_name(cfg.decoder));
  put(csv, "bias", res.bias_used);
  put(csv, "delta", cfg.delta);
  put(csv, "d0", uint64_t{cfg.d0});
  put(csv, "d_max", uint64_t{cfg.d_max.value_or(cfg.t - 2)});
  put_limits(csv, cfg.limits);
  if (!cfg.code_file.empty()) put(csv, "code_file", cfg.code_file);
  put(csv, "seed", seed);
  put(csv, "code_hash", res.code_hash);
  put(csv, "cutoff_rate", res.cutoff);
  put(csv, "target_exponent", res.e_j_at_bias);
  put(csv, "beta_hat", res.beta_hat);
  put(csv, "beta_valid", uint64_t{res.beta_valid ? 1u : 0u});
  put(csv, "fit_intercept", res.fit_intercept);
  put(csv, "error_trials", res.error_trials);
  put(csv, "incomplete", res.incomplete);
  put(csv, "cert_eps", cfg.cert_eps);
  put(csv, "cert_bound", res.cert_bound);
  csv.header = {"delay", "events", "p_hat", "p95_upper"};
  for (const auto& r : res.rows) {
    csv.rows.push_back({format_u64(r.d), format_u64(r.events),
                        format_double(r.p_hat), format_double(r.cp95_upper)});
  }
  return csv;
}

// ---------------------------------------------------------------------------
// complexity

ComplexityConfig ComplexityConfig::from(const KeyValueConfig& kv) {
  kv.require_known({"p", "n", "k", "t", "trials", "affine", "bias", "decoder",
                    "delta", "max_nodes", "max_stack", "window", "code_file"});
  ComplexityConfig cfg;
  cfg.p = kv.get_double("p", cfg.p);
  cfg.n = static_cast<uint32_t>(kv.get_u64("n", cfg.n));
  cfg.k = static_cast<uint32_t>(kv.get_u64("k", cfg.k));
  cfg.t = static_cast<uint32_t>(kv.get_u64("t", cfg.t));
  cfg.trials = kv.get_u64("trials", cfg.trials);
  cfg.affine = kv.get_bool("affine", cfg.affine);
  if (kv.has("bias")) cfg.bias = kv.get_double("bias");
  cfg.decoder = parse_decoder(kv.get_str("decoder", "stack"));
  cfg.delta = kv.get_double("delta", cfg.delta);
  cfg.limits = limits_from(kv);
  cfg.code_file = kv.get_str("code_file", "");
  return cfg;
}

std::optional<double> pareto_exponent_root(const ChannelModel& ch,
                                           double rate) {
  if (rate <= 0 || rate >= channel::capacity(ch)) return std::nullopt;
  const auto f = [&](double rho) { return channel::e0(ch, rho) - rho * rate; };
  double lo = 1.0, hi = 1.0;
  if (f(1.0) > 0) {
    while (f(hi) > 0) {
      hi *= 2;
      if (hi > 64) return std::nullopt;  // E_0 saturates before rho R catches up
    }
    lo = hi / 2;
  } else {
    while (f(lo) <= 0) {
      lo /= 2;
      if (lo < 1e-12) return std::nullopt;
    }
    hi = lo * 2;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ComplexityResult run_complexity(const ComplexityConfig& cfg, uint64_t seed,
                                unsigned workers) {
  if (cfg.t < 2)
    throw std::invalid_argument("complexity campaign needs t >= 2");
  const ChannelModel ch = channel::make_bsc(cfg.p);
  const LtiCode code =
      obtain_code(cfg.code_file, cfg.n, cfg.k, cfg.t, cfg.affine, seed);
  ComplexityResult res;
  res.probe_depth = (cfg.t + 1) / 2;  // mid-tree, away from both edges
  const double cutoff = channel::cutoff_rate(ch);
  if (code.rate() >= cutoff)
    std::fprintf(stderr,
                 "warning: code rate %.6f is not below the cutoff rate %.6f; "
                 "expected decoding work is unbounded\n",
                 code.rate(), cutoff);
  res.bias_used = cfg.bias.value_or(code.rate());
  res.code_hash = treecode::code_hash(code);
  res.rho_theory = pareto_exponent_root(ch, code.rate()).value_or(0.0);

  const seqdec::MetricConfig metric{res.bias_used, cfg.delta};
  const uint32_t probe = res.probe_depth;
  std::vector<uint64_t> w(cfg.trials, 0);
  std::vector<uint8_t> done(cfg.trials, 1);
  run_trials(cfg.trials, workers, [&](uint64_t i) {
    Rng rng(seed_split(seed, "trial:" + std::to_string(i)));
    std::vector<BitBlock> message;
    message.reserve(cfg.t);
    for (uint32_t b = 0; b < cfg.t; ++b)
      message.push_back(BitBlock::from_bits(rng.bits(code.k), code.k));
    const auto codeword = treecode::encode_prefix(code, message);
    const auto received = channel::simulate_blocks(ch, codeword, rng);

    // One more than the computations in the probe node's incorrect subtree:
    // count every expansion whose path agrees with the transmitted message
    // through block `probe` and leaves it right there (the probe node's own
    // expansion included, deeper correct-path nodes excluded).
    uint64_t count = 0;
    const seqdec::ExpansionObserver observe =
        [&](std::span<const BitBlock> prefix) {
          if (prefix.size() < probe) return;
          for (uint32_t j = 0; j < probe; ++j)
            if (prefix[j].bits != message[j].bits) return;
          if (prefix.size() == probe ||
              prefix[probe].bits != message[probe].bits)
            ++count;
        };
    const seqdec::DecodeResult result =
        cfg.decoder == DecoderKind::kStack
            ? seqdec::stack_decode(code, ch, received, metric, cfg.limits,
                                   observe)
            : seqdec::fano_decode(code, ch, received, metric, cfg.limits,
                                  observe);
    w[i] = count;
    done[i] = result.status == seqdec::DecodeStatus::kCompleted ? 1 : 0;
  });

  double sum = 0;
  for (uint64_t i = 0; i < cfg.trials; ++i) {
    sum += static_cast<double>(w[i]);
    if (!done[i]) res.incomplete++;
  }
  res.mean_w = sum / static_cast<double>(cfg.trials);

  // Dyadic survival counts; the tail fit runs over the upper decade of
  // thresholds that still hold at least 20 events. Note the survival curve
  // approaches its asymptotic power law from below: short noise bursts put a
  // shoulder on the distribution at small thresholds, so the fitted slope
  // undershoots the asymptotic exponent until the window clears the shoulder
  // (local octave slopes keep climbing toward the theoretical root as the
  // trial budget pushes the window right).
  constexpr uint64_t kMaxThreshold = 4096;
  for (uint64_t m = 1; m <= kMaxThreshold; m *= 2) {
    ComplexityResult::TailRow row;
    row.m = m;
    row.count = 0;
    for (uint64_t i = 0; i < cfg.trials; ++i)
      if (w[i] >= m) row.count++;
    row.ccdf = static_cast<double>(row.count) / static_cast<double>(cfg.trials);
    res.rows.push_back(row);
  }
  uint64_t m_star = 0;
  for (const auto& row : res.rows)
    if (row.count >= 20) m_star = row.m;
  if (m_star >= 16) {
    const uint64_t m_lo = std::max<uint64_t>(2, m_star / 8);
    std::vector<double> xs, ys;
    for (const auto& row : res.rows) {
      if (row.m < m_lo || row.m > m_star || row.count == 0) continue;
      xs.push_back(std::log2(static_cast<double>(row.m)));
      ys.push_back(std::log2(row.ccdf));
    }
    if (xs.size() >= 3) {
      const LineFit fit = least_squares(xs, ys);
      res.rho_hat = -fit.slope;
      res.rho_valid = true;
      res.fit_points = xs.size();
    }
  }
  return res;
}

Csv complexity_csv(const ComplexityConfig& cfg, uint64_t seed,
                   const ComplexityResult& res) {
  Csv csv;
  put(csv, "campaign", std::string("complexity"));
  put(csv, "channel", std::string("bsc"));
  put(csv, "p", cfg.p);
  put(csv, "n", uint64_t{cfg.n});
  put(csv, "k", uint64_t{cfg.k});
  put(csv, "t", uint64_t{cfg.t});
  put(csv, "trials", cfg.trials);
  put(csv, "affine", uint64_t{cfg.affine ? 1u : 0u});
  put(csv, "decoder", decoder_name(cfg.decoder));
  put(csv, "bias", res.bias_used);
  put(csv, "delta", cfg.delta);
  put_limits(csv, cfg.limits);
  if (!cfg.code_file.empty()) put(csv, "code_file", cfg.code_file);
  put(csv, "seed", seed);
  put(csv, "code_hash", res.code_hash);
  put(csv, "probe_depth", uint64_t{res.probe_depth});
  put(csv, "mean_w", res.mean_w);
  put(csv, "rho_hat", res.rho_hat);
  put(csv, "rho_valid", uint64_t{res.rho_valid ? 1u : 0u});
  put(csv, "fit_points", res.fit_points);
  put(csv, "rho_theory", res.rho_theory);
  put(csv, "incomplete", res.incomplete);
  csv.header = {"threshold", "count", "ccdf"};
  for (const auto& r : res.rows) {
    csv.rows.push_back(
        {format_u64(r.m), format_u64(r.count), format_double(r.ccdf)});
  }
  return csv;
}

// ---------------------------------------------------------------------------
// control

ControlConfig ControlConfig::from(const KeyValueConfig& kv) {
  kv.require_known({"p", "n", "ks", "delta", "horizon", "codes", "trials",
                    "bias", "window_steps", "max_nodes", "subblock", "x0",
                    "sigma", "trunc", "plant_a", "plant_b", "plant_c",
                    "plant_k"});
  ControlConfig cfg;
  cfg.plant = control::cart_stick_plant();
  if (kv.has("plant_a") || kv.has("plant_b") || kv.has("plant_c") ||
      kv.has("plant_k")) {
    // Custom plant: all four matrices together (row-major A, then the three
    // length-m vectors), replacing the built-in benchmark plant.
    const std::vector<double> a = kv.get_doubles("plant_a");
    const std::vector<double> b = kv.get_doubles("plant_b");
    const std::vector<double> c = kv.get_doubles("plant_c");
    const std::vector<double> k = kv.get_doubles("plant_k");
    const size_t m = b.size();
    if (m == 0 || a.size() != m * m || c.size() != m || k.size() != m)
      throw std::invalid_argument(
          "plant_a must be m*m values (row-major) and plant_b/plant_c/plant_k "
          "m values each");
    const int mi = static_cast<int>(m);
    cfg.plant.A.resize(mi, mi);
    cfg.plant.B.resize(mi);
    cfg.plant.C.resize(mi);
    cfg.plant.K.resize(mi);
    for (int r = 0; r < mi; ++r)
      for (int col = 0; col < mi; ++col)
        cfg.plant.A(r, col) = a[static_cast<size_t>(r) * m + col];
    for (int r = 0; r < mi; ++r) {
      cfg.plant.B(r) = b[static_cast<size_t>(r)];
      cfg.plant.C(r) = c[static_cast<size_t>(r)];
      cfg.plant.K(r) = k[static_cast<size_t>(r)];
    }
  }
  cfg.p = kv.get_double("p", cfg.p);
  cfg.n = static_cast<uint32_t>(kv.get_u64("n", cfg.n));
  if (kv.has("ks")) {
    cfg.ks.clear();
    for (uint64_t k : kv.get_u64s("ks"))
      cfg.ks.push_back(static_cast<uint32_t>(k));
    if (cfg.ks.empty()) throw std::invalid_argument("ks must be non-empty");
  }
  cfg.delta = kv.get_double("delta", cfg.delta);
  cfg.horizon = static_cast<uint32_t>(kv.get_u64("horizon", cfg.horizon));
  cfg.codes = static_cast<uint32_t>(kv.get_u64("codes", cfg.codes));
  cfg.trials = static_cast<uint32_t>(kv.get_u64("trials", cfg.trials));
  if (kv.has("bias")) cfg.bias = kv.get_double("bias");
  cfg.window_steps =
      static_cast<uint32_t>(kv.get_u64("window_steps", cfg.window_steps));
  cfg.max_nodes = kv.get_u64("max_nodes", cfg.max_nodes);
  cfg.subblock = kv.get_bool("subblock", cfg.subblock);
  if (kv.has("x0")) cfg.x0 = kv.get_doubles("x0");
  cfg.plant.noise_sigma = kv.get_double("sigma", cfg.plant.noise_sigma);
  cfg.plant.noise_trunc = kv.get_double("trunc", cfg.plant.noise_trunc);
  return cfg;
}

ControlResult run_control(const ControlConfig& cfg, uint64_t seed,
                          unsigned workers, bool keep_trace) {
  if (cfg.horizon == 0 || cfg.codes == 0 || cfg.trials == 0)
    throw std::invalid_argument("horizon, codes and trials must be positive");
  cfg.plant.validate();
  if (!cfg.x0.empty() &&
      cfg.x0.size() != static_cast<size_t>(cfg.plant.dim()))
    throw std::invalid_argument("x0 must have one entry per plant state");
  const ChannelModel ch = channel::make_bsc(cfg.p);
  const double bias = cfg.bias.value_or(channel::cutoff_rate(ch));

  // One code per (k, code index), drawn from labelled streams up front so
  // scheduling cannot change which code a trial sees.
  struct KSlot {
    uint32_t k = 0;
    uint32_t factor = 1;
    std::vector<LtiCode> codes;
  };
  std::vector<KSlot> slots;
  slots.reserve(cfg.ks.size());
  for (const uint32_t k : cfg.ks) {
    KSlot slot;
    slot.k = k;
    treecode::SubblockDims dims{cfg.n, k, 1};
    if (cfg.subblock) dims = treecode::subblock_expand(cfg.n, k);
    slot.factor = dims.factor;
    const uint32_t horizon = cfg.horizon * dims.factor;
    for (uint32_t c = 0; c < cfg.codes; ++c) {
      Rng rng(seed_split(seed, "code:" + std::to_string(k) + ":" +
                                   std::to_string(c)));
      slot.codes.push_back(
          treecode::sample_lti(dims.n, dims.k, horizon, true, rng));
    }
    slots.push_back(std::move(slot));
  }

  struct Job {
    uint32_t slot, code, trial;
  };
  std::vector<Job> jobs;
  for (uint32_t s = 0; s < slots.size(); ++s)
    for (uint32_t c = 0; c < cfg.codes; ++c)
      for (uint32_t r = 0; r < cfg.trials; ++r) jobs.push_back({s, c, r});

  ControlResult res;
  res.keep_trace = keep_trace;
  res.rows.resize(jobs.size());
  if (keep_trace) res.trace.resize(jobs.size());

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cfg.plant.dim());
  for (size_t i = 0; i < cfg.x0.size(); ++i) x0[static_cast<int>(i)] = cfg.x0[i];

  run_trials(jobs.size(), workers, [&](uint64_t j) {
    const Job job = jobs[j];
    const KSlot& slot = slots[job.slot];
    control::LoopConfig lc;
    lc.quantizer = control::QuantizerConfig{slot.k, cfg.delta};
    lc.metric = seqdec::MetricConfig{bias, 1.0};
    lc.limits.max_nodes = cfg.max_nodes;
    lc.limits.backtrack_window =
        static_cast<uint64_t>(cfg.window_steps) * slot.factor;
    lc.horizon = cfg.horizon;
    lc.subblocks_per_step = slot.factor;
    lc.x0 = x0;
    Rng rng(seed_split(seed, "ctrl:" + std::to_string(slot.k) + ":" +
                                 std::to_string(job.code) + ":" +
                                 std::to_string(job.trial)));
    const control::ControlTrace trace = control::run_closed_loop(
        cfg.plant, slot.codes[job.code], ch, lc, rng);

    ControlResult::TrialRow row;
    row.k = slot.k;
    row.code_index = job.code;
    row.trial_index = job.trial;
    row.sup_norm = 0;
    for (const auto& step : trace.steps)
      row.sup_norm =
          std::max(row.sup_norm, step.x.lpNorm<Eigen::Infinity>());
    row.lqr = control::lqr_cost(trace);
    row.decode_failures = trace.decode_failures;
    row.saturations = trace.saturations;
    res.rows[j] = row;
    if (keep_trace) {
      auto& tr = res.trace[j];
      tr.reserve(trace.steps.size());
      for (const auto& step : trace.steps)
        tr.push_back(step.x.lpNorm<Eigen::Infinity>());
    }
  });

  for (const KSlot& slot : slots) {
    std::vector<double> lqrs, sups;
    for (const auto& row : res.rows) {
      if (row.k != slot.k) continue;
      lqrs.push_back(row.lqr);
      sups.push_back(row.sup_norm);
    }
    double mean = 0;
    for (double v : lqrs) mean += v;
    mean /= static_cast<double>(lqrs.size());
    res.aggregates.push_back({slot.k, mean, median(sups)});
  }
  return res;
}

namespace {
void control_metadata(Csv& csv, const ControlConfig& cfg, uint64_t seed) {
  put(csv, "channel", std::string("bsc"));
  put(csv, "p", cfg.p);
  put(csv, "n", uint64_t{cfg.n});
  std::string ks;
  for (const uint32_t k : cfg.ks) {
    if (!ks.empty()) ks += ' ';
    ks += std::to_string(k);
  }
  put(csv, "ks", ks);
  put(csv, "delta", cfg.delta);
  put(csv, "horizon", uint64_t{cfg.horizon});
  put(csv, "codes", uint64_t{cfg.codes});
  put(csv, "trials", uint64_t{cfg.trials});
  put(csv, "bias", cfg.bias ? format_double(*cfg.bias) : std::string("cutoff"));
  put(csv, "window_steps", uint64_t{cfg.window_steps});
  put(csv, "max_nodes", cfg.max_nodes);
  put(csv, "subblock", uint64_t{cfg.subblock ? 1u : 0u});
  put(csv, "sigma", cfg.plant.noise_sigma);
  put(csv, "trunc", cfg.plant.noise_trunc);
  put(csv, "seed", seed);
}
}  // namespace

Csv control_csv(const ControlConfig& cfg, uint64_t seed,
                const ControlResult& res) {
  Csv csv;
  put(csv, "campaign", std::string("control"));
  control_metadata(csv, cfg, seed);
  for (const auto& agg : res.aggregates) {
    put(csv, "mean_lqr_k" + std::to_string(agg.k), agg.mean_lqr);
    put(csv, "median_sup_k" + std::to_string(agg.k), agg.median_sup);
  }
  csv.header = {"k",   "code",            "trial",      "sup_norm",
                "lqr", "decode_failures", "saturations"};
  for (const auto& r : res.rows) {
    csv.rows.push_back({format_u64(r.k), format_u64(r.code_index),
                        format_u64(r.trial_index), format_double(r.sup_norm),
                        format_double(r.lqr), format_u64(r.decode_failures),
                        format_u64(r.saturations)});
  }
  return csv;
}

Csv control_trace_csv(const ControlConfig& cfg, uint64_t seed,
                      const ControlResult& res) {
  if (!res.keep_trace)
    throw std::logic_error("control run was made without trace collection");
  Csv csv;
  put(csv, "campaign", std::string("control_trace"));
  control_metadata(csv, cfg, seed);
  csv.header = {"k", "code", "trial", "step", "state_inf_norm"};
  for (size_t i = 0; i < res.rows.size(); ++i) {
    const auto& r = res.rows[i];
    for (size_t s = 0; s < res.trace[i].size(); ++s) {
      csv.rows.push_back({format_u64(r.k), format_u64(r.code_index),
                          format_u64(r.trial_index), format_u64(s + 1),
                          format_double(res.trace[i][s])});
    }
  }
  return csv;
}

}  // namespace anytime::harness
