#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "anytime/channel.hpp"
#include "anytime/config.hpp"
#include "anytime/control.hpp"
#include "anytime/csv.hpp"
#include "anytime/seqdec.hpp"
#include "anytime/treecode.hpp"

namespace anytime::harness {

enum class DecoderKind : uint8_t { kStack, kFano };

// ---------------------------------------------------------------------------
// exponents: analytic curves on a rate grid.

struct ExponentsConfig {
  double p = 0.01;          // BSC crossover
  double rate_step = 0.005; // grid step over (0, capacity)
  static ExponentsConfig from(const KeyValueConfig& kv);
};

struct ExponentsRow {
  double rate;
  double gallager, gallager_rho;
  double j_bias_cutoff, j_bias_cutoff_rho;  // bias fixed at R_0
  double j_bias_rate, j_bias_rate_rho;      // bias equal to the rate
};

struct ExponentsResult {
  double cutoff = 0, critical = 0, cap = 0;
  std::vector<ExponentsRow> rows;
};

ExponentsResult run_exponents(const ExponentsConfig& cfg);
Csv exponents_csv(const ExponentsConfig& cfg, const ExponentsResult& res);

// ---------------------------------------------------------------------------
// anytime: Monte Carlo first-error-delay profile of a sampled code.

struct AnytimeConfig {
  double p = 0.05;
  uint32_t n = 4, k = 1;
  uint32_t t = 12;          // decoded prefix length (blocks)
  uint64_t trials = 100000;
  bool affine = true;
  std::optional<double> bias;  // default: cutoff rate R_0
  DecoderKind decoder = DecoderKind::kStack;
  double delta = 2.0;          // Fano threshold quantum
  uint32_t d0 = 3;             // fit range [d0, d_max]
  std::optional<uint32_t> d_max;  // default t - 2
  seqdec::DecoderLimits limits;
  std::string code_file;       // load instead of sampling when nonempty
  double cert_eps = 0.05;      // ensemble-certification slack
  static AnytimeConfig from(const KeyValueConfig& kv);
};

struct AnytimeResult {
  // One row per delay d: events counts trials whose OLDEST erroneous block
  // sits exactly d steps in the past (each trial lands in at most one bin).
  struct DelayRow {
    uint32_t d;
    uint64_t events;
    double p_hat;
    double cp95_upper;
  };
  std::vector<DelayRow> rows;   // d = 0 .. t-1
  uint64_t trials = 0;
  uint64_t incomplete = 0;      // decodes that did not complete (not binned)
  uint64_t error_trials = 0;    // completed decodes with any block error
  double beta_hat = 0;          // fitted anytime exponent (valid flag below)
  bool beta_valid = false;
  double fit_intercept = 0;
  double bias_used = 0;
  double cutoff = 0;
  double e_j_at_bias = 0;       // E_J(bias, R): target exponent
  double cert_bound = 0;        // ensemble bound at cert_eps and d0
  uint64_t code_hash = 0;
};

AnytimeResult run_anytime(const AnytimeConfig& cfg, uint64_t seed,
                          unsigned workers);
Csv anytime_csv(const AnytimeConfig& cfg, uint64_t seed,
                const AnytimeResult& res);

// ---------------------------------------------------------------------------
// complexity: branch-computation distribution at a mid-tree depth.

struct ComplexityConfig {
  double p = 0.05;
  uint32_t n = 4, k = 1;
  // Deeper default than the anytime campaign: the probed mid-depth node's
  // work count is capped by the subtree below it, so the observable tail
  // range grows with t.
  uint32_t t = 24;
  uint64_t trials = 100000;
  bool affine = true;
  std::optional<double> bias;  // default: the code rate R
  DecoderKind decoder = DecoderKind::kStack;
  double delta = 2.0;
  seqdec::DecoderLimits limits;
  std::string code_file;
  static ComplexityConfig from(const KeyValueConfig& kv);
};

struct ComplexityResult {
  struct TailRow {
    uint64_t m;        // dyadic threshold
    uint64_t count;    // trials with W >= m
    double ccdf;
  };
  std::vector<TailRow> rows;
  uint32_t probe_depth = 0;  // the mid depth whose W is sampled
  double mean_w = 0;
  double rho_hat = 0;        // fitted Pareto exponent (valid flag below)
  bool rho_valid = false;
  uint64_t fit_points = 0;
  double rho_theory = 0;     // root of E_0(rho) = rho R (0 when absent)
  double bias_used = 0;
  uint64_t incomplete = 0;
  uint64_t code_hash = 0;
};

ComplexityResult run_complexity(const ComplexityConfig& cfg, uint64_t seed,
                                unsigned workers);
Csv complexity_csv(const ComplexityConfig& cfg, uint64_t seed,
                   const ComplexityResult& res);

// Solves E_0(rho) = rho * rate for rho > 0 (bisection after bracket doubling,
// capped at rho = 64); nullopt when the rate is at/above capacity.
std::optional<double> pareto_exponent_root(const channel::ChannelModel& ch,
                                           double rate);

// ---------------------------------------------------------------------------
// control: closed-loop campaigns over codes x trials for each quantizer size.

struct ControlConfig {
  control::PlantModel plant = control::cart_stick_plant();
  double p = 0.01;
  uint32_t n = 20;
  std::vector<uint32_t> ks = {4, 5, 10};
  double delta = 0.1;
  uint32_t horizon = 500;       // closed-loop steps T
  uint32_t codes = 10;
  uint32_t trials = 10;         // per code
  std::optional<double> bias;   // default: cutoff rate
  uint32_t window_steps = 30;   // backtrack window in measurement steps
  uint64_t max_nodes = 50000;   // decode budget per step
  bool subblock = true;         // encode at gcd sub-block granularity
  std::vector<double> x0;       // empty = zero initial state
  static ControlConfig from(const KeyValueConfig& kv);
};

struct ControlResult {
  struct TrialRow {
    uint32_t k;
    uint32_t code_index;
    uint32_t trial_index;
    double sup_norm;       // max_t |x_t|_inf
    double lqr;
    uint64_t decode_failures;
    uint64_t saturations;
  };
  struct Aggregate {
    uint32_t k;
    double mean_lqr;
    double median_sup;
  };
  std::vector<TrialRow> rows;
  std::vector<Aggregate> aggregates;
  // Per-step sup-norms for trace output, parallel to rows: trace[i][t-1] =
  // |x_t|_inf of rows[i]'s trajectory. Filled only when keep_trace.
  std::vector<std::vector<double>> trace;
  bool keep_trace = false;
};

ControlResult run_control(const ControlConfig& cfg, uint64_t seed,
                          unsigned workers, bool keep_trace);
Csv control_csv(const ControlConfig& cfg, uint64_t seed,
                const ControlResult& res);
Csv control_trace_csv(const ControlConfig& cfg, uint64_t seed,
                      const ControlResult& res);

// ---------------------------------------------------------------------------

// Runs fn(trial_index) for every index in [0, trials) across `workers`
// threads (sequentially when workers <= 1). fn must only touch its own
// trial's slot; indices are handed out dynamically.
void run_trials(uint64_t trials, unsigned workers,
                const std::function<void(uint64_t)>& fn);

}  // namespace anytime::harness
