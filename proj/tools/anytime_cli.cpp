// Command-line harness: runs the measurement campaigns and writes their CSV
// outputs. Every campaign is deterministic in (config, seed) -- worker count
// only changes wall-clock time, never a byte of output.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anytime/campaigns.hpp"

namespace {

using namespace anytime;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path;
  uint64_t seed = 1;
  unsigned workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "key = value configuration file");
  cmd->add_option("--set", opts.overrides,
                  "inline override, key=value (repeatable)")
      ->expected(-1);
  cmd->add_option("--out", opts.out_path, "output CSV path")->required();
  cmd->add_option("--seed", opts.seed, "master seed (default 1)");
  cmd->add_option("--workers", opts.workers,
                  "worker threads (default 1; output is identical either way)");
}

harness::KeyValueConfig load_config(const CommonOpts& opts) {
  harness::KeyValueConfig kv;
  if (!opts.config_path.empty())
    kv = harness::KeyValueConfig::parse_file(opts.config_path);
  for (const std::string& item : opts.overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects key=value, got '" + item +
                                  "'");
    std::string key = item.substr(0, eq);
    std::string value = item.substr(eq + 1);
    // Trim ASCII whitespace on both fragments so `--set "k = v"` works too.
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) throw std::invalid_argument("--set has an empty key");
    kv.set(key, value);
  }
  return kv;
}

int run_exponents_cmd(const CommonOpts& opts) {
  const auto cfg = harness::ExponentsConfig::from(load_config(opts));
  const auto res = harness::run_exponents(cfg);
  harness::write_csv(opts.out_path, harness::exponents_csv(cfg, res));
  std::printf("exponents: p=%g cutoff=%.6f critical=%.6f capacity=%.6f rows=%zu -> %s\n",
              cfg.p, res.cutoff, res.critical, res.cap, res.rows.size(),
              opts.out_path.c_str());
  return 0;
}

int run_anytime_cmd(const CommonOpts& opts) {
  const auto cfg = harness::AnytimeConfig::from(load_config(opts));
  const auto res = harness::run_anytime(cfg, opts.seed, opts.workers);
  harness::write_csv(opts.out_path, harness::anytime_csv(cfg, opts.seed, res));
  std::printf("anytime: trials=%llu errors=%llu incomplete=%llu beta_hat=%s "
              "target=%.6f -> %s\n",
              static_cast<unsigned long long>(res.trials),
              static_cast<unsigned long long>(res.error_trials),
              static_cast<unsigned long long>(res.incomplete),
              res.beta_valid ? harness::format_double(res.beta_hat).c_str()
                             : "n/a",
              res.e_j_at_bias, opts.out_path.c_str());
  return 0;
}

int run_complexity_cmd(const CommonOpts& opts) {
  const auto cfg = harness::ComplexityConfig::from(load_config(opts));
  const auto res = harness::run_complexity(cfg, opts.seed, opts.workers);
  harness::write_csv(opts.out_path,
                     harness::complexity_csv(cfg, opts.seed, res));
  std::printf("complexity: trials=%llu mean_w=%.4f rho_hat=%s rho_theory=%.4f "
              "-> %s\n",
              static_cast<unsigned long long>(cfg.trials), res.mean_w,
              res.rho_valid ? harness::format_double(res.rho_hat).c_str()
                            : "n/a",
              res.rho_theory, opts.out_path.c_str());
  return 0;
}

int run_control_cmd(const CommonOpts& opts, const std::string& trace_path) {
  const auto cfg = harness::ControlConfig::from(load_config(opts));
  const bool keep_trace = !trace_path.empty();
  const auto res =
      harness::run_control(cfg, opts.seed, opts.workers, keep_trace);
  harness::write_csv(opts.out_path, harness::control_csv(cfg, opts.seed, res));
  if (keep_trace)
    harness::write_csv(trace_path,
                       harness::control_trace_csv(cfg, opts.seed, res));
  for (const auto& agg : res.aggregates)
    std::printf("control: k=%u mean_lqr=%.6f median_sup=%.6f\n", agg.k,
                agg.mean_lqr, agg.median_sup);
  std::printf("control: rows=%zu -> %s\n", res.rows.size(),
              opts.out_path.c_str());
  return 0;
}

int run_sample_code_cmd(uint32_t n, uint32_t k, uint32_t horizon, bool linear,
                        uint64_t seed, const std::string& out_path) {
  Rng rng(seed_split(seed, "code"));
  const auto code = treecode::sample_lti(n, k, horizon, !linear, rng);
  treecode::save_code(code, out_path);
  std::printf("code: n=%u k=%u horizon=%u affine=%d hash=%llu -> %s\n", code.n,
              code.k, code.horizon, code.affine() ? 1 : 0,
              static_cast<unsigned long long>(treecode::code_hash(code)),
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Tree-code toolkit: error-exponent curves, anytime-reliability and "
      "decoding-complexity measurements, and closed-loop control runs"};
  app.require_subcommand(1);

  CommonOpts exp_opts, any_opts, cpx_opts, ctl_opts;
  std::string trace_path;

  CLI::App* exp_cmd =
      app.add_subcommand("exponents", "analytic exponent curves on a rate grid");
  add_common(exp_cmd, exp_opts);

  CLI::App* any_cmd = app.add_subcommand(
      "anytime", "Monte Carlo first-error-delay profile of a tree code");
  add_common(any_cmd, any_opts);

  CLI::App* cpx_cmd = app.add_subcommand(
      "complexity", "sequential-decoding work distribution at mid-tree depth");
  add_common(cpx_cmd, cpx_opts);

  CLI::App* ctl_cmd = app.add_subcommand(
      "control", "closed-loop plant runs over sampled codes and noise seeds");
  add_common(ctl_cmd, ctl_opts);
  ctl_cmd->add_option("--trace-out", trace_path,
                      "also write per-step state norms to this CSV");

  uint32_t sc_n = 4, sc_k = 1, sc_horizon = 12;
  bool sc_linear = false;
  uint64_t sc_seed = 1;
  std::string sc_out;
  CLI::App* sc_cmd = app.add_subcommand(
      "sample-code", "draw a random tree code and save it as plain text");
  sc_cmd->add_option("--n", sc_n, "code block length (bits)");
  sc_cmd->add_option("--k", sc_k, "message block length (bits)");
  sc_cmd->add_option("--horizon", sc_horizon, "kernel depth");
  sc_cmd->add_flag("--linear", sc_linear, "skip the random translation");
  sc_cmd->add_option("--seed", sc_seed, "master seed (default 1)");
  sc_cmd->add_option("--out", sc_out, "output code path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (exp_cmd->parsed()) return run_exponents_cmd(exp_opts);
    if (any_cmd->parsed()) return run_anytime_cmd(any_opts);
    if (cpx_cmd->parsed()) return run_complexity_cmd(cpx_opts);
    if (ctl_cmd->parsed()) return run_control_cmd(ctl_opts, trace_path);
    if (sc_cmd->parsed())
      return run_sample_code_cmd(sc_n, sc_k, sc_horizon, sc_linear, sc_seed,
                                 sc_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
