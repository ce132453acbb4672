// Unit tests for the plant, quantizer, observers (deadbeat reconstruction
// and the stationary filter the loop runs on), and the closed
// quantize/encode/decode/feedback loop: frozen benchmark constants, exact
// noise-free identities, statistical checks on the truncated noise, observer
// error bounds, and white-box checks of the sub-block bit layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"

#include "anytime/channel.hpp"
#include "anytime/control.hpp"
#include "anytime/rng.hpp"
#include "anytime/seqdec.hpp"
#include "anytime/treecode.hpp"

using namespace anytime;
using namespace anytime::control;
using anytime::channel::ChannelModel;
using anytime::channel::Symbol;
using anytime::channel::make_bsc;
using anytime::gf2::BitBlock;
using anytime::gf2::Matrix;
using anytime::treecode::LtiCode;

namespace {

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))

double spectral_radius(const Eigen::MatrixXd& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

// Identity-on-the-first-k-rows kernel: c = (b_0 .. b_{k-1}, 0 ..) with all
// deeper kernel blocks zero. Makes transmitted bits directly readable.
LtiCode passthrough_code(uint32_t n, uint32_t k, uint32_t horizon) {
  LtiCode code;
  code.n = n;
  code.k = k;
  code.horizon = horizon;
  code.blocks.assign(horizon, Matrix(n, k));
  for (uint32_t i = 0; i < k; ++i) code.blocks[0].set(i, i, true);
  code.finalize();
  code.validate();
  return code;
}

}  // namespace

TEST_SUITE_BEGIN("control");

TEST_CASE("benchmark plant constants and stability margins") {
  const PlantModel plant = cart_stick_plant();
  REQUIRE(plant.dim() == 3);
  CHECK_NEAR(plant.A(0, 0), 3.3010, 1e-12);
  CHECK_NEAR(plant.A(0, 1), 1.0, 1e-12);
  CHECK_NEAR(plant.A(0, 2), 0.0, 1e-12);
  CHECK_NEAR(plant.A(1, 0), -3.2750, 1e-12);
  CHECK_NEAR(plant.A(2, 0), 0.9801, 1e-12);
  CHECK_NEAR(plant.B(0), -0.0300, 1e-12);
  CHECK_NEAR(plant.B(1), -0.0072, 1e-12);
  CHECK_NEAR(plant.B(2), 0.0376, 1e-12);
  CHECK_NEAR(plant.K(0), 55.6920, 1e-12);
  CHECK_NEAR(plant.K(1), 32.3333, 1e-12);
  CHECK_NEAR(plant.K(2), 19.0476, 1e-12);
  CHECK(plant.C(0) == 1.0);
  CHECK(plant.C(1) == 0.0);
  CHECK(plant.C(2) == 0.0);
  CHECK_NOTHROW(plant.validate());

  // Open-loop growth rate 1.75; perfect state feedback is stabilizing.
  CHECK_NEAR(spectral_radius(plant.A), 1.75, 0.01);
  CHECK(spectral_radius(plant.A + plant.B * plant.K) < 1.0);
}

TEST_CASE("plant validation rejects malformed models") {
  PlantModel bad = cart_stick_plant();
  bad.C(1) = 1.0;  // output must read the first state component only
  CHECK_THROWS(bad.validate());
  bad = cart_stick_plant();
  bad.noise_sigma = -0.1;
  CHECK_THROWS(bad.validate());
  bad = cart_stick_plant();
  bad.K = Eigen::RowVectorXd::Zero(2);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("noise-free plant steps read out the system matrices") {
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  Rng rng(1);

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1(0) = 1.0;
  const auto [x1, y1] = plant_step(plant, e1, 0.0, rng);
  CHECK((x1 - plant.A.col(0)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK_NEAR(y1, plant.A(0, 0), 1e-12);

  const auto [x2, y2] =
      plant_step(plant, Eigen::VectorXd::Zero(3), 1.0, rng);
  CHECK((x2 - plant.B).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK_NEAR(y2, plant.B(0), 1e-12);
}

TEST_CASE("plant noise draws follow the documented order") {
  const PlantModel plant = cart_stick_plant();
  Rng a(seed_split(9, "order"));
  Rng b(seed_split(9, "order"));
  Eigen::VectorXd x(3);
  x << 0.2, -0.1, 0.05;
  const auto [x_next, y_next] = plant_step(plant, x, 0.7, a);
  Eigen::VectorXd w(3);
  for (int i = 0; i < 3; ++i)
    w(i) = sample_truncated_gaussian(plant.noise_sigma, plant.noise_trunc, b);
  const double v =
      sample_truncated_gaussian(plant.noise_sigma, plant.noise_trunc, b);
  const Eigen::VectorXd want = plant.A * x + plant.B * 0.7 + w;
  CHECK((x_next - want).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK_NEAR(y_next, want(0) + v, 1e-12);
}

TEST_CASE("truncated gaussian sampling") {
  Rng rng(seed_split(10, "trunc"));
  CHECK_THROWS(sample_truncated_gaussian(-1.0, 0.1, rng));
  CHECK_THROWS(sample_truncated_gaussian(0.1, -1.0, rng));

  // Degenerate parameters return zero without consuming randomness.
  Rng probe_a(77);
  Rng probe_b(77);
  CHECK(sample_truncated_gaussian(0.0, 0.5, probe_a) == 0.0);
  CHECK(sample_truncated_gaussian(0.1, 0.0, probe_a) == 0.0);
  CHECK(probe_a.next_u64() == probe_b.next_u64());

  const double sigma = 0.1;
  const double bound = 0.025;
  const size_t n = 100'000;
  std::vector<double> sample(n);
  double mean = 0.0;
  for (auto& s : sample) {
    s = sample_truncated_gaussian(sigma, bound, rng);
    CHECK(std::abs(s) <= bound);
    mean += s;
  }
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) < 3e-4);
  const double ks = oracle::ks_distance(sample, [&](double x) {
    return oracle::truncated_gaussian_cdf(x, sigma, bound);
  });
  CHECK(ks < 0.02);

  // The closed-form variance matches the sample variance of those draws.
  double var = 0.0;
  for (double s : sample) var += (s - mean) * (s - mean);
  var /= static_cast<double>(n - 1);
  CHECK_NEAR(truncated_gaussian_variance(sigma, bound), var, 5e-6);
}

TEST_CASE("truncated gaussian variance: edges and limits") {
  CHECK(truncated_gaussian_variance(0.0, 0.5) == 0.0);
  CHECK(truncated_gaussian_variance(0.1, 0.0) == 0.0);
  CHECK_THROWS(truncated_gaussian_variance(-0.1, 0.5));
  CHECK_THROWS(truncated_gaussian_variance(0.1, -0.5));
  // A wide window leaves the Gaussian untouched; a narrow one approaches the
  // uniform variance bound^2 / 3. Both limits to within a relative 1e-3.
  CHECK_NEAR(truncated_gaussian_variance(0.1, 10.0), 0.01, 1e-5);
  const double narrow = truncated_gaussian_variance(1.0, 1e-3);
  CHECK_NEAR(narrow, 1e-6 / 3.0, 1e-9 / 3.0);
  // Monotone in the truncation bound.
  double prev = 0.0;
  for (double b : {0.01, 0.05, 0.1, 0.2, 0.5}) {
    const double v = truncated_gaussian_variance(0.1, b);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("stationary filter gain stabilizes the predictor") {
  const PlantModel plant = cart_stick_plant();
  const double q =
      truncated_gaussian_variance(plant.noise_sigma, plant.noise_trunc);
  const Eigen::VectorXd gain = observer_gain(plant, q, q + 0.01 / 12.0);
  REQUIRE(gain.size() == 3);

  // Independent stability evidence: powers of the predictor matrix decay,
  // checked without an eigensolver.
  const Eigen::MatrixXd m =
      plant.A * (Eigen::MatrixXd::Identity(3, 3) - gain * plant.C);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(3, 3);
  for (int i = 0; i < 400; ++i) power = m * power;
  CHECK(power.cwiseAbs().maxCoeff() < 1e-3);

  // Deterministic: same inputs, bit-identical gain.
  const Eigen::VectorXd again = observer_gain(plant, q, q + 0.01 / 12.0);
  CHECK(gain == again);

  CHECK_THROWS(observer_gain(plant, q, 0.0));
  CHECK_THROWS(observer_gain(plant, -1.0, 0.1));

  // Filter convergence: feeding exact measurements of a noise-free driven
  // trajectory pulls the estimate onto the true state geometrically.
  PlantModel quiet = plant;
  quiet.noise_sigma = 0.0;
  Rng rng(seed_split(18, "filterconv"));
  Eigen::VectorXd x(3);
  x << 0.3, -0.2, 0.1;
  Eigen::VectorXd x_pred = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(3);
  double final_err = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 80; ++t) {
    const double y = quiet.C.dot(x);
    x_hat = x_pred + gain * (y - quiet.C.dot(x_pred));
    final_err = (x_hat - x).lpNorm<Eigen::Infinity>();
    const double u = (rng.next_double() - 0.5) * 0.2;
    x_pred = quiet.A * x_hat + quiet.B * u;
    x = quiet.A * x + quiet.B * u;
  }
  CHECK(final_err < 1e-8);
}

TEST_CASE("mid-rise quantizer: worked example and inverse") {
  const QuantizerConfig qc{10, 0.1};
  const QuantResult q = quantize(qc, 0.17);
  CHECK(q.block.bits == 513);  // floor(0.17 / 0.1) + 512
  CHECK(q.block.len == 10);
  CHECK(!q.saturated);
  CHECK_NEAR(dequantize(qc, q.block), 0.15, 1e-12);
}

TEST_CASE("quantizer saturates at the edge cells and flags it") {
  const QuantizerConfig qc{4, 0.1};  // 16 cells covering [-0.8, 0.8)
  const QuantResult hi = quantize(qc, 5.0);
  CHECK(hi.block.bits == 15);
  CHECK(hi.saturated);
  const QuantResult lo = quantize(qc, -5.0);
  CHECK(lo.block.bits == 0);
  CHECK(lo.saturated);
  const QuantResult edge = quantize(qc, 0.79);
  CHECK(edge.block.bits == 15);
  CHECK(!edge.saturated);
}

TEST_CASE("quantizer round trip stays within half a cell") {
  Rng rng(seed_split(11, "quant"));
  const QuantizerConfig qc{8, 0.01};  // covers (-1.28, 1.28)
  for (int trial = 0; trial < 1000; ++trial) {
    const double y = (rng.next_double() - 0.5) * 2.5;
    const QuantResult q = quantize(qc, y);
    CHECK(!q.saturated);
    CHECK(std::abs(dequantize(qc, q.block) - y) <= qc.delta / 2 + 1e-12);
  }
  CHECK_THROWS(quantize({0, 0.1}, 0.0));
  CHECK_THROWS(quantize({64, 0.1}, 0.0));
  CHECK_THROWS(quantize({4, 0.0}, 0.0));
}

TEST_CASE("observability matrix of the canonical form is unit triangular") {
  const PlantModel plant = cart_stick_plant();
  Eigen::MatrixXd obs(3, 3);
  Eigen::RowVectorXd row = plant.C;
  for (int i = 0; i < 3; ++i) {
    obs.row(i) = row;
    row = row * plant.A;
  }
  for (int i = 0; i < 3; ++i) {
    CHECK_NEAR(obs(i, i), 1.0, 1e-12);
    for (int j = i + 1; j < 3; ++j) CHECK_NEAR(obs(i, j), 0.0, 1e-12);
  }
}

TEST_CASE("deadbeat observer is exact on noise-free exact measurements") {
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  Rng rng(seed_split(12, "obs"));
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd cur(3);
    cur << rng.next_double() - 0.5, rng.next_double() - 0.5,
        rng.next_double() - 0.5;
    std::vector<double> ys{plant.C.dot(cur)};
    std::vector<double> us;
    const int steps = 3 + static_cast<int>(rng.below(6));  // >= dim
    for (int t = 1; t < steps; ++t) {
      const double u = (rng.next_double() - 0.5) * 2.0;
      us.push_back(u);
      const auto [x_next, y_next] = plant_step(plant, cur, u, rng);
      cur = x_next;
      ys.push_back(y_next);
    }
    const Eigen::VectorXd x_hat = reconstruct_state(plant, ys, us);
    CHECK((x_hat - cur).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("deadbeat observer is exact for zero start even before m steps") {
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  Rng rng(seed_split(13, "obs0"));
  Eigen::VectorXd cur = Eigen::VectorXd::Zero(3);
  std::vector<double> ys{plant.C.dot(cur)};
  std::vector<double> us;
  for (int t = 1; t <= 2; ++t) {
    const Eigen::VectorXd x_hat = reconstruct_state(plant, ys, us);
    CHECK((x_hat - cur).lpNorm<Eigen::Infinity>() < 1e-9);
    const double u = (rng.next_double() - 0.5) * 2.0;
    us.push_back(u);
    const auto [x_next, y_next] = plant_step(plant, cur, u, rng);
    cur = x_next;
    ys.push_back(y_next);
  }
  CHECK_THROWS(reconstruct_state(plant, {}, {}));
  const std::vector<double> one_y{0.5};
  const std::vector<double> stray_u{0.1};
  CHECK_THROWS(reconstruct_state(plant, one_y, stray_u));
}

TEST_CASE("observer error with quantized measurements obeys the bound") {
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  const QuantizerConfig qc{12, 0.001};
  // Bound: |A^{m-1}|_inf |O^{-1}|_inf e_max with e_max = delta / 2.
  Eigen::MatrixXd obs(3, 3);
  Eigen::RowVectorXd row = plant.C;
  for (int i = 0; i < 3; ++i) {
    obs.row(i) = row;
    row = row * plant.A;
  }
  const Eigen::MatrixXd a2 = plant.A * plant.A;
  const double bound = a2.cwiseAbs().rowwise().sum().maxCoeff() *
                       obs.inverse().cwiseAbs().rowwise().sum().maxCoeff() *
                       (qc.delta / 2.0);
  Rng rng(seed_split(14, "obsq"));
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd cur(3);
    cur << (rng.next_double() - 0.5) * 0.2, (rng.next_double() - 0.5) * 0.2,
        (rng.next_double() - 0.5) * 0.2;
    // Exactly dim() measurements: the open-loop plant grows ~1.75x per step,
    // so longer histories would push y outside the quantizer's +/-2.048 span.
    std::vector<double> ys{plant.C.dot(cur)};
    std::vector<double> us;
    for (int t = 1; t < 3; ++t) {
      const double u = (rng.next_double() - 0.5) * 0.5;
      us.push_back(u);
      const auto [x_next, y_next] = plant_step(plant, cur, u, rng);
      cur = x_next;
      ys.push_back(y_next);
    }
    std::vector<double> y_hat;
    for (double y : ys) {
      const QuantResult q = quantize(qc, y);
      REQUIRE(!q.saturated);
      y_hat.push_back(dequantize(qc, q.block));
    }
    const Eigen::VectorXd x_hat = reconstruct_state(plant, y_hat, us);
    CHECK((x_hat - cur).lpNorm<Eigen::Infinity>() <= bound + 1e-12);
  }
}

TEST_CASE("feedback gain application") {
  const PlantModel plant = cart_stick_plant();
  Eigen::VectorXd x(3);
  x << 0.1, -0.2, 0.3;
  CHECK_NEAR(control_input(plant, x), plant.K.dot(x), 1e-15);
  CHECK_THROWS(control_input(plant, Eigen::VectorXd::Zero(2)));
}

TEST_CASE("quadratic cost of a single unit-state step is one half") {
  ControlTrace trace;
  StepRecord rec;
  rec.x = Eigen::VectorXd::Zero(3);
  rec.x(0) = 1.0;
  rec.u = 0.0;
  trace.steps.push_back(rec);
  CHECK_NEAR(lqr_cost(trace), 0.5, 1e-15);
  CHECK(lqr_cost(ControlTrace{}) == 0.0);
}

TEST_CASE("closed loop splits quantizer bits MSB-first across sub-blocks") {
  // Passthrough sub-code (3, 2), two sub-blocks per step: the four quantizer
  // bits of cell 9 = 0b1001 must appear as 0b10 then 0b01, i.e. transmitted
  // bit pattern (0,1,0) then (1,0,0) on a clean channel.
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  const LtiCode code = passthrough_code(3, 2, 4);
  const ChannelModel ch = make_bsc(0.0);
  LoopConfig cfg;
  cfg.quantizer = {4, 0.1};
  cfg.metric = {0.5, 1.0};
  cfg.horizon = 2;
  cfg.subblocks_per_step = 2;
  cfg.x0 = Eigen::VectorXd::Zero(3);
  cfg.x0(0) = 0.17;
  Rng rng(seed_split(15, "msb"));
  const ControlTrace trace = run_closed_loop(plant, code, ch, cfg, rng);
  REQUIRE(trace.steps.size() == 2);
  const StepRecord& s0 = trace.steps[0];
  CHECK(s0.y == 0.17);
  CHECK(s0.bin == 9);
  CHECK(!s0.saturated);
  REQUIRE(s0.z.size() == 6);
  const std::vector<Symbol> want{0, 1, 0, 1, 0, 0};
  CHECK(std::equal(s0.z.begin(), s0.z.end(), want.begin()));
  CHECK(s0.status == seqdec::DecodeStatus::kCompleted);
  // First estimate is the dequantized cell midpoint.
  REQUIRE(trace.estimates.size() == 2);
  REQUIRE(trace.estimates[0].size() == 1);
  CHECK_NEAR(trace.estimates[0][0], 0.15, 1e-12);
  CHECK(trace.decode_failures == 0);
}

TEST_CASE("closed loop validates its configuration") {
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  const LtiCode code = passthrough_code(3, 2, 4);
  const ChannelModel ch = make_bsc(0.0);
  LoopConfig good;
  good.quantizer = {4, 0.1};
  good.metric = {0.5, 1.0};
  good.horizon = 2;
  good.subblocks_per_step = 2;
  Rng rng(1);

  LoopConfig bad = good;
  bad.subblocks_per_step = 0;
  CHECK_THROWS(run_closed_loop(plant, code, ch, bad, rng));
  bad = good;
  bad.quantizer.bits = 6;  // != k * g
  CHECK_THROWS(run_closed_loop(plant, code, ch, bad, rng));
  bad = good;
  bad.horizon = 0;
  CHECK_THROWS(run_closed_loop(plant, code, ch, bad, rng));
  bad = good;
  bad.horizon = 3;  // needs 6 tree depths, the code stops at 4
  CHECK_THROWS(run_closed_loop(plant, code, ch, bad, rng));
  bad = good;
  bad.x0 = Eigen::VectorXd::Zero(2);
  CHECK_THROWS(run_closed_loop(plant, code, ch, bad, rng));
}

TEST_CASE("noise-free fine-quantizer loop keeps the plant parked") {
  // From a zero start with no process noise the only excitation is the
  // quantizer dither (a mid-rise grid has no zero cell), which the loop must
  // keep from amplifying: tiny time-average cost, no failures, no
  // saturation, all-ones decode work.
  PlantModel plant = cart_stick_plant();
  plant.noise_sigma = 0.0;
  Rng rng_code(seed_split(16, "parkcode"));
  const LtiCode code = treecode::sample_lti(7, 6, 240, true, rng_code);
  const ChannelModel ch = make_bsc(0.0);
  LoopConfig cfg;
  cfg.quantizer = {12, 1e-5};
  cfg.metric = {code.rate(), 1.0};
  cfg.horizon = 120;
  cfg.subblocks_per_step = 2;
  Rng rng(seed_split(16, "park"));
  const ControlTrace trace = run_closed_loop(plant, code, ch, cfg, rng);
  REQUIRE(trace.steps.size() == 120);
  CHECK(trace.decode_failures == 0);
  CHECK(trace.saturations == 0);
  for (const StepRecord& s : trace.steps) {
    CHECK(s.status == seqdec::DecodeStatus::kCompleted);
    CHECK_NEAR(s.u, plant.K.dot(s.x_hat), 1e-12);
  }
  CHECK(lqr_cost(trace) < 1e-2);
}

TEST_CASE("noisy loop bookkeeping stays consistent") {
  const PlantModel plant = cart_stick_plant();
  Rng rng_code(seed_split(17, "noisycode"));
  const LtiCode code = treecode::sample_lti(10, 2, 40, true, rng_code);
  const ChannelModel ch = make_bsc(0.01);
  LoopConfig cfg;
  cfg.quantizer = {2, 0.1};
  cfg.metric = {channel::cutoff_rate(ch), 1.0};
  cfg.horizon = 40;
  cfg.limits.max_nodes = 20000;
  Rng rng(seed_split(17, "noisy"));
  const ControlTrace trace = run_closed_loop(plant, code, ch, cfg, rng);
  REQUIRE(trace.steps.size() == 40);
  REQUIRE(trace.estimates.size() == 40);
  uint64_t failures = 0;
  uint64_t saturations = 0;
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const StepRecord& s = trace.steps[t];
    CHECK(trace.estimates[t].size() == t + 1);
    CHECK(s.z.size() == code.n);
    if (s.status != seqdec::DecodeStatus::kCompleted) ++failures;
    if (s.saturated) ++saturations;
    CHECK_NEAR(s.u, plant.K.dot(s.x_hat), 1e-12);
    CHECK(s.x.lpNorm<Eigen::Infinity>() < 1e6);  // bounded, not divergent
  }
  CHECK(trace.decode_failures == failures);
  CHECK(trace.saturations == saturations);
}

TEST_SUITE_END();
