#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "anytime/channel.hpp"
#include "anytime/gf2.hpp"
#include "anytime/rng.hpp"
#include "anytime/seqdec.hpp"
#include "anytime/treecode.hpp"

namespace anytime::control {

// Discrete-time scalar-output plant in observer canonical form:
//   x_{t+1} = A x_t + B u_t + w_t,   y_t = C x_t + v_t,
// with C = [1 0 ... 0] and state feedback u = K x_hat. Process/measurement
// noise components are i.i.d. truncated Gaussians (std sigma, support
// [-trunc, trunc]).
struct PlantModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::RowVectorXd C;
  Eigen::RowVectorXd K;
  double noise_sigma = 0.1;
  double noise_trunc = 0.025;

  int dim() const { return static_cast<int>(A.rows()); }
  // Shape checks plus the canonical-form requirement on C. Stability of
  // A + B K is a property of the supplied gains, verified in tests rather
  // than asserted here.
  void validate() const;
};

// The inverted-stick-on-cart benchmark plant (3-state canonical form,
// open-loop dominant eigenvalue 1.75) with its published deadbeat-flavored
// feedback gain.
PlantModel cart_stick_plant();

// Gaussian with std sigma conditioned on [-bound, bound], via rejection.
// sigma == 0 returns 0 without consuming randomness.
double sample_truncated_gaussian(double sigma, double bound, Rng& rng);

// Exact variance of that truncated Gaussian (0 when either parameter is 0).
double truncated_gaussian_variance(double sigma, double bound);

// One plant transition: draws the dim process-noise components then the
// measurement noise, in that fixed order. Returns (x_next, y_next).
std::pair<Eigen::VectorXd, double> plant_step(const PlantModel& plant,
                                              const Eigen::VectorXd& x,
                                              double u, Rng& rng);

// Saturating mid-rise uniform quantizer with 2^bits cells of width delta
// centered on y = 0. In-range values reproduce to within delta / 2;
// out-of-range values clamp to the edge cells and are flagged.
struct QuantizerConfig {
  uint32_t bits = 0;
  double delta = 0.1;
};

struct QuantResult {
  gf2::BitBlock block;  // cell index, bit j = bit j of the index
  bool saturated = false;
};

QuantResult quantize(const QuantizerConfig& qc, double y);
double dequantize(const QuantizerConfig& qc, const gf2::BitBlock& block);

// Deadbeat observer: solves for the state from the last dim() measurement
// estimates and the known inputs via the observability matrix, then rolls
// forward to the present. Histories shorter than dim() are zero-padded in
// front (zero initial state). y_est has one entry per step 1..t; u_hist has
// the inputs u_1..u_{t-1}.
Eigen::VectorXd reconstruct_state(const PlantModel& plant,
                                  std::span<const double> y_est,
                                  std::span<const double> u_hist);

// Stationary measurement-update filter gain: the fixed point of the
// covariance recursion with process covariance process_var * I and scalar
// measurement variance meas_var. The resulting one-step predictor
// A (I - gain C) is asymptotically stable for the observable canonical
// plants used here; errors in the measurements are smoothed instead of
// inverted, which is what keeps a coarse quantizer usable in the loop
// (pass the quantizer's delta^2 / 12 as part of meas_var).
Eigen::VectorXd observer_gain(const PlantModel& plant, double process_var,
                              double meas_var);

double control_input(const PlantModel& plant, const Eigen::VectorXd& x_hat);

struct StepRecord {
  Eigen::VectorXd x;      // true state at this step
  double y = 0;           // noisy measurement
  uint32_t bin = 0;       // quantizer cell
  bool saturated = false;
  std::vector<channel::Symbol> z;  // channel output for this step's blocks
  Eigen::VectorXd x_hat;  // controller's state estimate
  double u = 0;           // input applied at this step (= K x_hat)
  seqdec::DecodeStatus status = seqdec::DecodeStatus::kCompleted;
  uint64_t decode_work = 0;  // branch computations spent this step
};

struct ControlTrace {
  std::vector<StepRecord> steps;
  // estimates[t-1] = controller-side measurement estimates y_hat_{1..t|t}
  // after step t's decode (the anytime refinements).
  std::vector<std::vector<double>> estimates;
  uint64_t decode_failures = 0;  // steps whose decode did not complete
  uint64_t saturations = 0;
};

// Time-average quadratic cost (1/2T) sum_{t=1..T} (|x_t|^2 + u_t^2).
double lqr_cost(const ControlTrace& trace);

struct LoopConfig {
  QuantizerConfig quantizer;
  seqdec::MetricConfig metric;
  seqdec::DecoderLimits limits;
  uint32_t horizon = 0;  // number of closed-loop steps T
  // Sub-blocks encoded per measurement (1 = one tree branch per step). When
  // g > 1 the code must have dimensions (n/g, k/g) and horizon >= T * g; the
  // quantizer bits are split MSB-first into g message blocks.
  uint32_t subblocks_per_step = 1;
  Eigen::VectorXd x0;  // empty = zero initial state
};

// Runs the quantize -> encode -> channel -> sequential-decode -> filter ->
// feedback loop for cfg.horizon steps. The decoder re-runs on the full
// received prefix every step (bounded by cfg.limits); when a decode commits
// only a partial path, surviving estimates are reused and the newest
// measurement falls back to the model prediction. The state estimate comes
// from replaying the stationary filter (observer_gain with the plant noise
// plus quantization variance) over the current best measurement estimates,
// so late revisions of old blocks — the anytime property — propagate into
// x_hat the step they arrive.
ControlTrace run_closed_loop(const PlantModel& plant,
                             const treecode::LtiCode& code,
                             const channel::ChannelModel& ch,
                             const LoopConfig& cfg, Rng& rng);

}  // namespace anytime::control
