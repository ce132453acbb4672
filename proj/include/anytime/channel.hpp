#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anytime/gf2.hpp"
#include "anytime/rng.hpp"

namespace anytime::channel {

using Symbol = uint32_t;

// Memoryless binary-input channel with a finite output alphabet and the
// output-symmetry property: there is an involution sigma on the outputs with
// w0(z) = w1(sigma(z)). All exponent formulas below assume this symmetry
// (uniform inputs are optimal, so no input distribution appears anywhere).
//
// Conventions used throughout the library: logarithms are base 2 and every
// exponent/rate is measured in bits per channel use.
class ChannelModel {
 public:
  // Validates: matching sizes, probabilities in [0,1] summing to 1 within
  // 1e-12 per input, sigma an involution with w0(z) == w1(sigma(z)).
  ChannelModel(std::vector<std::string> alphabet, std::vector<double> w0,
               std::vector<double> w1, std::vector<Symbol> involution);

  size_t size() const { return w0_.size(); }
  const std::string& symbol_name(Symbol z) const { return alphabet_[z]; }
  double w0(Symbol z) const { return w0_[z]; }
  double w1(Symbol z) const { return w1_[z]; }
  double w(Symbol z, bool input_bit) const {
    return input_bit ? w1_[z] : w0_[z];
  }
  Symbol involution(Symbol z) const { return involution_[z]; }
  // Output distribution under equiprobable inputs, (w0(z) + w1(z)) / 2.
  double marginal(Symbol z) const { return marginal_[z]; }

 private:
  std::vector<std::string> alphabet_;
  std::vector<double> w0_, w1_;
  std::vector<Symbol> involution_;
  std::vector<double> marginal_;
};

// Binary symmetric channel with crossover probability p in [0, 0.5).
// Output 0 agrees with input bit 0; the involution swaps the two symbols.
ChannelModel make_bsc(double p);

double output_marginal(const ChannelModel& ch, Symbol z);

// Gallager function E_0(rho) in bits/use; defined for rho >= 0 (values above
// 1 are permitted: they are needed for complexity-exponent root finding and
// for differentiating at rho = 1).
double e0(const ChannelModel& ch, double rho);

struct ExponentResult {
  double value = 0;
  double rho_star = 0;
};

// Block random-coding exponent  E_G(R) = max_{0<=rho<=1} E_0(rho) - rho R.
ExponentResult gallager_exponent(const ChannelModel& ch, double rate);

// Cutoff rate R_0 = E_0(1).
double cutoff_rate(const ChannelModel& ch);

// Critical rate E_0'(1), central finite difference at step 1e-5.
double critical_rate(const ChannelModel& ch);

// Channel capacity (uniform inputs), sum_z sum_b (1/2) w(z|b) log2(w(z|b)/p(z)).
double capacity(const ChannelModel& ch);

// Sequential-decoding error exponent with metric bias B:
//   E_J(B, R) = max_{0<=rho<=1} rho/(1+rho) * (E_0(rho) + B - (1+rho) R).
// Warns on stderr when B >= R_0 (the multiplying constant of the error bound
// is unbounded there; the exponent itself is still well defined).
ExponentResult jelinek_exponent(const ChannelModel& ch, double bias,
                                double rate);

// Multiplying constant of the sequential-decoding error bound,
//   A = e^{rho delta / (1+rho)} / (1 - e^{-(E_0(rho) - rho B)}),
// evaluated verbatim in natural base even though E_0 and B are bit-valued
// (the bound is published in this mixed form; it stays a valid overbound).
// Requires E_0(rho) - rho B > 0.
double jelinek_constant(const ChannelModel& ch, double rho, double bias,
                        double delta);

// Ensemble certification bound: the probability that a randomly drawn code
// fails to be anytime-reliable with exponent (target - eps) at delays >= d0
// is at most  2^{-eps n d0} / (1 - 2^{-eps n}).  Requires eps * n > 0.
double certification_bound(double eps, uint32_t n, uint32_t d0);

// Transmits code bits through the channel; one output symbol per input bit,
// sampled by inverse CDF from fixed-order raw uniforms (deterministic per
// seed). bits entries must be 0 or 1.
std::vector<Symbol> simulate(const ChannelModel& ch,
                             std::span<const uint8_t> bits, Rng& rng);

// Convenience: transmit a sequence of packed code blocks; returns the
// concatenated symbol stream (block t occupies positions [t*n, (t+1)*n)).
std::vector<Symbol> simulate_blocks(const ChannelModel& ch,
                                    std::span<const gf2::BitBlock> blocks,
                                    Rng& rng);

}  // namespace anytime::channel
