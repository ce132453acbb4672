#include "anytime/channel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace anytime::channel {

namespace {

constexpr double kProbabilityTol = 1e-12;

double log2_safe(double x) { return std::log2(x); }

// Maximizes f over [lo, hi] by a dense grid pass (step ~1e-3) followed by
// golden-section refinement to 1e-6 on the argument, with the interval
// endpoints evaluated explicitly and preferred on ties. The explicit endpoint
// check makes boundary maximizers exact, which downstream identities rely on
// (e.g. E_J(R_0, R) == E_G(R) whenever rho* = 1).
template <typename F>
ExponentResult maximize_on_interval(F&& f, double lo, double hi) {
  constexpr double kGridStep = 1e-3;
  constexpr double kArgTol = 1e-6;

  const int cells = std::max(1, static_cast<int>(std::ceil((hi - lo) / kGridStep)));
  double best_x = lo, best_v = f(lo);
  for (int i = 1; i <= cells; ++i) {
    const double x = (i == cells) ? hi : lo + (hi - lo) * i / cells;
    const double v = f(x);
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }

  // Golden-section on the bracket around the best grid point.
  double a = std::max(lo, best_x - (hi - lo) / cells);
  double b = std::min(hi, best_x + (hi - lo) / cells);
  constexpr double invphi = 0.6180339887498948482;
  double c = b - (b - a) * invphi;
  double d = a + (b - a) * invphi;
  double fc = f(c), fd = f(d);
  while (b - a > kArgTol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * invphi;
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * invphi;
      fd = f(d);
    }
  }
  const double xm = 0.5 * (a + b);
  const double vm = f(xm);
  if (vm > best_v) {
    best_v = vm;
    best_x = xm;
  }
  // Snap to the endpoints whenever they are at least as good.
  const double v_lo = f(lo), v_hi = f(hi);
  if (v_hi >= best_v) {
    best_v = v_hi;
    best_x = hi;
  }
  if (v_lo >= best_v) {
    best_v = v_lo;
    best_x = lo;
  }
  return {best_v, best_x};
}

}  // namespace

ChannelModel::ChannelModel(std::vector<std::string> alphabet,
                           std::vector<double> w0, std::vector<double> w1,
                           std::vector<Symbol> involution)
    : alphabet_(std::move(alphabet)),
      w0_(std::move(w0)),
      w1_(std::move(w1)),
      involution_(std::move(involution)) {
  const size_t m = w0_.size();
  if (m == 0) throw std::invalid_argument("ChannelModel: empty alphabet");
  if (alphabet_.size() != m || w1_.size() != m || involution_.size() != m)
    throw std::invalid_argument("ChannelModel: size mismatch");
  double s0 = 0, s1 = 0;
  for (size_t z = 0; z < m; ++z) {
    if (w0_[z] < 0 || w0_[z] > 1 || w1_[z] < 0 || w1_[z] > 1)
      throw std::invalid_argument("ChannelModel: probability out of [0,1]");
    s0 += w0_[z];
    s1 += w1_[z];
  }
  if (std::abs(s0 - 1.0) > kProbabilityTol || std::abs(s1 - 1.0) > kProbabilityTol)
    throw std::invalid_argument("ChannelModel: distributions must sum to 1");
  for (size_t z = 0; z < m; ++z) {
    const Symbol s = involution_[z];
    if (s >= m) throw std::invalid_argument("ChannelModel: involution out of range");
    if (involution_[s] != z)
      throw std::invalid_argument("ChannelModel: map is not an involution");
    if (std::abs(w0_[z] - w1_[s]) > kProbabilityTol)
      throw std::invalid_argument("ChannelModel: symmetry w0(z) = w1(sigma(z)) violated");
  }
  marginal_.resize(m);
  for (size_t z = 0; z < m; ++z) marginal_[z] = 0.5 * (w0_[z] + w1_[z]);
}

ChannelModel make_bsc(double p) {
  if (!(p >= 0.0 && p < 0.5))
    throw std::invalid_argument("make_bsc: p must be in [0, 0.5)");
  return ChannelModel({"+", "-"}, {1.0 - p, p}, {p, 1.0 - p}, {1, 0});
}

double output_marginal(const ChannelModel& ch, Symbol z) {
  if (z >= ch.size()) throw std::out_of_range("output_marginal: bad symbol");
  return ch.marginal(z);
}

double e0(const ChannelModel& ch, double rho) {
  if (rho < 0.0) throw std::invalid_argument("e0: rho must be >= 0");
  const double s = 1.0 / (1.0 + rho);
  double sum = 0;
  for (Symbol z = 0; z < ch.size(); ++z) {
    const double a = std::pow(ch.w0(z), s) + std::pow(ch.w1(z), s);
    sum += std::pow(a, 1.0 + rho);
  }
  return 1.0 + rho - log2_safe(sum);
}

ExponentResult gallager_exponent(const ChannelModel& ch, double rate) {
  if (rate < 0) throw std::invalid_argument("gallager_exponent: rate < 0");
  auto f = [&](double rho) { return e0(ch, rho) - rho * rate; };
  ExponentResult r = maximize_on_interval(f, 0.0, 1.0);
  if (r.value <= 0) return {0.0, 0.0};  // at/above capacity
  return r;
}

double cutoff_rate(const ChannelModel& ch) { return e0(ch, 1.0); }

double critical_rate(const ChannelModel& ch) {
  auto diff = [&](double h) {
    return (e0(ch, 1.0 + h) - e0(ch, 1.0 - h)) / (2.0 * h);
  };
  const double coarse = diff(1e-4);
  const double fine = diff(1e-5);
  // Central differences converge as h^2; disagreement here means the model
  // is numerically degenerate rather than a step-size problem.
  if (std::abs(coarse - fine) > 1e-6)
    throw std::runtime_error("critical_rate: finite difference did not converge");
  return fine;
}

double capacity(const ChannelModel& ch) {
  double c = 0;
  for (Symbol z = 0; z < ch.size(); ++z) {
    const double p = ch.marginal(z);
    if (ch.w0(z) > 0) c += 0.5 * ch.w0(z) * log2_safe(ch.w0(z) / p);
    if (ch.w1(z) > 0) c += 0.5 * ch.w1(z) * log2_safe(ch.w1(z) / p);
  }
  return c;
}

ExponentResult jelinek_exponent(const ChannelModel& ch, double bias,
                                double rate) {
  if (rate < 0) throw std::invalid_argument("jelinek_exponent: rate < 0");
  if (bias >= cutoff_rate(ch)) {
    // Legal but the error-bound constant diverges; say so once per process
    // instead of once per grid point.
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "jelinek_exponent: bias " << bias
                << " >= cutoff rate; error-bound constant is unbounded "
                   "(further warnings suppressed)\n";
    }
  }
  auto f = [&](double rho) {
    return rho / (1.0 + rho) * (e0(ch, rho) + bias - (1.0 + rho) * rate);
  };
  ExponentResult r = maximize_on_interval(f, 0.0, 1.0);
  if (r.value <= 0) return {0.0, 0.0};
  return r;
}

double jelinek_constant(const ChannelModel& ch, double rho, double bias,
                        double delta) {
  if (rho < 0 || rho > 1)
    throw std::invalid_argument("jelinek_constant: rho must be in [0, 1]");
  const double gap = e0(ch, rho) - rho * bias;
  if (gap <= 0)
    throw std::invalid_argument(
        "jelinek_constant: requires E_0(rho) - rho*bias > 0");
  return std::exp(rho * delta / (1.0 + rho)) / (1.0 - std::exp(-gap));
}

double certification_bound(double eps, uint32_t n, uint32_t d0) {
  if (eps <= 0 || n == 0)
    throw std::invalid_argument("certification_bound: need eps > 0 and n > 0");
  const double en = eps * n;
  return std::exp2(-en * d0) / (1.0 - std::exp2(-en));
}

std::vector<Symbol> simulate(const ChannelModel& ch,
                             std::span<const uint8_t> bits, Rng& rng) {
  std::vector<Symbol> out(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw std::invalid_argument("simulate: bits must be 0/1");
    const double u = rng.next_double();
    double cum = 0;
    Symbol z = static_cast<Symbol>(ch.size() - 1);
    for (Symbol cand = 0; cand < ch.size(); ++cand) {
      cum += ch.w(cand, bits[i] != 0);
      if (u < cum) {
        z = cand;
        break;
      }
    }
    out[i] = z;
  }
  return out;
}

std::vector<Symbol> simulate_blocks(const ChannelModel& ch,
                                    std::span<const gf2::BitBlock> blocks,
                                    Rng& rng) {
  std::vector<uint8_t> bits;
  for (const auto& b : blocks)
    for (uint32_t i = 0; i < b.len; ++i) bits.push_back(b.bit(i) ? 1 : 0);
  return simulate(ch, bits, rng);
}

}  // namespace anytime::channel
