#include "bridgevi/truncated.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace bridgevi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform01(std::mt19937_64& rng) {
  // (0, 1): log(u) must stay finite.
  std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
  return u(rng);
}

// Standard normal restricted to [a, b] with a >= 0.
double right_tail(double a, double b, std::mt19937_64& rng) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  if (b - a < 1.0 / rate) {
    // Narrow interval: uniform proposal, accept with exp((a^2 - z^2) / 2).
    for (;;) {
      const double z = a + (b - a) * uniform01(rng);
      if (std::log(uniform01(rng)) < 0.5 * (a * a - z * z)) return z;
    }
  }
  for (;;) {
    const double z = a - std::log(uniform01(rng)) / rate;
    if (z > b) continue;
    const double d = z - rate;
    if (std::log(uniform01(rng)) < -0.5 * d * d) return z;
  }
}

double standard_truncated(double a, double b, std::mt19937_64& rng) {
  if (a >= 0.0) return right_tail(a, b, rng);
  if (b <= 0.0) return -right_tail(-b, -a, rng);
  // Interval straddles zero.
  constexpr double kSqrt2Pi = 2.5066282746310002;
  if (b - a >= kSqrt2Pi) {
    std::normal_distribution<double> normal;
    for (;;) {
      const double z = normal(rng);
      if (z > a && z < b) return z;
    }
  }
  for (;;) {
    const double z = a + (b - a) * uniform01(rng);
    if (std::log(uniform01(rng)) < -0.5 * z * z) return z;
  }
}

}  // namespace

double sample_truncated_normal(double mean, double sd, double lo, double hi, std::mt19937_64& rng) {
  if (!(sd > 0.0) || !std::isfinite(sd)) throw std::invalid_argument("truncated normal: sd must be > 0");
  if (!(lo < hi)) throw std::invalid_argument("truncated normal: empty interval");
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  if (a == -kInf && b == kInf) {
    std::normal_distribution<double> normal(mean, sd);
    return normal(rng);
  }
  double x = mean + sd * standard_truncated(a, b, rng);
  // Guard against rounding at the interval ends.
  if (x <= lo) x = std::nextafter(lo, hi);
  if (x >= hi) x = std::nextafter(hi, lo);
  return x;
}

double sample_truncated_exponential(double rate, double lo, std::mt19937_64& rng) {
  if (!(rate > 0.0)) throw std::invalid_argument("truncated exponential: rate must be > 0");
  if (!std::isfinite(lo)) throw std::invalid_argument("truncated exponential: lower bound must be finite");
  return lo - std::log(uniform01(rng)) / rate;
}

double sample_truncated_gamma(double shape, double rate, double hi, std::mt19937_64& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw std::invalid_argument("truncated gamma: shape and rate must be > 0");
  }
  if (!(hi > 0.0)) throw std::invalid_argument("truncated gamma: empty interval");
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  if (hi == kInf) return gamma(rng);

  const double mass = boost::math::gamma_p(shape, rate * hi);
  if (mass > 0.25) {
    for (;;) {
      const double x = gamma(rng);
      if (x < hi) return x;
    }
  }
  if (mass > 1e-280) {
    const double x = boost::math::gamma_p_inv(shape, uniform01(rng) * mass) / rate;
    return std::min(x, std::nextafter(hi, 0.0));
  }
  // Essentially all mass lies beyond hi and the log density is concave
  // (shape >= 1): reject from the tangent envelope at hi.
  if (shape < 1.0) throw std::runtime_error("truncated gamma: bound too far into the lower tail");
  const double slope = (shape - 1.0) / hi - rate;
  if (!(slope > 0.0)) throw std::runtime_error("truncated gamma: inconsistent tail configuration");
  const double log_f_hi = (shape - 1.0) * std::log(hi) - rate * hi;
  for (;;) {
    const double gap = -std::log(uniform01(rng)) / slope;
    if (gap >= hi) continue;
    const double x = hi - gap;
    const double log_f = (shape - 1.0) * std::log(x) - rate * x;
    if (std::log(uniform01(rng)) < log_f - log_f_hi + slope * gap) return x;
  }
}

}  // namespace bridgevi
