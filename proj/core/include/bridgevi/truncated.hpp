#pragma once

#include <random>

namespace bridgevi {

/// Normal(mean, sd) restricted to (lo, hi); either bound may be infinite.
/// Exact iid draws: normal, uniform or exponential rejection depending on the
/// standardized interval.
double sample_truncated_normal(double mean, double sd, double lo, double hi, std::mt19937_64& rng);

/// Exponential(rate) restricted to (lo, inf).
double sample_truncated_exponential(double rate, double lo, std::mt19937_64& rng);

/// Gamma(shape, rate) restricted to (0, hi); hi may be infinite.
double sample_truncated_gamma(double shape, double rate, double hi, std::mt19937_64& rng);

}  // namespace bridgevi
