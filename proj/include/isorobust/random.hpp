#ifndef ISOROBUST_RANDOM_HPP
#define ISOROBUST_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace isorobust {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Named sub-seed: every stream in a run is derived from the run seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);

/// Gamma(shape, 1) by Marsaglia-Tsang; shapes below 1 use the u^(1/shape) boost.
double sample_gamma(Rng& rng, double shape);

/// Beta(alpha, beta) as X / (X + Y) with X ~ Gamma(alpha), Y ~ Gamma(beta).
double sample_beta(Rng& rng, double alpha, double beta);

}  // namespace isorobust

#endif  // ISOROBUST_RANDOM_HPP
