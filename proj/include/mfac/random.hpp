#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mfac {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
double uniform01(Rng& rng);

/// Inverse-CDF draw from a pmf. Trailing mass lost to rounding falls on the
/// last index with positive probability.
std::size_t sample_categorical(std::span<const double> pmf, Rng& rng);

/// Bernoulli(p) via one uniform draw.
bool sample_bernoulli(double p, Rng& rng);

/// Stateless seed mixing (splitmix64 over the inputs); used to give every
/// (state, iteration) pair its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace mfac
