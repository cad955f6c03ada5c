#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace himosa {

// Deterministic helpers on top of mt19937_64. std::*_distribution is not
// bit-pinned across standard libraries, so every draw the library's
// determinism depends on goes through these instead.

uint64_t mix_seed(uint64_t seed, uint64_t salt);
uint64_t hash_name(std::string_view s);

// Uniform integer in [0, n). n must be positive.
uint64_t rng_below(std::mt19937_64& g, uint64_t n);

// Uniform double in [0, 1).
double rng_unit(std::mt19937_64& g);

// Standard normal via Box-Muller (both values consumed, one returned).
double rng_normal(std::mt19937_64& g);

// Normal(0, sigma) resampled while |z| > bound.
double rng_trunc_normal(std::mt19937_64& g, double sigma, double bound);

}  // namespace himosa
