#include "himosa/rng.hpp"

#include <cmath>

namespace himosa {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 finalizer over the xor; decorrelates low-entropy (seed, salt)
  // pairs such as consecutive iteration counters.
  uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t hash_name(std::string_view s) {
  // FNV-1a, 64-bit.
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t rng_below(std::mt19937_64& g, uint64_t n) {
  // Rejection-free modulo draw. The bias is < n/2^64, far below anything the
  // library observes, and unlike std::uniform_int_distribution the output is
  // identical everywhere.
  return g() % n;
}

double rng_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

double rng_normal(std::mt19937_64& g) {
  // Box-Muller; one fresh pair per call keeps the draw count predictable.
  double u1 = rng_unit(g);
  double u2 = rng_unit(g);
  while (u1 <= 0.0) u1 = rng_unit(g);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

double rng_trunc_normal(std::mt19937_64& g, double sigma, double bound) {
  for (;;) {
    double z = rng_normal(g);
    if (std::abs(z) <= bound) return z * sigma;
  }
}

}  // namespace himosa
