#pragma once

#include <cstdint>
#include <span>

#include "keylock/sha256.hpp"

namespace keylock {

// SplitMix64. Fast deterministic stream for augmentation draws, subset
// sampling, epoch shuffling and parameter init. Pure integer arithmetic, so
// the stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint32_t next_u32() { return std::uint32_t(next_u64() >> 32); }

  // Unbiased draw from {0,...,bound-1} by rejection sampling.
  std::uint32_t next_below(std::uint32_t bound);

  // Uniform in [0,1) with 24 bits of mantissa.
  float next_unit() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  bool next_bit() { return (next_u64() >> 63) != 0; }

 private:
  std::uint64_t state_;
};

// Derives a child seed; used to split one master seed into independent
// streams (init, augmentation, epoch order, ...).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

// Deterministic random-byte generator with a fixed-forever construction:
// block i = SHA-256(seed bytes || i as 8-byte big-endian). Used wherever the
// output must be reproducible across platforms and releases (permutation
// derivation, key sampling).
class Drbg {
 public:
  explicit Drbg(const Digest& seed) : seed_(seed) {}

  void fill(std::span<std::uint8_t> out);
  std::uint32_t next_u32();

  // Unbiased draw from {0,...,bound-1} by rejection sampling (no modulo bias).
  std::uint32_t next_below(std::uint32_t bound);

 private:
  Digest seed_;
  std::uint64_t counter_ = 0;
  Digest block_{};
  std::size_t pos_ = sizeof(Digest);  // forces first refill

  void refill();
};

}  // namespace keylock
