#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "keylock/bignat.hpp"

namespace keylock {

// 256-bit opaque secret from which all transform randomness is derived.
// Any 32-byte value is valid; equality is byte equality. Note the effective
// key space is min(2^256, (c*M*M)!) for a given shuffle configuration.
struct SecretKey {
  std::array<std::uint8_t, 32> bytes{};

  bool operator==(const SecretKey&) const = default;

  std::string to_hex() const;                      // 64 lowercase hex chars
  static SecretKey from_hex(std::string_view hex); // throws on malformed input

  // First 8 hex chars of SHA-256(bytes); safe to store in checkpoints.
  std::string fingerprint() const;
};

// Fresh key from OS entropy. Throws std::runtime_error("entropy unavailable")
// if the entropy source fails.
SecretKey generate_key();

// Deterministic key for reproducible experiments:
// bytes = SHA-256("keylock/keygen/v1" || seed as 8-byte big-endian).
SecretKey generate_key(std::uint64_t seed);

// Bijection on {0,...,n-1}. 0-based throughout. Immutable once built.
class Permutation {
 public:
  // Validates that `map` is a bijection; throws std::invalid_argument if not.
  explicit Permutation(std::vector<std::uint32_t> map);

  static Permutation identity(std::uint32_t n);

  std::uint32_t size() const { return std::uint32_t(map_.size()); }
  std::uint32_t operator[](std::uint32_t k) const { return map_[k]; }
  const std::vector<std::uint32_t>& map() const { return map_; }

  // q with q[p[k]] == k for every k.
  Permutation inverted() const;

  bool operator==(const Permutation&) const = default;

  std::string to_string() const;  // "2,0,1" (debugging aid)

 private:
  std::vector<std::uint32_t> map_;
};

// Keyed permutation of {0,...,n-1}. Pure function of (key bytes, n); the
// construction is fixed forever: Fisher-Yates driven by the SHA-256 counter
// DRBG seeded with SHA-256(key || n as 8-byte big-endian || "keylock/perm/v1"),
// index draws rejection-sampled. Throws on n == 0.
Permutation derive_permutation(const SecretKey& key, std::uint32_t n);

// Exact (c*M*M)! as an arbitrary-precision integer. Errors if c*M*M overflows
// the 32-bit count type.
BigNat key_space_size(std::uint32_t channels, std::uint32_t block);

// Key file format: 64 lowercase hex characters plus trailing newline.
SecretKey load_key_file(const std::filesystem::path& path);
void save_key_file(const SecretKey& key, const std::filesystem::path& path);

}  // namespace keylock
