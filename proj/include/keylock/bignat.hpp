#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace keylock {

// Minimal arbitrary-precision natural number: just enough for exact
// factorials (key-space sizes) and their decimal rendering.
class BigNat {
 public:
  BigNat() : limbs_{0} {}
  explicit BigNat(std::uint64_t value);

  static BigNat factorial(std::uint32_t n);

  void mul_u32(std::uint32_t factor);

  bool operator==(const BigNat& other) const { return limbs_ == other.limbs_; }

  std::string to_string() const;  // decimal
  std::size_t digit_count() const;

 private:
  // little-endian base-2^32 limbs; no leading zero limb except for zero itself
  std::vector<std::uint32_t> limbs_;

  void trim();
};

}  // namespace keylock
