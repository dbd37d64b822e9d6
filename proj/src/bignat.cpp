#include "keylock/bignat.hpp"

#include <algorithm>

namespace keylock {

BigNat::BigNat(std::uint64_t value) {
  limbs_.push_back(std::uint32_t(value));
  limbs_.push_back(std::uint32_t(value >> 32));
  trim();
}

void BigNat::trim() {
  while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

void BigNat::mul_u32(std::uint32_t factor) {
  std::uint64_t carry = 0;
  for (std::uint32_t& limb : limbs_) {
    const std::uint64_t prod = std::uint64_t(limb) * factor + carry;
    limb = std::uint32_t(prod);
    carry = prod >> 32;
  }
  if (carry) limbs_.push_back(std::uint32_t(carry));
  trim();
}

BigNat BigNat::factorial(std::uint32_t n) {
  BigNat acc(1);
  for (std::uint32_t i = 2; i <= n; ++i) acc.mul_u32(i);
  return acc;
}

std::string BigNat::to_string() const {
  // repeated division by 1e9, emitting 9-digit chunks
  std::vector<std::uint32_t> work(limbs_.rbegin(), limbs_.rend());  // big-endian
  std::string out;
  while (!(work.size() == 1 && work[0] == 0)) {
    std::uint64_t rem = 0;
    for (std::uint32_t& limb : work) {
      const std::uint64_t cur = (rem << 32) | limb;
      limb = std::uint32_t(cur / 1000000000u);
      rem = cur % 1000000000u;
    }
    while (work.size() > 1 && work.front() == 0) work.erase(work.begin());
    std::string chunk = std::to_string(rem);
    if (!(work.size() == 1 && work[0] == 0))
      chunk.insert(0, 9 - chunk.size(), '0');
    out.insert(0, chunk);
  }
  if (out.empty()) out = "0";
  return out;
}

std::size_t BigNat::digit_count() const { return to_string().size(); }

}  // namespace keylock
