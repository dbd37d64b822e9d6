#include "keylock/rng.hpp"

#include <cstring>
#include <stdexcept>

namespace keylock {

std::uint32_t Rng::next_below(std::uint32_t bound) {
  if (bound == 0) throw std::invalid_argument("bound must be positive");
  const std::uint32_t limit = bound * (0xffffffffu / bound);  // multiple of bound
  std::uint32_t v;
  do {
    v = next_u32();
  } while (v >= limit);
  return v % bound;
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
  Rng r(master ^ (0xa0761d6478bd642fULL + stream * 0xe7037ed1a0b428dbULL));
  return r.next_u64();
}

void Drbg::refill() {
  std::array<std::uint8_t, sizeof(Digest) + 8> input;
  std::memcpy(input.data(), seed_.data(), seed_.size());
  for (int i = 0; i < 8; ++i)
    input[seed_.size() + i] = std::uint8_t(counter_ >> (8 * (7 - i)));
  block_ = sha256(input);
  ++counter_;
  pos_ = 0;
}

void Drbg::fill(std::span<std::uint8_t> out) {
  for (std::uint8_t& b : out) {
    if (pos_ == block_.size()) refill();
    b = block_[pos_++];
  }
}

std::uint32_t Drbg::next_u32() {
  std::array<std::uint8_t, 4> b;
  fill(b);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::uint32_t Drbg::next_below(std::uint32_t bound) {
  if (bound == 0) throw std::invalid_argument("bound must be positive");
  const std::uint32_t limit = bound * (0xffffffffu / bound);
  std::uint32_t v;
  do {
    v = next_u32();
  } while (v >= limit);
  return v % bound;
}

}  // namespace keylock
