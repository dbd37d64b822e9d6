#include "keylock/keycore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>

#include "keylock/rng.hpp"
#include "keylock/sha256.hpp"

namespace keylock {

namespace {

constexpr std::string_view kPermTag = "keylock/perm/v1";
constexpr std::string_view kKeygenTag = "keylock/keygen/v1";

void append_be64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) buf.push_back(std::uint8_t(v >> (8 * i)));
}

}  // namespace

std::string SecretKey::to_hex() const { return hex_encode(bytes); }

SecretKey SecretKey::from_hex(std::string_view hex) {
  const auto raw = hex_decode(hex);
  if (raw.size() != 32)
    throw std::invalid_argument("key must be exactly 32 bytes (64 hex chars)");
  SecretKey key;
  std::copy(raw.begin(), raw.end(), key.bytes.begin());
  return key;
}

std::string SecretKey::fingerprint() const {
  return hex_encode(sha256(bytes)).substr(0, 8);
}

SecretKey generate_key() {
  SecretKey key;
  try {
    std::random_device rd;
    for (std::size_t i = 0; i < key.bytes.size(); i += 4) {
      const std::uint32_t word = rd();
      key.bytes[i] = std::uint8_t(word >> 24);
      key.bytes[i + 1] = std::uint8_t(word >> 16);
      key.bytes[i + 2] = std::uint8_t(word >> 8);
      key.bytes[i + 3] = std::uint8_t(word);
    }
  } catch (const std::exception&) {
    throw std::runtime_error("entropy unavailable");
  }
  return key;
}

SecretKey generate_key(std::uint64_t seed) {
  std::vector<std::uint8_t> input(kKeygenTag.begin(), kKeygenTag.end());
  append_be64(input, seed);
  SecretKey key;
  key.bytes = sha256(input);
  return key;
}

Permutation::Permutation(std::vector<std::uint32_t> map) : map_(std::move(map)) {
  if (map_.empty()) throw std::invalid_argument("empty permutation");
  std::vector<bool> seen(map_.size(), false);
  for (std::uint32_t v : map_) {
    if (v >= map_.size() || seen[v])
      throw std::invalid_argument("not a permutation");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::uint32_t n) {
  std::vector<std::uint32_t> map(n);
  for (std::uint32_t i = 0; i < n; ++i) map[i] = i;
  return Permutation(std::move(map));
}

Permutation Permutation::inverted() const {
  std::vector<std::uint32_t> inv(map_.size());
  for (std::uint32_t k = 0; k < map_.size(); ++k) inv[map_[k]] = k;
  return Permutation(std::move(inv));
}

std::string Permutation::to_string() const {
  std::string out;
  for (std::uint32_t i = 0; i < map_.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(map_[i]);
  }
  return out;
}

Permutation derive_permutation(const SecretKey& key, std::uint32_t n) {
  if (n == 0) throw std::invalid_argument("empty permutation");

  std::vector<std::uint8_t> input(key.bytes.begin(), key.bytes.end());
  append_be64(input, n);
  input.insert(input.end(), kPermTag.begin(), kPermTag.end());
  Drbg drbg(sha256(input));

  std::vector<std::uint32_t> map(n);
  for (std::uint32_t i = 0; i < n; ++i) map[i] = i;
  for (std::uint32_t i = n - 1; i > 0; --i) {
    const std::uint32_t j = drbg.next_below(i + 1);
    std::swap(map[i], map[j]);
  }
  return Permutation(std::move(map));
}

BigNat key_space_size(std::uint32_t channels, std::uint32_t block) {
  if (channels < 1 || block < 1)
    throw std::invalid_argument("channels and block size must be positive");
  const std::uint64_t per_channel = std::uint64_t(block) * block;
  if (per_channel > 0xffffffffull)
    throw std::overflow_error("block vector length overflows count type");
  const std::uint64_t count = std::uint64_t(channels) * per_channel;
  if (count > 0xffffffffull)
    throw std::overflow_error("block vector length overflows count type");
  return BigNat::factorial(std::uint32_t(count));
}

SecretKey load_key_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open key file: " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return SecretKey::from_hex(line);
}

void save_key_file(const SecretKey& key, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write key file: " + path.string());
  out << key.to_hex() << '\n';
}

}  // namespace keylock
