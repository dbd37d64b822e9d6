#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace keylock {

using Digest = std::array<std::uint8_t, 32>;

// FIPS 180-4 SHA-256. Implemented in-repo so key-derived byte streams stay
// identical across platforms, toolchains and library upgrades.
Digest sha256(std::span<const std::uint8_t> data);

std::string hex_encode(std::span<const std::uint8_t> bytes);

// Decodes lowercase/uppercase hex. Throws std::invalid_argument on odd length
// or non-hex characters.
std::vector<std::uint8_t> hex_decode(std::string_view hex);

}  // namespace keylock
