#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace ctikit {

std::array<std::uint8_t, 32> sha256(std::string_view data);
std::string sha256_hex(std::string_view data);

// First eight digest bytes read big-endian.
std::uint64_t digest_u64(std::string_view data);

// Per-item seed derived from a job seed and an item key.
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);

// Shortest round-trip decimal text for a double; stable across platforms.
std::string format_double(double v);

}  // namespace ctikit
