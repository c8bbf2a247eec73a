#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace cascadeflow {

// CRC-32 (IEEE 802.3 polynomial, reflected). Used for per-tensor payload
// checksums in the container format.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// FNV-1a 64-bit. Used for content hashes (config canonical text, clip files).
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

std::string hex64(std::uint64_t v);

}  // namespace cascadeflow
