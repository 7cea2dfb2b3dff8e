#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace seqdenoise {

// FNV-1a, 64 bit. Used for seed derivation and request/config digests; the
// values are persisted in reports, so the function must never change.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
  return h;
}

/// Derives an independent stream seed from a run seed and a string key
/// (user id, window ref, ...), so per-item randomness is order-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  return fnv1a(key, fnv1a_u64(seed));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::uint64_t salt) {
  return fnv1a_u64(salt, derive_seed(seed, key));
}

std::string hex_digest(std::uint64_t h);

inline std::string digest(std::string_view bytes) { return hex_digest(fnv1a(bytes)); }

}  // namespace seqdenoise
