#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "emoma/types.hpp"

namespace emoma {

inline constexpr std::size_t kMaxBitFunctions = 16;
inline constexpr std::size_t kMaxBlockBits = 64;

namespace detail {

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Domain-separation tags, one per derived function family.
inline constexpr std::uint64_t kTagH1 = 0x68315f6275636b74ULL;
inline constexpr std::uint64_t kTagH2 = 0x68325f6275636b74ULL;
inline constexpr std::uint64_t kTagG = 0x675f626974706f73ULL;

}  // namespace detail

/// Positions g_1(x)..g_k(x) inside one CBBF block. Duplicates are allowed.
struct BitPositions {
  std::array<std::uint8_t, kMaxBitFunctions> values{};
  std::uint8_t count = 0;

  std::span<const std::uint8_t> view() const noexcept { return {values.data(), count}; }
  auto begin() const noexcept { return values.begin(); }
  auto end() const noexcept { return values.begin() + count; }
  std::size_t size() const noexcept { return count; }
  std::uint8_t operator[](std::size_t i) const noexcept { return values[i]; }

  /// The positions as a bitmask over the block.
  std::uint64_t mask() const noexcept {
    std::uint64_t m = 0;
    for (auto p : view()) m |= std::uint64_t{1} << p;
    return m;
  }
};

/// Seeded bucket hashes h1, h2 and bit-selection functions g_1..g_k.
///
/// Every function is derived from one 64-bit seed by salting a 64-bit mixer
/// with a fixed per-function tag. h1 is shared by the bucket table and the
/// filter's block selection; both hold the same HasherSet instance.
class HasherSet {
 public:
  HasherSet(std::uint64_t seed, TableMode mode, std::size_t total_buckets, std::size_t k,
            std::size_t block_bits)
      : seed_(seed), mode_(mode), k_(k), block_bits_(block_bits) {
    if (total_buckets == 0 || !std::has_single_bit(total_buckets)) {
      throw config_error("bucket count must be a power of two, got " +
                         std::to_string(total_buckets));
    }
    if (mode == TableMode::double_table && total_buckets < 2) {
      throw config_error("double-table mode needs at least two buckets");
    }
    if (k == 0 || k > kMaxBitFunctions) {
      throw config_error("k must be in [1, " + std::to_string(kMaxBitFunctions) + "]");
    }
    if (block_bits == 0 || block_bits > kMaxBlockBits) {
      throw config_error("block width must be in [1, 64] bits, got " +
                         std::to_string(block_bits));
    }
    buckets_per_side_ = mode == TableMode::single ? total_buckets : total_buckets / 2;
    bucket_mask_ = buckets_per_side_ - 1;
    salt_h1_ = detail::mix64(seed ^ detail::kTagH1);
    salt_h2_ = detail::mix64(seed ^ detail::kTagH2);
    for (std::size_t i = 0; i < salt_g_.size(); ++i) {
      salt_g_[i] = detail::mix64(seed ^ (detail::kTagG + i));
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }
  TableMode mode() const noexcept { return mode_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t block_bits() const noexcept { return block_bits_; }
  std::size_t num_buckets_h1() const noexcept { return buckets_per_side_; }
  std::size_t num_buckets_h2() const noexcept { return buckets_per_side_; }

  std::size_t h1(std::uint64_t key) const noexcept {
    return static_cast<std::size_t>(hash(key, salt_h1_) & bucket_mask_);
  }

  std::size_t h2(std::uint64_t key) const noexcept {
    return static_cast<std::size_t>(hash(key, salt_h2_) & bucket_mask_);
  }

  std::pair<std::size_t, std::size_t> bucket_hashes(std::uint64_t key) const noexcept {
    return {h1(key), h2(key)};
  }

  std::size_t bucket_for(Side side, std::uint64_t key) const noexcept {
    return side == Side::first ? h1(key) : h2(key);
  }

  BitPositions bit_positions(std::uint64_t key) const noexcept {
    BitPositions out;
    out.count = static_cast<std::uint8_t>(k_);
    // Each 64-bit hash yields two 32-bit lanes, reduced by multiply-shift.
    for (std::size_t j = 0; j < k_; j += 2) {
      const std::uint64_t h = hash(key, salt_g_[j / 2]);
      out.values[j] = reduce(static_cast<std::uint32_t>(h));
      if (j + 1 < k_) out.values[j + 1] = reduce(static_cast<std::uint32_t>(h >> 32));
    }
    return out;
  }

 private:
  static std::uint64_t hash(std::uint64_t key, std::uint64_t salt) noexcept {
    return detail::mix64(detail::mix64(key + salt) ^ salt);
  }

  std::uint8_t reduce(std::uint32_t lane) const noexcept {
    return static_cast<std::uint8_t>((std::uint64_t{lane} * block_bits_) >> 32);
  }

  std::uint64_t seed_;
  TableMode mode_;
  std::size_t k_;
  std::size_t block_bits_;
  std::size_t buckets_per_side_ = 0;
  std::uint64_t bucket_mask_ = 0;
  std::uint64_t salt_h1_ = 0;
  std::uint64_t salt_h2_ = 0;
  std::array<std::uint64_t, kMaxBitFunctions / 2> salt_g_{};
};

}  // namespace emoma
