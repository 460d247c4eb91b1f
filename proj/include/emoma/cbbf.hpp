#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "emoma/hash_family.hpp"
#include "emoma/types.hpp"

namespace emoma {

/// Counting block Bloom filter.
///
/// The block for key x is h1(x) and the k positions inside it are g_j(x).
/// The bit array models on-chip memory and is all that query() reads; the
/// counters model off-chip memory and are touched only by add()/remove(),
/// each of which is charged one counter access.
///
/// Invariants: bit (b, j) is set iff counter (b, j) > 0, and each counter
/// equals the number of recorded keys in block b selecting position j
/// (with multiplicity).
class CountingBlockBloomFilter {
 public:
  explicit CountingBlockBloomFilter(std::shared_ptr<const HasherSet> hashers)
      : hashers_(std::move(hashers)),
        block_bits_(hashers_->block_bits()),
        bits_(hashers_->num_buckets_h1(), 0),
        counters_(hashers_->num_buckets_h1() * block_bits_, 0) {}

  const HasherSet& hashers() const noexcept { return *hashers_; }
  const std::shared_ptr<const HasherSet>& shared_hashers() const noexcept { return hashers_; }

  std::size_t num_blocks() const noexcept { return bits_.size(); }
  std::size_t block_bits() const noexcept { return block_bits_; }
  std::size_t k() const noexcept { return hashers_->k(); }

  bool query(std::uint64_t key) const noexcept {
    return query(hashers_->h1(key), hashers_->bit_positions(key));
  }

  bool query(std::size_t block, const BitPositions& positions) const noexcept {
    const std::uint64_t m = positions.mask();
    return (bits_[block] & m) == m;
  }

  void add(std::uint64_t key) {
    const std::size_t block = hashers_->h1(key);
    const BitPositions positions = hashers_->bit_positions(key);
    ++counter_accesses_;
    for (auto p : positions) {
      auto& c = counter(block, p);
      if (c == UINT32_MAX) throw corruption_error("filter counter overflow");
      ++c;
      max_counter_ = std::max(max_counter_, c);
      bits_[block] |= std::uint64_t{1} << p;
    }
    ++recorded_;
  }

  void remove(std::uint64_t key) {
    const std::size_t block = hashers_->h1(key);
    const BitPositions positions = hashers_->bit_positions(key);
    for (auto p : positions) {
      if (counter(block, p) < multiplicity(positions, p)) {
        throw corruption_error("filter counter would drop below zero in block " +
                               std::to_string(block));
      }
    }
    ++counter_accesses_;
    for (auto p : positions) {
      if (--counter(block, p) == 0) bits_[block] &= ~(std::uint64_t{1} << p);
    }
    --recorded_;
  }

  /// Would `key` still query positive without its own contribution?
  /// True means the key is locked at its second bucket. Requires the key to
  /// be recorded.
  bool residual_positive(std::uint64_t key) const {
    const std::size_t block = hashers_->h1(key);
    const BitPositions positions = hashers_->bit_positions(key);
    bool positive = true;
    for (auto p : positions) {
      const std::uint32_t own = multiplicity(positions, p);
      const std::uint32_t c = counters_[block * block_bits_ + p];
      if (c < own) throw precondition_error("residual_positive on a key that is not recorded");
      if (c == own) positive = false;
    }
    return positive;
  }

  /// Would add(added) turn a currently negative `probe` positive?
  /// Both keys must select the same block.
  bool would_create_positive(std::uint64_t added, std::uint64_t probe) const {
    const std::size_t block = hashers_->h1(added);
    if (hashers_->h1(probe) != block) {
      throw precondition_error("would_create_positive needs keys sharing a block");
    }
    return would_create_positive(block, hashers_->bit_positions(added),
                                 hashers_->bit_positions(probe));
  }

  bool would_create_positive(std::size_t block, const BitPositions& added,
                             const BitPositions& probe) const noexcept {
    const std::uint64_t pm = probe.mask();
    const std::uint64_t bits = bits_[block];
    return (bits & pm) != pm && ((bits | added.mask()) & pm) == pm;
  }

  std::uint64_t block_word(std::size_t block) const { return bits_.at(block); }

  std::uint32_t counter_at(std::size_t block, std::size_t position) const {
    if (block >= num_blocks() || position >= block_bits_) {
      throw std::out_of_range("filter counter index out of range");
    }
    return counters_[block * block_bits_ + position];
  }

  const std::vector<std::uint32_t>& counters() const noexcept { return counters_; }

  /// Number of keys currently recorded.
  std::size_t recorded() const noexcept { return recorded_; }

  /// Largest counter value ever reached.
  std::uint32_t max_counter() const noexcept { return max_counter_; }

  /// Off-chip counter block accesses made by add()/remove().
  std::uint64_t counter_accesses() const noexcept { return counter_accesses_; }

  /// One line per non-empty block: `block_index: bitmask_hex counters_csv`.
  std::string dump() const {
    std::ostringstream out;
    const int hex_digits = static_cast<int>((block_bits_ + 3) / 4);
    for (std::size_t b = 0; b < bits_.size(); ++b) {
      if (bits_[b] == 0) continue;
      out << b << ": " << std::hex << std::setw(hex_digits) << std::setfill('0') << bits_[b]
          << std::dec << ' ';
      for (std::size_t j = 0; j < block_bits_; ++j) {
        if (j) out << ',';
        out << counters_[b * block_bits_ + j];
      }
      out << '\n';
    }
    return out.str();
  }

  /// Same bits and counters. Telemetry is ignored.
  friend bool operator==(const CountingBlockBloomFilter& a, const CountingBlockBloomFilter& b) {
    return a.bits_ == b.bits_ && a.counters_ == b.counters_;
  }

 private:
  std::uint32_t& counter(std::size_t block, std::size_t position) {
    return counters_[block * block_bits_ + position];
  }

  static std::uint32_t multiplicity(const BitPositions& positions, std::uint8_t p) noexcept {
    return static_cast<std::uint32_t>(std::count(positions.begin(), positions.end(), p));
  }

  std::shared_ptr<const HasherSet> hashers_;
  std::size_t block_bits_;
  std::vector<std::uint64_t> bits_;
  std::vector<std::uint32_t> counters_;
  std::size_t recorded_ = 0;
  std::uint32_t max_counter_ = 0;
  std::uint64_t counter_accesses_ = 0;
};

}  // namespace emoma
