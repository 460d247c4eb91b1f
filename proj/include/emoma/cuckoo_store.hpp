#pragma once

#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emoma/cbbf.hpp"
#include "emoma/hash_family.hpp"
#include "emoma/types.hpp"

namespace emoma {

template <std::unsigned_integral Key, std::unsigned_integral Value>
struct Entry {
  Key key{};
  Value value{};

  friend bool operator==(const Entry&, const Entry&) = default;
};

template <std::unsigned_integral Key, std::unsigned_integral Value>
using Cell = std::optional<Entry<Key, Value>>;

/// Four cells; the unit of one off-chip access.
template <std::unsigned_integral Key, std::unsigned_integral Value>
struct Bucket {
  std::array<Cell<Key, Value>, kCellsPerBucket> cells{};

  std::optional<std::size_t> find(Key key) const noexcept {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] && cells[i]->key == key) return i;
    }
    return std::nullopt;
  }

  std::size_t occupied() const noexcept {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.has_value();
    return n;
  }

  bool has_empty() const noexcept { return occupied() < cells.size(); }

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

/// Off-chip access counters. Monotone until reset.
struct AccessStats {
  std::uint64_t offchip_reads = 0;
  std::uint64_t offchip_writes = 0;
  std::uint64_t cbbf_counter_accesses = 0;

  friend AccessStats operator-(const AccessStats& a, const AccessStats& b) {
    return {a.offchip_reads - b.offchip_reads, a.offchip_writes - b.offchip_writes,
            a.cbbf_counter_accesses - b.cbbf_counter_accesses};
  }
  friend bool operator==(const AccessStats&, const AccessStats&) = default;
};

/// Bucket array in external memory. read_bucket() and write_cell() are the
/// only accessors to bucket contents and each costs exactly one off-chip
/// access. Buckets are returned by value, like a burst read.
///
/// In single mode both sides address the same array; in double mode the
/// first side is subtable 1 (indexed by h1) and the second is subtable 2.
template <std::unsigned_integral Key, std::unsigned_integral Value>
class CuckooStore {
 public:
  using BucketType = Bucket<Key, Value>;
  using EntryType = Entry<Key, Value>;
  using CellType = Cell<Key, Value>;

  static constexpr std::uint8_t kSnapshotVersion = 0x01;

  CuckooStore(TableMode mode, std::size_t total_buckets) : mode_(mode), buckets_(total_buckets) {
    if (total_buckets == 0 || !std::has_single_bit(total_buckets) ||
        (mode == TableMode::double_table && total_buckets < 2)) {
      throw config_error("bucket count must be a power of two (>= 2 for double mode)");
    }
  }

  TableMode mode() const noexcept { return mode_; }
  std::size_t total_buckets() const noexcept { return buckets_.size(); }
  std::size_t capacity() const noexcept { return buckets_.size() * kCellsPerBucket; }
  std::size_t occupied_count() const noexcept { return occupied_; }

  std::size_t side_size(Side) const noexcept {
    return mode_ == TableMode::single ? buckets_.size() : buckets_.size() / 2;
  }

  BucketType read_bucket(Side side, std::size_t index) const {
    const BucketType& b = buckets_[slot(side, index)];
    ++stats_.offchip_reads;
    return b;
  }

  void write_cell(Side side, std::size_t index, std::size_t cell, const CellType& content) {
    if (cell >= kCellsPerBucket) throw std::out_of_range("cell index out of range");
    CellType& target = buckets_[slot(side, index)].cells[cell];
    occupied_ += content.has_value();
    occupied_ -= target.has_value();
    target = content;
    ++stats_.offchip_writes;
  }

  /// How the key at (side, index) was placed. Reads the bucket to check the
  /// precondition that the key is actually there.
  Placement placement_of(Key key, Side side, std::size_t index, const HasherSet& hashers,
                         const CountingBlockBloomFilter& filter) const {
    if (!read_bucket(side, index).find(key)) {
      throw precondition_error("placement_of: key is not stored at the given bucket");
    }
    return resolve_placement(hashers, filter, mode_, key, side, index);
  }

  /// Resolve placement from hashes alone, for a key known to be at
  /// (side, index). Touches no bucket.
  static Placement resolve_placement(const HasherSet& hashers,
                                     const CountingBlockBloomFilter& filter, TableMode mode,
                                     std::uint64_t key, Side side, std::size_t index) {
    if (mode == TableMode::double_table) {
      return side == Side::first ? Placement::via_h1 : Placement::via_h2;
    }
    const std::size_t i1 = hashers.h1(key);
    const std::size_t i2 = hashers.h2(key);
    if (i1 == i2) return filter.query(key) ? Placement::via_h2 : Placement::via_h1;
    if (index == i1) return Placement::via_h1;
    if (index == i2) return Placement::via_h2;
    throw precondition_error("key is at neither of its candidate buckets");
  }

  const AccessStats& stats() const noexcept { return stats_; }
  void reset_stats() noexcept { stats_ = {}; }
  // Audits read through read_bucket() and then put the counters back.
  void restore_stats(const AccessStats& s) const noexcept { stats_ = s; }

  // Snapshot layout (little-endian):
  //   u8 version (0x01), u8 mode, u8 key bytes, u8 value bytes,
  //   u64 bucket count, u64 payload length, then per cell:
  //   u8 occupied, key, value (zeros when empty).
  // Snapshots are out-of-band and not charged as accesses.
  std::string serialize() const {
    std::string out;
    out.push_back(static_cast<char>(kSnapshotVersion));
    out.push_back(static_cast<char>(mode_));
    out.push_back(static_cast<char>(sizeof(Key)));
    out.push_back(static_cast<char>(sizeof(Value)));
    put_le(out, static_cast<std::uint64_t>(buckets_.size()), 8);
    put_le(out, static_cast<std::uint64_t>(payload_size(buckets_.size())), 8);
    for (const auto& b : buckets_) {
      for (const auto& c : b.cells) {
        out.push_back(c ? 1 : 0);
        put_le(out, c ? std::uint64_t{c->key} : 0, sizeof(Key));
        put_le(out, c ? std::uint64_t{c->value} : 0, sizeof(Value));
      }
    }
    return out;
  }

  static CuckooStore deserialize(std::string_view bytes) {
    constexpr std::size_t header = 4 + 8 + 8;
    if (bytes.size() < header) throw std::invalid_argument("snapshot truncated");
    if (static_cast<std::uint8_t>(bytes[0]) != kSnapshotVersion) {
      throw std::invalid_argument("unsupported snapshot version");
    }
    const auto mode_byte = static_cast<std::uint8_t>(bytes[1]);
    if (mode_byte > 1) throw std::invalid_argument("bad snapshot mode");
    if (static_cast<std::size_t>(bytes[2]) != sizeof(Key) ||
        static_cast<std::size_t>(bytes[3]) != sizeof(Value)) {
      throw std::invalid_argument("snapshot key/value width mismatch");
    }
    const std::uint64_t nbuckets = get_le(bytes, 4, 8);
    const std::uint64_t len = get_le(bytes, 12, 8);
    if (len != payload_size(nbuckets) || bytes.size() != header + len) {
      throw std::invalid_argument("snapshot length mismatch");
    }
    CuckooStore store(static_cast<TableMode>(mode_byte), static_cast<std::size_t>(nbuckets));
    std::size_t pos = header;
    for (auto& b : store.buckets_) {
      for (auto& c : b.cells) {
        const bool occupied = bytes[pos] != 0;
        const auto key = static_cast<Key>(get_le(bytes, pos + 1, sizeof(Key)));
        const auto value = static_cast<Value>(get_le(bytes, pos + 1 + sizeof(Key), sizeof(Value)));
        pos += 1 + sizeof(Key) + sizeof(Value);
        if (occupied) {
          c = EntryType{key, value};
          ++store.occupied_;
        }
      }
    }
    return store;
  }

 private:
  std::size_t slot(Side side, std::size_t index) const {
    if (index >= side_size(side)) {
      throw std::out_of_range("bucket index " + std::to_string(index) + " out of range");
    }
    if (mode_ == TableMode::double_table && side == Side::second) return buckets_.size() / 2 + index;
    return index;
  }

  static std::uint64_t payload_size(std::uint64_t nbuckets) {
    return nbuckets * kCellsPerBucket * (1 + sizeof(Key) + sizeof(Value));
  }

  static void put_le(std::string& out, std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  static std::uint64_t get_le(std::string_view in, std::size_t pos, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= std::uint64_t{static_cast<std::uint8_t>(in[pos + i])} << (8 * i);
    }
    return v;
  }

  TableMode mode_;
  std::vector<BucketType> buckets_;
  std::size_t occupied_ = 0;
  mutable AccessStats stats_;
};

}  // namespace emoma
