#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "emoma/cuckoo_store.hpp"
#include "emoma/hash_family.hpp"
#include "emoma/types.hpp"

namespace emoma {

/// Tunables shared by the EMOMA dictionary and the cuckoo baseline.
struct EmomaConfig {
  TableMode mode = TableMode::single;
  std::size_t total_buckets = 8192;  // power of two; 4 cells each
  std::size_t k = 3;                 // bit-selection functions
  double p = 0.99;                   // probability of the fewest-locks cell rule
  std::size_t max_iterations = 100;  // t
  std::size_t bits_per_element = 4;  // on-chip filter bits per table cell
  std::size_t stash_capacity = 64;
  std::uint64_t seed = 1;

  /// Defaults for a mode: k=3 single-table, k=4 double-table.
  static EmomaConfig for_mode(TableMode mode) {
    EmomaConfig c;
    c.mode = mode;
    c.k = mode == TableMode::single ? 3 : 4;
    return c;
  }

  std::size_t capacity() const noexcept { return total_buckets * kCellsPerBucket; }

  std::size_t num_blocks() const noexcept {
    return mode == TableMode::single ? total_buckets : total_buckets / 2;
  }

  /// bpe x cells per bucket x buckets per block: 16 bits single, 32 double at bpe=4.
  std::size_t block_bits() const noexcept {
    return bits_per_element * kCellsPerBucket * (total_buckets / num_blocks());
  }

  void validate() const {
    if (total_buckets == 0 || !std::has_single_bit(total_buckets)) {
      throw config_error("total_buckets must be a power of two");
    }
    if (mode == TableMode::double_table && total_buckets < 2) {
      throw config_error("double-table mode needs at least two buckets");
    }
    if (k == 0 || k > kMaxBitFunctions) throw config_error("k out of range");
    if (!(p >= 0.0 && p <= 1.0)) throw config_error("p must be in [0, 1]");
    if (max_iterations == 0) throw config_error("t must be at least 1");
    if (bits_per_element == 0 || block_bits() > kMaxBlockBits) {
      throw config_error("bits per element gives a block wider than 64 bits: " +
                         std::to_string(block_bits()));
    }
    if (stash_capacity == 0) throw config_error("stash capacity must be positive");
  }
};

/// Outcome of one insert() call.
struct InsertOutcome {
  bool placed_immediately = false;  // first iteration used an empty cell, nothing displaced
  std::size_t iterations_used = 0;
  std::size_t stash_residue_after = 0;
  bool failed = false;  // stash overflowed; the structure refuses further inserts
};

/// Snapshot of a dictionary's state for reporting.
struct DictMetrics {
  std::size_t capacity = 0;
  std::size_t occupied = 0;
  double load_factor = 0.0;
  std::size_t stash_size = 0;
  std::size_t stash_watermark = 0;
  double h1_fraction = 0.0;
  double h2_fraction = 0.0;
  std::uint32_t cbbf_max_counter = 0;
  AccessStats access;
};

/// Result of a full consistency audit. Empty means clean.
struct InvariantReport {
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
};

}  // namespace emoma
