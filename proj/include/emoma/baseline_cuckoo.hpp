#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>

#include "emoma/config.hpp"
#include "emoma/cuckoo_store.hpp"
#include "emoma/hash_family.hpp"
#include "emoma/random.hpp"
#include "emoma/stash.hpp"
#include "emoma/types.hpp"

namespace emoma {

/// Standard two-choice, four-cell cuckoo table with a stash, used as the
/// comparison point. Searches read h1 first and h2 on a miss.
///
/// Insertion uses the same stash-driven loop as EMOMA: the new element
/// goes through the stash, an empty cell in either bucket is taken when
/// one exists (uniform over all of them), otherwise a uniform victim from
/// a uniformly chosen bucket is displaced into the stash.
template <std::unsigned_integral Key = std::uint64_t, std::unsigned_integral Value = std::uint64_t>
class BasicCuckooDict {
 public:
  using EntryType = Entry<Key, Value>;
  using BucketType = Bucket<Key, Value>;
  using StoreType = CuckooStore<Key, Value>;
  using StashType = Stash<Key, Value>;

  explicit BasicCuckooDict(const EmomaConfig& config)
      : config_(config),
        hashers_(config.seed, config.mode, config.total_buckets, 1, 1),
        store_(config.mode, config.total_buckets),
        stash_(config.stash_capacity),
        rng_(detail::mix64(config.seed ^ 0x6375636b6f6f5f72ULL)) {
    if (config.max_iterations == 0) throw config_error("t must be at least 1");
  }

  const EmomaConfig& config() const noexcept { return config_; }
  const HasherSet& hashers() const noexcept { return hashers_; }
  const StoreType& store() const noexcept { return store_; }
  const StashType& stash() const noexcept { return stash_; }
  bool failed() const noexcept { return failed_; }
  std::size_t size() const noexcept { return store_.occupied_count() + stash_.size(); }

  std::optional<Value> search(Key key) const {
    if (auto v = stash_.lookup(key)) return v;
    for (Side side : {Side::first, Side::second}) {
      const BucketType b = store_.read_bucket(side, hashers_.bucket_for(side, key));
      if (auto cell = b.find(key)) return b.cells[*cell]->value;
    }
    return std::nullopt;
  }

  bool contains(Key key) const { return search(key).has_value(); }

  InsertOutcome insert(Key key, Value value) {
    if (failed_) throw structure_failed_error("insert after stash overflow");
    if (search(key)) throw duplicate_key_error("key already present");

    InsertOutcome out;
    if (stash_.put(key, value) == StashStatus::overflow) {
      failed_ = true;
      out.failed = true;
      out.stash_residue_after = stash_.size();
      return out;
    }
    EntryType e = *stash_.take(key);
    for (;;) {
      const bool clean = place(e);
      ++out.iterations_used;
      if (out.iterations_used == 1) out.placed_immediately = clean;
      if (failed_) {
        out.failed = true;
        break;
      }
      if (stash_.empty() || out.iterations_used >= config_.max_iterations) break;
      e = *stash_.take_random(rng_);
    }
    out.stash_residue_after = stash_.size();
    return out;
  }

  bool remove(Key key) {
    if (stash_.remove(key)) return true;
    for (Side side : {Side::first, Side::second}) {
      const std::size_t index = hashers_.bucket_for(side, key);
      const BucketType b = store_.read_bucket(side, index);
      if (auto cell = b.find(key)) {
        if (placement(key, side, index) == Placement::via_h2) --via_h2_;
        store_.write_cell(side, index, *cell, std::nullopt);
        return true;
      }
    }
    return false;
  }

  /// A key at its h1 bucket counts as h1-placed, including when h1 == h2.
  Placement placement(Key key, Side side, std::size_t index) const {
    if (config_.mode == TableMode::double_table) {
      return side == Side::first ? Placement::via_h1 : Placement::via_h2;
    }
    return index == hashers_.h1(key) ? Placement::via_h1 : Placement::via_h2;
  }

  InvariantReport verify_invariants() const {
    const AccessStats saved = store_.stats();
    InvariantReport report;
    std::unordered_set<Key> seen;
    std::size_t occupied = 0;
    std::size_t via_h2 = 0;
    const int nsides = config_.mode == TableMode::single ? 1 : 2;
    for (int s = 0; s < nsides; ++s) {
      const Side side = static_cast<Side>(s);
      for (std::size_t idx = 0; idx < store_.side_size(side); ++idx) {
        for (const auto& c : store_.read_bucket(side, idx).cells) {
          if (!c) continue;
          ++occupied;
          if (!seen.insert(c->key).second) {
            report.violations.push_back("duplicate key " + std::to_string(c->key));
          }
          const std::size_t i1 = hashers_.h1(c->key);
          const std::size_t i2 = hashers_.h2(c->key);
          const bool legal = config_.mode == TableMode::single
                                 ? (idx == i1 || idx == i2)
                                 : (side == Side::first ? idx == i1 : idx == i2);
          if (!legal) {
            report.violations.push_back("key " + std::to_string(c->key) + " at illegal bucket");
          } else if (placement(c->key, side, idx) == Placement::via_h2) {
            ++via_h2;
          }
        }
      }
    }
    for (const auto& e : stash_.entries()) {
      if (!seen.insert(e.key).second) {
        report.violations.push_back("stash key " + std::to_string(e.key) + " duplicated");
      }
    }
    if (occupied != store_.occupied_count()) report.violations.push_back("occupancy mismatch");
    if (via_h2 != via_h2_) report.violations.push_back("h2 placement count mismatch");
    store_.restore_stats(saved);
    return report;
  }

  AccessStats stats() const noexcept { return store_.stats(); }
  void reset_stats() noexcept { store_.reset_stats(); }
  void reset_stash_watermark() noexcept { stash_.reset_watermark(); }

  /// Change t for later insertions.
  void set_max_iterations(std::size_t t) {
    if (t == 0) throw config_error("t must be at least 1");
    config_.max_iterations = t;
  }

  DictMetrics metrics() const {
    DictMetrics m;
    m.capacity = store_.capacity();
    m.occupied = store_.occupied_count();
    m.load_factor = static_cast<double>(m.occupied) / static_cast<double>(m.capacity);
    m.stash_size = stash_.size();
    m.stash_watermark = stash_.watermark();
    if (m.occupied > 0) {
      m.h2_fraction = static_cast<double>(via_h2_) / static_cast<double>(m.occupied);
      m.h1_fraction = 1.0 - m.h2_fraction;
    }
    m.access = stats();
    return m;
  }

 private:
  bool place(const EntryType& e) {
    const auto [i1, i2] = hashers_.bucket_hashes(e.key);
    const std::array<std::pair<Side, std::size_t>, 2> where{{{Side::first, i1}, {Side::second, i2}}};
    const std::array<BucketType, 2> buckets{store_.read_bucket(Side::first, i1),
                                            store_.read_bucket(Side::second, i2)};

    std::array<std::pair<std::size_t, std::size_t>, 2 * kCellsPerBucket> empties{};
    std::size_t nempty = 0;
    // In single mode with h1 == h2 both reads return the same bucket; count its cells once.
    const std::size_t nbuckets = (config_.mode == TableMode::single && i1 == i2) ? 1 : 2;
    for (std::size_t b = 0; b < nbuckets; ++b) {
      for (std::size_t c = 0; c < kCellsPerBucket; ++c) {
        if (!buckets[b].cells[c]) empties[nempty++] = {b, c};
      }
    }
    std::size_t which = 0;
    std::size_t cell = 0;
    if (nempty > 0) {
      std::tie(which, cell) = empties[uniform_index(rng_, nempty)];
    } else {
      which = uniform_index(rng_, 2);
      cell = uniform_index(rng_, kCellsPerBucket);
    }
    const auto [side, index] = where[which];
    const std::optional<EntryType> victim = buckets[which].cells[cell];
    if (victim && placement(victim->key, side, index) == Placement::via_h2) --via_h2_;
    store_.write_cell(side, index, cell, e);
    if (placement(e.key, side, index) == Placement::via_h2) ++via_h2_;
    if (victim && stash_.put(victim->key, victim->value) == StashStatus::overflow) failed_ = true;
    return !victim;
  }

  EmomaConfig config_;
  HasherSet hashers_;
  StoreType store_;
  StashType stash_;
  Rng rng_;
  bool failed_ = false;
  std::size_t via_h2_ = 0;
};

using CuckooDict = BasicCuckooDict<>;

}  // namespace emoma
