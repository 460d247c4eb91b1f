#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "emoma/cbbf.hpp"
#include "emoma/config.hpp"
#include "emoma/cuckoo_store.hpp"
#include "emoma/hash_family.hpp"
#include "emoma/random.hpp"
#include "emoma/stash.hpp"
#include "emoma/types.hpp"

namespace emoma {

/// Bucket-selection inputs for one insertion iteration.
struct InsertionConditions {
  bool empty_in_first = false;    // empty cell in bucket h1(x)
  bool empty_in_second = false;   // empty cell in bucket h2(x)
  bool positive = false;          // x already queries positive
  bool creates_positive = false;  // adding x would flip an h1-placed resident of h1(x)
};

/// A row of the bucket-selection table. Cases 1..5.
struct BucketChoice {
  int case_id = 0;
  Side side = Side::first;

  friend bool operator==(const BucketChoice&, const BucketChoice&) = default;
};

/// Pure case analysis. `coin_second` is only consulted for case 5.
///
///   1: x positive                               -> h2
///   2: not positive, room in h1                 -> h1
///   3: h1 full, room in h2, creates nothing     -> h2
///   4: h1 full, adding x creates a positive     -> h1
///   5: both full, creates nothing               -> coin
constexpr BucketChoice classify_insertion(const InsertionConditions& c, bool coin_second) noexcept {
  if (c.positive) return {1, Side::second};
  if (c.empty_in_first) return {2, Side::first};
  if (c.creates_positive) return {4, Side::first};
  if (c.empty_in_second) return {3, Side::second};
  return {5, coin_second ? Side::second : Side::first};
}

/// EMOMA dictionary: a two-choice, four-cell cuckoo table plus a counting
/// block Bloom filter that records exactly the elements placed with h2.
///
/// A search probes the stash, then the filter (on-chip), and reads exactly
/// one bucket: h2(x) on a positive, h1(x) otherwise. Insertion keeps every
/// h1-placed element negative in the filter, so that one read always hits
/// the right bucket.
///
/// RNG draws happen in a fixed order per insertion iteration: the case-5
/// coin (only in case 5), then in select_cell either one empty-cell index or
/// the P coin followed by one candidate index, then (if the loop continues)
/// one stash index.
///
/// Not internally synchronized: mutations need exclusive access.
template <std::unsigned_integral Key = std::uint64_t, std::unsigned_integral Value = std::uint64_t>
class BasicEmomaDict {
 public:
  using EntryType = Entry<Key, Value>;
  using BucketType = Bucket<Key, Value>;
  using StoreType = CuckooStore<Key, Value>;
  using StashType = Stash<Key, Value>;

  explicit BasicEmomaDict(const EmomaConfig& config)
      : config_(validated(config)),
        hashers_(std::make_shared<const HasherSet>(config.seed, config.mode, config.total_buckets,
                                                   config.k, config.block_bits())),
        filter_(hashers_),
        store_(config.mode, config.total_buckets),
        stash_(config.stash_capacity),
        rng_(detail::mix64(config.seed ^ 0x656d6f6d615f726eULL)) {}

  const EmomaConfig& config() const noexcept { return config_; }
  const HasherSet& hashers() const noexcept { return *hashers_; }
  const CountingBlockBloomFilter& filter() const noexcept { return filter_; }
  const StoreType& store() const noexcept { return store_; }
  const StashType& stash() const noexcept { return stash_; }
  bool failed() const noexcept { return failed_; }
  std::size_t size() const noexcept { return store_.occupied_count() + stash_.size(); }

  std::optional<Value> search(Key key) const {
    if (auto v = stash_.lookup(key)) return v;
    const Side side = filter_.query(key) ? Side::second : Side::first;
    const BucketType b = store_.read_bucket(side, hashers_->bucket_for(side, key));
    if (auto cell = b.find(key)) return b.cells[*cell]->value;
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
    // The element being placed leaves the stash; its slot is reused by
    // whatever it displaces.
    EntryType e = *stash_.take(key);
    bool displaced = false;
    for (;;) {
      const bool clean = place(e, displaced);
      ++out.iterations_used;
      if (out.iterations_used == 1) out.placed_immediately = clean;
      if (failed_) {
        out.failed = true;
        break;
      }
      if (stash_.empty() || out.iterations_used >= config_.max_iterations) break;
      e = *stash_.take_random(rng_);
      displaced = displaced_from_first_.erase(e.key) > 0;
    }
    out.stash_residue_after = stash_.size();
    return out;
  }

  bool remove(Key key) {
    if (stash_.remove(key)) {
      displaced_from_first_.erase(key);
      return true;
    }
    const bool positive = filter_.query(key);
    const Side side = positive ? Side::second : Side::first;
    const std::size_t index = hashers_->bucket_for(side, key);
    const BucketType b = store_.read_bucket(side, index);
    const auto cell = b.find(key);
    if (!cell) return false;
    // Found through a positive query means it was placed with h2.
    if (positive) filter_.remove(key);
    store_.write_cell(side, index, *cell, std::nullopt);
    return true;
  }

  /// Evaluate the three insertion conditions on freshly read buckets and
  /// return the table row. Draws the case-5 coin from the dictionary RNG.
  ///
  /// `displaced_from_first` marks an element that was just pushed out of
  /// its h1 bucket. Such an element is being moved, so the creates-positive
  /// test does not send it back to h1: it goes on toward h2 and any
  /// resident it turns positive is evicted to the stash. Without this, a
  /// bucket whose five h1 keys pairwise collide in the filter block cycles
  /// through case 4 until t runs out.
  BucketChoice select_bucket(Key key, const BucketType& bucket1, const BucketType& bucket2,
                             bool displaced_from_first = false) {
    InsertionConditions c = conditions(key, bucket1, bucket2);
    if (displaced_from_first) c.creates_positive = false;
    const bool both_full_and_free = !c.positive && !c.empty_in_first && !c.creates_positive &&
                                    !c.empty_in_second;
    const bool coin = both_full_and_free && bernoulli(rng_, 0.5);
    return classify_insertion(c, coin);
  }

  InsertionConditions conditions(Key key, const BucketType& bucket1,
                                 const BucketType& bucket2) const {
    InsertionConditions c;
    c.positive = filter_.query(key);
    c.empty_in_first = bucket1.has_empty();
    c.empty_in_second = bucket2.has_empty();
    c.creates_positive = creates_positive_in_first(key, bucket1);
    return c;
  }

  /// Pick the cell to write in the chosen bucket at `index`.
  /// Empty cells first (uniform). Otherwise, among unlocked residents: with
  /// probability P uniform over those of minimal lock cost, else uniform over
  /// all of them. If every resident is locked, uniform over all four.
  std::size_t select_cell(const BucketChoice& choice, std::size_t index, const BucketType& bucket) {
    std::array<std::size_t, kCellsPerBucket> pick{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < kCellsPerBucket; ++i) {
      if (!bucket.cells[i]) pick[n++] = i;
    }
    if (n > 0) return pick[uniform_index(rng_, n)];

    std::array<std::size_t, kCellsPerBucket> cost{};
    std::array<std::size_t, kCellsPerBucket> candidates{};
    std::size_t ncand = 0;
    for (std::size_t i = 0; i < kCellsPerBucket; ++i) {
      const Key y = bucket.cells[i]->key;
      const Placement py = placement(y, choice.side, index);
      if (py == Placement::via_h2 && filter_.residual_positive(y)) continue;  // locked
      cost[i] = py == Placement::via_h2 ? 0 : lock_cost(y, index, bucket);
      candidates[ncand++] = i;
    }
    if (ncand == 0) return uniform_index(rng_, kCellsPerBucket);
    if (bernoulli(rng_, config_.p)) {
      std::size_t best = cost[candidates[0]];
      for (std::size_t j = 1; j < ncand; ++j) best = std::min(best, cost[candidates[j]]);
      for (std::size_t j = 0; j < ncand; ++j) {
        if (cost[candidates[j]] == best) pick[n++] = candidates[j];
      }
      return pick[uniform_index(rng_, n)];
    }
    return candidates[uniform_index(rng_, ncand)];
  }

  /// Number of h1-placed residents that moving the h1-placed `y` to its
  /// second bucket would newly turn positive. `bucket` is bucket h1(y).
  std::size_t lock_cost(Key y, std::size_t index, const BucketType& bucket) const {
    const BitPositions py = hashers_->bit_positions(y);
    std::size_t cost = 0;
    for (const auto& c : bucket.cells) {
      if (!c || c->key == y) continue;
      if (placement(c->key, Side::first, index) != Placement::via_h1) continue;
      if (filter_.would_create_positive(index, py, hashers_->bit_positions(c->key))) ++cost;
    }
    return cost;
  }

  /// Placement of a key known to reside at (side, index).
  Placement placement(Key key, Side side, std::size_t index) const {
    return StoreType::resolve_placement(*hashers_, filter_, config_.mode, key, side, index);
  }

  /// Full scan of table, filter and stash. Not charged as accesses.
  InvariantReport verify_invariants() const {
    const AccessStats saved = store_.stats();
    InvariantReport report;
    auto fail = [&report](std::string msg) { report.violations.push_back(std::move(msg)); };

    const std::size_t block_bits = filter_.block_bits();
    std::vector<std::uint32_t> expected(filter_.counters().size(), 0);
    std::unordered_set<Key> seen;
    std::size_t occupied = 0;
    std::size_t via_h2 = 0;

    const int nsides = config_.mode == TableMode::single ? 1 : 2;
    for (int s = 0; s < nsides; ++s) {
      const Side side = static_cast<Side>(s);
      for (std::size_t idx = 0; idx < store_.side_size(side); ++idx) {
        const BucketType b = store_.read_bucket(side, idx);
        for (const auto& c : b.cells) {
          if (!c) continue;
          ++occupied;
          const Key key = c->key;
          if (!seen.insert(key).second) fail("duplicate key " + std::to_string(key));
          const std::size_t i1 = hashers_->h1(key);
          const std::size_t i2 = hashers_->h2(key);
          const bool legal = config_.mode == TableMode::single
                                 ? (idx == i1 || idx == i2)
                                 : (side == Side::first ? idx == i1 : idx == i2);
          if (!legal) {
            fail("key " + std::to_string(key) + " at illegal bucket " + std::to_string(idx));
            continue;
          }
          const Placement p = placement(key, side, idx);
          const bool positive = filter_.query(key);
          if (p == Placement::via_h1 && positive) {
            fail("h1-placed key " + std::to_string(key) + " queries positive");
          }
          if (p == Placement::via_h2) {
            ++via_h2;
            if (!positive) fail("h2-placed key " + std::to_string(key) + " queries negative");
            for (auto pos : hashers_->bit_positions(key)) ++expected[i1 * block_bits + pos];
          }
        }
      }
    }
    for (const auto& e : stash_.entries()) {
      if (!seen.insert(e.key).second) fail("stash key " + std::to_string(e.key) + " duplicated");
    }
    if (occupied != store_.occupied_count()) {
      fail("occupancy bookkeeping " + std::to_string(store_.occupied_count()) + " vs scan " +
           std::to_string(occupied));
    }
    if (via_h2 != filter_.recorded()) {
      fail("filter records " + std::to_string(filter_.recorded()) + " keys, table holds " +
           std::to_string(via_h2) + " h2-placed");
    }
    if (expected != filter_.counters()) fail("filter counters differ from h2-placed residents");
    for (std::size_t b = 0; b < filter_.num_blocks(); ++b) {
      for (std::size_t j = 0; j < block_bits; ++j) {
        const bool bit = (filter_.block_word(b) >> j) & 1U;
        if (bit != (filter_.counters()[b * block_bits + j] > 0)) {
          fail("bit/counter mismatch at block " + std::to_string(b));
        }
      }
    }
    store_.restore_stats(saved);
    return report;
  }

  AccessStats stats() const noexcept {
    AccessStats s = store_.stats();
    s.cbbf_counter_accesses = filter_.counter_accesses() - counter_base_;
    return s;
  }

  void reset_stats() noexcept {
    store_.reset_stats();
    counter_base_ = filter_.counter_accesses();
  }

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
      m.h2_fraction = static_cast<double>(filter_.recorded()) / static_cast<double>(m.occupied);
      m.h1_fraction = 1.0 - m.h2_fraction;
    }
    m.cbbf_max_counter = filter_.max_counter();
    m.access = stats();
    return m;
  }

  /// Fixture hook: write `e` into a specific cell of its h1 or h2 bucket,
  /// recording it in the filter when placed with h2. Does not check that the
  /// result satisfies the one-access invariant; verify_invariants() does.
  void place_for_testing(const EntryType& e, Side side, std::size_t cell) {
    const std::size_t index = hashers_->bucket_for(side, e.key);
    if (store_.read_bucket(side, index).cells.at(cell)) {
      throw precondition_error("place_for_testing: cell occupied");
    }
    if (side == Side::second) filter_.add(e.key);
    store_.write_cell(side, index, cell, e);
  }

 private:
  static const EmomaConfig& validated(const EmomaConfig& c) {
    c.validate();
    return c;
  }

  bool creates_positive_in_first(Key key, const BucketType& bucket1) const {
    const std::size_t i1 = hashers_->h1(key);
    const BitPositions px = hashers_->bit_positions(key);
    for (const auto& c : bucket1.cells) {
      if (!c) continue;
      if (placement(c->key, Side::first, i1) != Placement::via_h1) continue;
      if (filter_.would_create_positive(i1, px, hashers_->bit_positions(c->key))) return true;
    }
    return false;
  }

  // One insertion iteration for `e`, which is already out of the stash.
  // Returns true when nothing was displaced.
  bool place(const EntryType& e, bool displaced_from_first) {
    const auto [i1, i2] = hashers_->bucket_hashes(e.key);
    BucketType b1 = store_.read_bucket(Side::first, i1);
    BucketType b2 = store_.read_bucket(Side::second, i2);
    const BucketChoice choice = select_bucket(e.key, b1, b2, displaced_from_first);
    const std::size_t index = choice.side == Side::first ? i1 : i2;
    BucketType& target = choice.side == Side::first ? b1 : b2;
    const std::size_t cell = select_cell(choice, index, target);

    std::optional<EntryType> victim = target.cells[cell];
    if (victim && placement(victim->key, choice.side, index) == Placement::via_h2) {
      filter_.remove(victim->key);
    } else if (victim) {
      displaced_from_first_.insert(victim->key);
    }
    target.cells[cell].reset();

    std::array<EntryType, kCellsPerBucket> evicted{};
    std::size_t nevicted = 0;
    if (choice.side == Side::second) {
      // Only h1-placed residents of bucket h1(e) share e's filter block.
      const bool same_bucket = config_.mode == TableMode::single && i1 == i2;
      if (same_bucket) b1 = target;
      std::array<bool, kCellsPerBucket> watch{};
      for (std::size_t c = 0; c < kCellsPerBucket; ++c) {
        const auto& z = b1.cells[c];
        watch[c] = z && placement(z->key, Side::first, i1) == Placement::via_h1 &&
                   !filter_.query(z->key);
      }
      filter_.add(e.key);
      for (std::size_t c = 0; c < kCellsPerBucket; ++c) {
        if (watch[c] && filter_.query(b1.cells[c]->key)) {
          evicted[nevicted++] = *b1.cells[c];
          store_.write_cell(Side::first, i1, c, std::nullopt);
        }
      }
    }
    store_.write_cell(choice.side, index, cell, e);

    if (victim) stash_put(*victim);
    for (std::size_t j = 0; j < nevicted && !failed_; ++j) stash_put(evicted[j]);
    return !victim && nevicted == 0;
  }

  void stash_put(const EntryType& e) {
    if (failed_) return;
    if (stash_.put(e.key, e.value) == StashStatus::overflow) failed_ = true;
  }

  EmomaConfig config_;
  std::shared_ptr<const HasherSet> hashers_;
  CountingBlockBloomFilter filter_;
  StoreType store_;
  StashType stash_;
  Rng rng_;
  bool failed_ = false;
  std::uint64_t counter_base_ = 0;
  // Stash residents that were pushed out of their h1 bucket.
  std::unordered_set<Key> displaced_from_first_;
};

using EmomaDict = BasicEmomaDict<>;

}  // namespace emoma
