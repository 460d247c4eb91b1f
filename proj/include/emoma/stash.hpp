#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "emoma/cuckoo_store.hpp"
#include "emoma/random.hpp"

namespace emoma {

enum class StashStatus : std::uint8_t { ok, overflow };

/// Bounded on-chip store for pending and overflowing elements.
///
/// Overflow is the structure-level failure event; put() never evicts.
template <std::unsigned_integral Key, std::unsigned_integral Value>
class Stash {
 public:
  using EntryType = Entry<Key, Value>;

  static constexpr std::size_t kDefaultCapacity = 64;

  explicit Stash(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
    if (capacity == 0) throw config_error("stash capacity must be positive");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t watermark() const noexcept { return watermark_; }

  /// Restart the watermark from the current size (for windowed maxima).
  void reset_watermark() noexcept { watermark_ = entries_.size(); }

  StashStatus put(Key key, Value value) {
    if (entries_.size() >= capacity_) return StashStatus::overflow;
    if (!index_.try_emplace(key, entries_.size()).second) {
      throw precondition_error("key already in stash");
    }
    entries_.push_back({key, value});
    if (entries_.size() > watermark_) watermark_ = entries_.size();
    return StashStatus::ok;
  }

  std::optional<Value> lookup(Key key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].value;
  }

  bool contains(Key key) const { return index_.contains(key); }

  /// Remove and return a uniformly chosen entry.
  std::optional<EntryType> take_random(Rng& rng) {
    if (entries_.empty()) return std::nullopt;
    const auto i = static_cast<std::size_t>(uniform_index(rng, entries_.size()));
    EntryType e = entries_[i];
    erase_at(i);
    return e;
  }

  /// Remove and return the entry for `key`, if present.
  std::optional<EntryType> take(Key key) {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    EntryType e = entries_[it->second];
    erase_at(it->second);
    return e;
  }

  bool remove(Key key) { return take(key).has_value(); }

  const std::vector<EntryType>& entries() const noexcept { return entries_; }

 private:
  void erase_at(std::size_t i) {
    index_.erase(entries_[i].key);
    if (i + 1 != entries_.size()) {
      entries_[i] = entries_.back();
      index_[entries_[i].key] = i;
    }
    entries_.pop_back();
  }

  std::size_t capacity_;
  std::vector<EntryType> entries_;
  std::unordered_map<Key, std::size_t> index_;
  std::size_t watermark_ = 0;
};

}  // namespace emoma
