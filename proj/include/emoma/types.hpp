#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emoma {

/// Single shared bucket array, or two disjoint half-size subtables.
enum class TableMode : std::uint8_t { single = 0, double_table = 1 };

/// Which hash function (and, in double mode, which subtable) a bucket access uses.
enum class Side : std::uint8_t { first = 0, second = 1 };

/// How a stored element got to its bucket.
enum class Placement : std::uint8_t { via_h1 = 0, via_h2 = 1 };

inline constexpr std::size_t kCellsPerBucket = 4;

inline const char* to_string(TableMode mode) noexcept {
  return mode == TableMode::single ? "single" : "double";
}

class emoma_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's documented precondition.
class precondition_error : public emoma_error {
 public:
  using emoma_error::emoma_error;
};

// Internal bookkeeping went wrong (e.g. a counter decremented below zero).
class corruption_error : public emoma_error {
 public:
  using emoma_error::emoma_error;
};

class duplicate_key_error : public emoma_error {
 public:
  using emoma_error::emoma_error;
};

// Raised on insertion into a structure whose stash already overflowed.
class structure_failed_error : public emoma_error {
 public:
  using emoma_error::emoma_error;
};

class config_error : public emoma_error {
 public:
  using emoma_error::emoma_error;
};

}  // namespace emoma
