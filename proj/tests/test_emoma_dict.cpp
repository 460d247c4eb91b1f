#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "emoma/emoma_dict.hpp"

using namespace emoma;

namespace {

EmomaConfig small_config(TableMode mode = TableMode::single, std::size_t buckets = 1024,
                         std::size_t k = 3) {
  EmomaConfig c = EmomaConfig::for_mode(mode);
  c.total_buckets = buckets;
  c.k = k;
  c.seed = 5;
  return c;
}

std::uint64_t find_key(const std::function<bool(std::uint64_t)>& pred, std::uint64_t start = 1) {
  for (std::uint64_t key = start; key < start + 50000000; ++key) {
    if (pred(key)) return key;
  }
  ADD_FAILURE() << "no key found";
  return 0;
}

std::uint64_t reads(const EmomaDict& d) { return d.stats().offchip_reads; }

}  // namespace

TEST(EmomaSearch, EmptyStructureOneRead) {
  EmomaDict d(small_config());
  EXPECT_EQ(d.search(77), std::nullopt);
  EXPECT_EQ(reads(d), 1u);
}

TEST(EmomaSearch, HitAfterInsertOneRead) {
  EmomaDict d(small_config());
  d.insert(77, 700);
  d.reset_stats();
  EXPECT_EQ(d.search(77), std::optional<std::uint64_t>{700});
  EXPECT_EQ(reads(d), 1u);
}

TEST(EmomaSearch, StashHitNoRead) {
  EmomaConfig c = small_config(TableMode::single, 1);
  c.max_iterations = 1;
  EmomaDict d(c);
  for (std::uint64_t key = 1; key <= 5; ++key) d.insert(key, key);
  ASSERT_GE(d.stash().size(), 1u);
  const std::uint64_t in_stash = d.stash().entries()[0].key;
  d.reset_stats();
  EXPECT_EQ(d.search(in_stash), std::optional<std::uint64_t>{in_stash});
  EXPECT_EQ(reads(d), 0u);
}

TEST(EmomaSearch, OneReadPerSearchAtHighLoad) {
  for (auto mode : {TableMode::single, TableMode::double_table}) {
    EmomaConfig c = small_config(mode, 2048);
    EmomaDict d(c);
    std::vector<std::uint64_t> keys;
    for (std::uint64_t key = 1; d.store().occupied_count() < 0.95 * c.capacity(); ++key) {
      ASSERT_FALSE(d.insert(key * 0x9e3779b97f4a7c15ULL, key).failed);
      keys.push_back(key * 0x9e3779b97f4a7c15ULL);
    }
    for (auto key : keys) {
      const std::uint64_t before = reads(d);
      ASSERT_TRUE(d.search(key));
      ASSERT_EQ(reads(d) - before, d.stash().contains(key) ? 0u : 1u);
    }
    for (std::uint64_t key = 1; key < 10000; ++key) {
      const std::uint64_t before = reads(d);
      ASSERT_FALSE(d.search(key ^ 0xabcdef0000000000ULL));
      ASSERT_EQ(reads(d) - before, 1u);
    }
    EXPECT_TRUE(d.verify_invariants().ok());
  }
}

// Every combination of the four inputs maps to the precedence order
// positive > room in h1 > creates positive > room in h2 > coin.
TEST(EmomaBucketCases, PartitionIsExhaustive) {
  std::array<int, 6> seen{};
  for (int bits = 0; bits < 16; ++bits) {
    InsertionConditions c;
    c.empty_in_first = bits & 1;
    c.empty_in_second = bits & 2;
    c.positive = bits & 4;
    c.creates_positive = bits & 8;
    for (bool coin : {false, true}) {
      const BucketChoice got = classify_insertion(c, coin);
      BucketChoice want;
      if (c.positive) {
        want = {1, Side::second};
      } else if (c.empty_in_first) {
        want = {2, Side::first};
      } else if (c.creates_positive) {
        want = {4, Side::first};
      } else if (c.empty_in_second) {
        want = {3, Side::second};
      } else {
        want = {5, coin ? Side::second : Side::first};
      }
      EXPECT_EQ(got, want) << "inputs " << bits << " coin " << coin;
      ++seen[got.case_id];
    }
  }
  for (int id = 1; id <= 5; ++id) EXPECT_GT(seen[id], 0) << "case " << id;
}

TEST(EmomaBucketCases, PositiveKeyGoesSecond) {
  EmomaDict d(small_config(TableMode::single, 64, 1));
  const auto& h = d.hashers();
  const std::uint64_t x = find_key([&](std::uint64_t k) { return h.h1(k) != h.h2(k); });
  const std::uint64_t y = find_key(
      [&](std::uint64_t k) {
        return k != x && h.h1(k) == h.h1(x) && h.h2(k) != h.h1(k) &&
               h.bit_positions(k)[0] == h.bit_positions(x)[0];
      });
  d.place_for_testing({y, 1}, Side::second, 0);
  ASSERT_TRUE(d.filter().query(x));
  const auto b1 = d.store().read_bucket(Side::first, h.h1(x));
  const auto b2 = d.store().read_bucket(Side::second, h.h2(x));
  EXPECT_EQ(d.select_bucket(x, b1, b2), (BucketChoice{1, Side::second}));
}

TEST(EmomaBucketCases, RoomInFirstGoesFirst) {
  EmomaDict d(small_config());
  const auto b = d.store().read_bucket(Side::first, 0);
  EXPECT_EQ(d.select_bucket(123, b, b), (BucketChoice{2, Side::first}));
}

TEST(EmomaBucketCases, CreatingPositiveStaysFirst) {
  EmomaDict d(small_config(TableMode::single, 64, 1));
  const auto& h = d.hashers();
  const std::uint64_t x = find_key([&](std::uint64_t k) { return h.h1(k) != h.h2(k); });
  const std::size_t b = h.h1(x);
  // Fill h1(x) with h1-placed keys, one sharing x's bit.
  std::vector<std::uint64_t> residents;
  residents.push_back(find_key([&](std::uint64_t k) {
    return k != x && h.h1(k) == b && h.h2(k) != b && h.bit_positions(k)[0] == h.bit_positions(x)[0];
  }));
  for (std::uint64_t k = 1; residents.size() < 4; ++k) {
    if (k != x && h.h1(k) == b && h.h2(k) != b &&
        std::find(residents.begin(), residents.end(), k) == residents.end()) {
      residents.push_back(k);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) d.place_for_testing({residents[i], i}, Side::first, i);
  ASSERT_TRUE(d.verify_invariants().ok());
  const auto b1 = d.store().read_bucket(Side::first, b);
  const auto b2 = d.store().read_bucket(Side::second, h.h2(x));
  EXPECT_EQ(d.select_bucket(x, b1, b2), (BucketChoice{4, Side::first}));
  // A key just pushed out of its h1 bucket moves on instead: room in h2.
  EXPECT_EQ(d.select_bucket(x, b1, b2, true), (BucketChoice{3, Side::second}));
}

namespace {

// Bucket `b` holding two unlocked h2-placed keys (cells 0, 1; cost 0) and
// two h1-placed keys sharing one filter bit (cells 2, 3; cost 1 each).
struct CostFixture {
  EmomaDict dict;
  std::size_t b = 0;

  explicit CostFixture(double p) : dict(config(p)) {
    const auto& h = dict.hashers();
    b = h.h1(1);
    std::vector<std::uint64_t> used;
    auto fresh = [&](std::uint64_t k) {
      return std::find(used.begin(), used.end(), k) == used.end();
    };
    for (std::size_t cell = 0; cell < 2; ++cell) {
      const std::uint64_t y = find_key([&](std::uint64_t k) {
        return fresh(k) && h.h2(k) == b && h.h1(k) != b &&
               std::none_of(used.begin(), used.end(), [&](std::uint64_t u) { return h.h1(u) == h.h1(k); });
      });
      used.push_back(y);
      dict.place_for_testing({y, y}, Side::second, cell);
    }
    const std::uint64_t a = find_key([&](std::uint64_t k) {
      return fresh(k) && h.h1(k) == b && h.h2(k) != b;
    });
    used.push_back(a);
    const std::uint64_t c = find_key([&](std::uint64_t k) {
      return fresh(k) && h.h1(k) == b && h.h2(k) != b &&
             h.bit_positions(k)[0] == h.bit_positions(a)[0];
    });
    dict.place_for_testing({a, a}, Side::first, 2);
    dict.place_for_testing({c, c}, Side::first, 3);
  }

  static EmomaConfig config(double p) {
    EmomaConfig c = small_config(TableMode::single, 64, 1);
    c.p = p;
    return c;
  }
};

}  // namespace

TEST(EmomaCellChoice, FixtureCosts) {
  CostFixture f(1.0);
  ASSERT_TRUE(f.dict.verify_invariants().ok());
  const auto bucket = f.dict.store().read_bucket(Side::first, f.b);
  EXPECT_EQ(f.dict.lock_cost(bucket.cells[2]->key, f.b, bucket), 1u);
  EXPECT_EQ(f.dict.lock_cost(bucket.cells[3]->key, f.b, bucket), 1u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_FALSE(f.dict.filter().residual_positive(bucket.cells[i]->key));
}

TEST(EmomaCellChoice, EmptyCellsChosenUniformly) {
  EmomaDict d(small_config());
  const auto& h = d.hashers();
  const std::size_t b = 10;
  std::vector<std::uint64_t> keys;
  for (std::uint64_t k = 1; keys.size() < 2; ++k) {
    if (h.h1(k) == b && h.h2(k) != b) keys.push_back(k);
  }
  d.place_for_testing({keys[0], 0}, Side::first, 0);
  d.place_for_testing({keys[1], 0}, Side::first, 2);
  const auto bucket = d.store().read_bucket(Side::first, b);
  std::array<int, 4> count{};
  for (int i = 0; i < 4000; ++i) ++count[d.select_cell({2, Side::first}, b, bucket)];
  EXPECT_EQ(count[0] + count[2], 0);
  EXPECT_NEAR(count[1] / 4000.0, 0.5, 0.05);
  EXPECT_NEAR(count[3] / 4000.0, 0.5, 0.05);
}

TEST(EmomaCellChoice, GreedyPicksCheapest) {
  CostFixture f(1.0);
  const auto bucket = f.dict.store().read_bucket(Side::first, f.b);
  std::array<int, 4> count{};
  for (int i = 0; i < 4000; ++i) ++count[f.dict.select_cell({5, Side::first}, f.b, bucket)];
  EXPECT_EQ(count[2] + count[3], 0);
  EXPECT_GT(count[0], 1500);
  EXPECT_GT(count[1], 1500);
}

TEST(EmomaCellChoice, RandomPicksUniformly) {
  CostFixture f(0.0);
  const auto bucket = f.dict.store().read_bucket(Side::first, f.b);
  std::array<int, 4> count{};
  constexpr int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i) ++count[f.dict.select_cell({5, Side::first}, f.b, bucket)];
  for (int c : count) EXPECT_NEAR(c / double(kTrials), 0.25, 0.03);
}

TEST(EmomaInsert, EmptyStructurePlacesAtFirst) {
  EmomaDict d(small_config());
  const InsertOutcome o = d.insert(5, 50);
  EXPECT_TRUE(o.placed_immediately);
  EXPECT_EQ(o.iterations_used, 1u);
  EXPECT_EQ(o.stash_residue_after, 0u);
  EXPECT_EQ(d.filter().recorded(), 0u);
  EXPECT_EQ(d.filter().dump(), "");
  const auto b = d.store().read_bucket(Side::first, d.hashers().h1(5));
  EXPECT_TRUE(b.find(5));
}

TEST(EmomaInsert, PositiveKeyDisplacesIntoStash) {
  EmomaConfig c = small_config(TableMode::single, 64, 1);
  c.max_iterations = 1;
  EmomaDict d(c);
  const auto& h = d.hashers();
  const std::uint64_t x = find_key([&](std::uint64_t k) { return h.h1(k) != h.h2(k); });
  const std::uint64_t y = find_key([&](std::uint64_t k) {
    return k != x && h.h1(k) == h.h1(x) && h.h2(k) != h.h1(k) && h.h2(k) != h.h2(x) &&
           h.bit_positions(k)[0] == h.bit_positions(x)[0];
  });
  d.place_for_testing({y, 1}, Side::second, 0);
  // Bucket h2(x) full of h1-placed keys with pairwise different bits.
  const std::size_t b2 = h.h2(x);
  std::vector<std::uint64_t> residents;
  std::uint64_t used_bits = 0;
  for (std::uint64_t k = 1; residents.size() < 4; ++k) {
    if (k == x || k == y || h.h1(k) != b2 || h.h2(k) == b2) continue;
    const std::uint64_t m = h.bit_positions(k).mask();
    if (used_bits & m) continue;
    used_bits |= m;
    residents.push_back(k);
  }
  for (std::size_t i = 0; i < 4; ++i) d.place_for_testing({residents[i], 2}, Side::first, i);
  ASSERT_TRUE(d.verify_invariants().ok());

  const InsertOutcome o = d.insert(x, 99);
  EXPECT_EQ(o.iterations_used, 1u);
  EXPECT_FALSE(o.placed_immediately);
  EXPECT_EQ(o.stash_residue_after, 1u);
  EXPECT_TRUE(d.store().read_bucket(Side::second, b2).find(x));
  EXPECT_EQ(d.filter().recorded(), 2u);
  EXPECT_TRUE(d.verify_invariants().ok());
  const std::uint64_t victim = d.stash().entries()[0].key;
  EXPECT_NE(std::find(residents.begin(), residents.end(), victim), residents.end());
  EXPECT_EQ(d.search(x), std::optional<std::uint64_t>{99});
  EXPECT_EQ(d.search(victim), std::optional<std::uint64_t>{2});
}

TEST(EmomaRemove, AbsentKeyOneRead) {
  EmomaDict d(small_config());
  EXPECT_FALSE(d.remove(4));
  EXPECT_EQ(reads(d), 1u);
}

TEST(EmomaRemove, FirstPlacedLeavesFilterAlone) {
  EmomaDict d(small_config());
  d.insert(4, 40);
  const CountingBlockBloomFilter before = d.filter();
  EXPECT_TRUE(d.remove(4));
  EXPECT_EQ(d.filter(), before);
  EXPECT_EQ(d.search(4), std::nullopt);
}

TEST(EmomaRemove, SecondPlacedRestoresFilter) {
  EmomaDict d(small_config(TableMode::single, 64, 1));
  const auto& h = d.hashers();
  const std::uint64_t x = find_key([&](std::uint64_t k) { return h.h1(k) != h.h2(k); });
  const std::uint64_t y = find_key([&](std::uint64_t k) {
    return k != x && h.h1(k) == h.h1(x) && h.h2(k) != h.h1(k) && h.h2(k) != h.h2(x) &&
           h.bit_positions(k)[0] == h.bit_positions(x)[0];
  });
  d.place_for_testing({y, 1}, Side::second, 0);
  const CountingBlockBloomFilter before = d.filter();
  d.insert(x, 2);  // x is positive, so it goes to h2(x)
  ASSERT_TRUE(d.store().read_bucket(Side::second, h.h2(x)).find(x));
  ASSERT_EQ(d.filter().recorded(), 2u);
  EXPECT_TRUE(d.remove(x));
  EXPECT_EQ(d.filter(), before);
  EXPECT_TRUE(d.verify_invariants().ok());
}

TEST(EmomaRemove, StashResident) {
  EmomaConfig c = small_config(TableMode::single, 1);
  c.max_iterations = 1;
  EmomaDict d(c);
  for (std::uint64_t key = 1; key <= 5; ++key) d.insert(key, key);
  const std::uint64_t in_stash = d.stash().entries()[0].key;
  EXPECT_TRUE(d.remove(in_stash));
  EXPECT_TRUE(d.stash().empty());
  EXPECT_TRUE(d.verify_invariants().ok());
}

TEST(EmomaDict, DuplicateInsertRejected) {
  EmomaDict d(small_config());
  d.insert(1, 1);
  EXPECT_THROW(d.insert(1, 2), duplicate_key_error);
}

TEST(EmomaDict, FailureIsSticky) {
  EmomaConfig c = small_config(TableMode::single, 1);
  c.stash_capacity = 1;
  c.max_iterations = 1;
  EmomaDict d(c);
  bool failed = false;
  for (std::uint64_t key = 1; key <= 8 && !failed; ++key) failed = d.insert(key, key).failed;
  EXPECT_TRUE(failed);
  EXPECT_TRUE(d.failed());
  EXPECT_THROW(d.insert(100, 1), structure_failed_error);
}

TEST(EmomaDict, EmptyInvariantsClean) {
  EXPECT_TRUE(EmomaDict(small_config()).verify_invariants().ok());
  EXPECT_TRUE(EmomaDict(small_config(TableMode::double_table)).verify_invariants().ok());
}

TEST(EmomaDict, BadConfigRejected) {
  EmomaConfig c = small_config();
  c.bits_per_element = 17;  // 68-bit blocks
  EXPECT_THROW(EmomaDict{c}, config_error);
  c = small_config();
  c.p = 1.5;
  EXPECT_THROW(EmomaDict{c}, config_error);
}

namespace {

// Random operations against std::map. `pool` draws candidate keys.
void model_run(TableMode mode, std::size_t buckets, std::size_t ops, std::uint64_t seed,
               const std::function<std::uint64_t(Rng&)>& pool, double max_load) {
  EmomaConfig c = small_config(mode, buckets);
  c.seed = seed;
  EmomaDict d(c);
  std::map<std::uint64_t, std::uint64_t> model;
  Rng rng(seed);
  for (std::size_t i = 0; i < ops; ++i) {
    const std::uint64_t key = pool(rng);
    const double u = uniform_unit(rng);
    if (u < 0.45) {
      if (model.count(key)) {
        EXPECT_THROW(d.insert(key, i), duplicate_key_error);
      } else if (model.size() < max_load * c.capacity()) {
        const InsertOutcome o = d.insert(key, i);
        ASSERT_FALSE(o.failed) << "op " << i;
        ASSERT_LE(o.iterations_used, c.max_iterations);
        model[key] = i;
      }
    } else if (u < 0.75) {
      ASSERT_EQ(d.remove(key), model.erase(key) == 1) << "op " << i;
    } else {
      const std::uint64_t before = d.stats().offchip_reads;
      const auto got = d.search(key);
      const auto it = model.find(key);
      ASSERT_EQ(got, it == model.end() ? std::nullopt : std::optional<std::uint64_t>{it->second});
      ASSERT_EQ(d.stats().offchip_reads - before, d.stash().contains(key) ? 0u : 1u);
    }
    if (i % 5000 == 0) {
      const auto report = d.verify_invariants();
      ASSERT_TRUE(report.ok()) << report.violations.front();
    }
  }
  ASSERT_EQ(d.size(), model.size());
  for (const auto& [k, v] : model) ASSERT_EQ(d.search(k), std::optional<std::uint64_t>{v});
  const auto report = d.verify_invariants();
  ASSERT_TRUE(report.ok()) << report.violations.front();
}

}  // namespace

TEST(EmomaModel, RandomSingle) {
  model_run(TableMode::single, 256, 100000, 1,
            [](Rng& r) { return uniform_index(r, 2000); }, 0.95);
}

TEST(EmomaModel, RandomDouble) {
  model_run(TableMode::double_table, 256, 100000, 2,
            [](Rng& r) { return uniform_index(r, 2000); }, 0.95);
}

// Keys whose h1 falls in a handful of buckets, so filter blocks saturate.
TEST(EmomaModel, SameBlockAdversarial) {
  for (auto mode : {TableMode::single, TableMode::double_table}) {
    EmomaConfig c = small_config(mode, 256);
    c.seed = 3;
    const HasherSet h(c.seed, mode, c.total_buckets, c.k, c.block_bits());
    std::vector<std::uint64_t> keys;
    for (std::uint64_t k = 1; keys.size() < 48; ++k) {
      if (h.h1(k) < 4) keys.push_back(k);
    }
    model_run(mode, 256, 100000, 3,
              [keys](Rng& r) { return keys[uniform_index(r, keys.size())]; }, 1.0);
  }
}

TEST(EmomaChurn, InvariantsAfterFillAndReplacements) {
  EmomaConfig c = small_config(TableMode::single, 8192);
  EmomaDict d(c);
  std::vector<std::uint64_t> stored;
  std::uint64_t next = 1;
  while (d.store().occupied_count() < 0.95 * c.capacity()) {
    ASSERT_FALSE(d.insert(next, next).failed);
    stored.push_back(next++);
  }
  Rng rng(8);
  for (int i = 0; i < 100000; ++i) {
    const std::size_t j = uniform_index(rng, stored.size());
    ASSERT_TRUE(d.remove(stored[j]));
    stored[j] = next;
    ASSERT_FALSE(d.insert(next, next).failed);
    ++next;
  }
  const auto report = d.verify_invariants();
  EXPECT_TRUE(report.ok()) << (report.ok() ? "" : report.violations.front());
  EXPECT_LE(d.metrics().cbbf_max_counter, 15u);
}

TEST(EmomaMetrics, FractionsSumToOne) {
  EmomaConfig c = small_config(TableMode::single, 1024);
  EmomaDict d(c);
  for (std::uint64_t key = 1; d.store().occupied_count() < 0.9 * c.capacity(); ++key) {
    d.insert(key, key);
  }
  const DictMetrics m = d.metrics();
  EXPECT_NEAR(m.h1_fraction + m.h2_fraction, 1.0, 1e-9);
  EXPECT_GT(m.h2_fraction, 0.1);
  EXPECT_NEAR(m.load_factor, 0.9, 0.01);
  EXPECT_GE(m.stash_watermark, m.stash_size);
}
