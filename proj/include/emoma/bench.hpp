#pragma once

// Experiment runner: fills, churn, insertion cost, stash scaling and
// parameter sweeps over EMOMA and the cuckoo baseline, with CSV output.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emoma/baseline_cuckoo.hpp"
#include "emoma/config.hpp"
#include "emoma/emoma_dict.hpp"
#include "emoma/hash_family.hpp"
#include "emoma/random.hpp"

namespace emoma::bench {

enum class Experiment { sweep_p, sweep_k, fill, churn, itertime, scaling };

/// Which dictionary a run drives.
enum class Variant { single, double_table, baseline };

inline const char* to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::sweep_p: return "sweep_p";
    case Experiment::sweep_k: return "sweep_k";
    case Experiment::fill: return "fill";
    case Experiment::churn: return "churn";
    case Experiment::itertime: return "itertime";
    case Experiment::scaling: return "scaling";
  }
  return "?";
}

inline const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::single: return "single";
    case Variant::double_table: return "double";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  for (auto e : {Experiment::sweep_p, Experiment::sweep_k, Experiment::fill, Experiment::churn,
                 Experiment::itertime, Experiment::scaling}) {
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : {Variant::single, Variant::double_table, Variant::baseline}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

inline TableMode table_mode(Variant v) noexcept {
  return v == Variant::double_table ? TableMode::double_table : TableMode::single;
}

/// Buckets needed for a capacity given in elements (4 per bucket).
inline std::size_t buckets_for_capacity(std::size_t capacity) {
  if (capacity < kCellsPerBucket || capacity % kCellsPerBucket != 0 ||
      !std::has_single_bit(capacity / kCellsPerBucket)) {
    throw config_error("capacity must be 4 x a power of two, got " + std::to_string(capacity));
  }
  return capacity / kCellsPerBucket;
}

struct ExperimentSpec {
  Experiment experiment = Experiment::fill;
  Variant variant = Variant::single;
  EmomaConfig config = EmomaConfig::for_mode(TableMode::single);
  std::size_t runs = 1;
  double load = 0.95;
  std::size_t replacements = 0;
  std::size_t windows = 16;            // churn windows
  std::size_t itertime_windows = 8;    // stash samples during the fresh insertions
  std::size_t fresh_divisor = 8;       // fresh insertions = capacity / fresh_divisor
  std::size_t fill_t = 100;            // t while filling before itertime measurements
  std::vector<std::size_t> t_list;
  std::vector<double> p_list;
  std::vector<std::size_t> k_list;
  std::vector<std::size_t> size_list;  // capacities in elements
  std::vector<double> load_list;       // itertime grid
  std::uint64_t master_seed = 1;

  void validate() const {
    if (runs == 0) throw config_error("runs must be >= 1");
    if (!(load > 0.0 && load <= 1.0)) throw config_error("load must be in (0, 1]");
    switch (experiment) {
      case Experiment::sweep_p:
        if (p_list.empty()) throw config_error("sweep_p needs a non-empty p list");
        break;
      case Experiment::sweep_k:
        if (k_list.empty()) throw config_error("sweep_k needs a non-empty k list");
        break;
      case Experiment::itertime:
        if (t_list.empty()) throw config_error("itertime needs a non-empty t list");
        break;
      case Experiment::scaling:
        if (size_list.empty()) throw config_error("scaling needs a non-empty size list");
        if (!std::is_sorted(size_list.begin(), size_list.end())) {
          throw config_error("scaling sizes must be ascending");
        }
        for (auto s : size_list) buckets_for_capacity(s);
        break;
      default:
        break;
    }
    for (double l : load_list) {
      if (!(l > 0.0 && l <= 1.0)) throw config_error("grid loads must be in (0, 1]");
    }
    EmomaConfig c = config;
    c.mode = table_mode(variant);
    c.validate();
  }
};

/// One CSV row. Churn rows carry a window; itertime rows carry a load point.
struct RunRecord {
  Experiment experiment = Experiment::fill;
  Variant variant = Variant::single;
  std::size_t capacity = 0;
  std::uint64_t seed = 0;
  double p = 0;
  std::size_t k = 0;
  std::size_t t = 0;
  std::size_t bpe = 0;
  std::size_t run = 0;
  std::size_t max_stash = 0;
  std::size_t final_stash = 0;
  double h1_frac = 0;
  double h2_frac = 0;
  double avg_iterations = 0;
  bool failed = false;
  bool invariants_ok = true;
  double wall_time = 0;  // seconds; not written to CSV
  std::optional<std::size_t> window;
  std::optional<std::size_t> window_max_stash;
  std::optional<double> load_point;
  std::optional<double> mean_iterations;
};

/// Per-run seed: a fixed counter mix of the master seed and run index.
/// Sweep points share seeds, so they compare on identical key streams.
inline std::uint64_t run_seed(std::uint64_t master, std::size_t run) noexcept {
  return detail::mix64(master + 0x9e3779b97f4a7c15ULL * (run + 1));
}

/// Distinct 64-bit keys: an odd-multiply/xorshift bijection of a counter.
class KeyStream {
 public:
  explicit KeyStream(std::uint64_t seed) : salt_(detail::mix64(seed ^ 0x6b65795f73747265ULL)) {}

  std::uint64_t next() noexcept {
    std::uint64_t x = (counter_++) ^ salt_;
    x *= 0xd6e8feb86659fd93ULL;
    x ^= x >> 32;
    x *= 0xd6e8feb86659fd93ULL;
    x ^= x >> 32;
    return x;
  }

  std::uint64_t issued() const noexcept { return counter_; }

 private:
  std::uint64_t salt_;
  std::uint64_t counter_ = 0;
};

namespace detail_bench {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Keys currently stored, for uniform victim selection during churn.
class KeyPool {
 public:
  void add(std::uint64_t k) { keys_.push_back(k); }

  std::uint64_t take_random(Rng& rng) {
    const auto i = static_cast<std::size_t>(uniform_index(rng, keys_.size()));
    const std::uint64_t k = keys_[i];
    keys_[i] = keys_.back();
    keys_.pop_back();
    return k;
  }

  bool empty() const noexcept { return keys_.empty(); }
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::vector<std::uint64_t> keys_;
};

struct FillStats {
  std::size_t inserts = 0;
  std::size_t iterations = 0;
};

// Insert fresh keys until `target` elements are table-resident.
template <class Dict>
FillStats fill_to(Dict& dict, KeyStream& keys, std::size_t target, KeyPool* pool) {
  FillStats s;
  while (dict.store().occupied_count() < target && !dict.failed()) {
    const std::uint64_t k = keys.next();
    const InsertOutcome o = dict.insert(k, k ^ 0x76616c7565ULL);
    ++s.inserts;
    s.iterations += o.iterations_used;
    if (pool && !o.failed) pool->add(k);
  }
  return s;
}

inline std::size_t target_for(double load, std::size_t capacity) {
  return static_cast<std::size_t>(std::ceil(load * static_cast<double>(capacity) - 1e-9));
}

template <class Dict>
RunRecord base_record(const ExperimentSpec& spec, const EmomaConfig& cfg, std::size_t run,
                      const Dict& dict) {
  RunRecord r;
  r.experiment = spec.experiment;
  r.variant = spec.variant;
  r.capacity = cfg.capacity();
  r.seed = cfg.seed;
  r.p = cfg.p;
  r.k = cfg.k;
  r.t = cfg.max_iterations;
  r.bpe = cfg.bits_per_element;
  r.run = run;
  const DictMetrics m = dict.metrics();
  r.max_stash = m.stash_watermark;
  r.final_stash = m.stash_size;
  r.h1_frac = m.h1_fraction;
  r.h2_frac = m.h2_fraction;
  r.failed = dict.failed();
  return r;
}

template <class Fn>
decltype(auto) with_dict(Variant v, const EmomaConfig& cfg, Fn&& fn) {
  EmomaConfig c = cfg;
  c.mode = table_mode(v);
  if (v == Variant::baseline) {
    CuckooDict d(c);
    return fn(d, c);
  }
  EmomaDict d(c);
  return fn(d, c);
}

}  // namespace detail_bench

/// One fill run: fresh structure, fresh keys until `load` of the table
/// cells (stash excluded) hold elements.
inline RunRecord fill_once(const ExperimentSpec& spec, const EmomaConfig& cfg, std::size_t run) {
  using namespace detail_bench;
  EmomaConfig c = cfg;
  c.seed = run_seed(spec.master_seed, run);
  return with_dict(spec.variant, c, [&](auto& dict, const EmomaConfig& used) {
    const auto t0 = Clock::now();
    KeyStream keys(used.seed);
    const FillStats fs = fill_to(dict, keys, target_for(spec.load, used.capacity()), nullptr);
    RunRecord r = base_record(spec, used, run, dict);
    r.avg_iterations = fs.inserts ? static_cast<double>(fs.iterations) / fs.inserts : 0.0;
    r.invariants_ok = dict.failed() || dict.verify_invariants().ok();
    r.wall_time = seconds_since(t0);
    return r;
  });
}

inline std::vector<RunRecord> run_fill(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<RunRecord> out;
  out.reserve(spec.runs);
  for (std::size_t run = 0; run < spec.runs; ++run) out.push_back(fill_once(spec, spec.config, run));
  return out;
}

/// Max stash per window, maximised over runs.
struct ChurnResult {
  std::vector<RunRecord> rows;  // one per (run, window)
  std::vector<RunRecord> fills; // fill record per run
  std::vector<std::size_t> window_max;
};

/// Fill to `load`, then `replacements` times: remove a uniformly chosen
/// stored element, insert a never-seen key.
inline ChurnResult run_churn(const ExperimentSpec& spec) {
  using namespace detail_bench;
  spec.validate();
  ChurnResult result;
  const std::size_t nwin = spec.replacements == 0 ? 0 : std::min(spec.windows, spec.replacements);
  result.window_max.assign(nwin, 0);
  for (std::size_t run = 0; run < spec.runs; ++run) {
    EmomaConfig cfg = spec.config;
    cfg.seed = run_seed(spec.master_seed, run);
    with_dict(spec.variant, cfg, [&](auto& dict, const EmomaConfig& used) {
      const auto t0 = Clock::now();
      KeyStream keys(used.seed);
      KeyPool pool;
      Rng pick(detail::mix64(used.seed ^ 0x636875726eULL));
      const FillStats fs = fill_to(dict, keys, target_for(spec.load, used.capacity()), &pool);
      RunRecord fill = base_record(spec, used, run, dict);
      fill.avg_iterations = fs.inserts ? static_cast<double>(fs.iterations) / fs.inserts : 0.0;

      std::size_t done = 0;
      std::size_t iterations = 0;
      for (std::size_t w = 0; w < nwin && !dict.failed(); ++w) {
        const std::size_t end = spec.replacements * (w + 1) / nwin;
        dict.reset_stash_watermark();
        std::size_t win_iter = 0;
        std::size_t win_n = 0;
        for (; done < end && !dict.failed() && !pool.empty(); ++done) {
          if (!dict.remove(pool.take_random(pick))) {
            throw corruption_error("churn: stored key not found");
          }
          const std::uint64_t k = keys.next();
          const InsertOutcome o = dict.insert(k, k ^ 0x76616c7565ULL);
          if (!o.failed) pool.add(k);
          win_iter += o.iterations_used;
          ++win_n;
        }
        iterations += win_iter;
        RunRecord r = base_record(spec, used, run, dict);
        r.avg_iterations = win_n ? static_cast<double>(win_iter) / win_n : 0.0;
        r.window = w;
        r.window_max_stash = dict.stash().watermark();
        result.window_max[w] = std::max(result.window_max[w], *r.window_max_stash);
        result.rows.push_back(r);
      }
      fill.invariants_ok = dict.failed() || dict.verify_invariants().ok();
      fill.failed = dict.failed();
      fill.wall_time = seconds_since(t0);
      result.fills.push_back(fill);
      return 0;
    });
  }
  return result;
}

/// Mean iterations of fresh insertions at one (t, load) point.
struct ItertimePoint {
  std::size_t t = 0;
  double load = 0;
  double mean_iterations = 0;
  bool any_failed = false;
  // Stash size at the end of each measurement window, summed over runs.
  std::vector<std::size_t> window_stash;
};

struct ItertimeResult {
  std::vector<RunRecord> rows;  // one per (t, load, run)
  std::vector<ItertimePoint> points;
};

inline std::vector<double> default_load_grid() { return {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95}; }

/// For each t and load: fill to the load (with t = fill_t, so a small t
/// cannot overflow the stash before measuring starts), switch to t, then
/// run capacity / fresh_divisor replacements and average their iterations.
inline ItertimeResult run_itertime(const ExperimentSpec& spec) {
  using namespace detail_bench;
  spec.validate();
  ItertimeResult result;
  const std::vector<double> loads = spec.load_list.empty() ? std::vector<double>{spec.load}
                                                          : spec.load_list;
  for (std::size_t t : spec.t_list) {
    for (double load : loads) {
      ItertimePoint point;
      point.t = t;
      point.load = load;
      point.window_stash.assign(spec.itertime_windows, 0);
      double iter_sum = 0;
      std::size_t iter_n = 0;
      for (std::size_t run = 0; run < spec.runs; ++run) {
        EmomaConfig cfg = spec.config;
        cfg.max_iterations = spec.fill_t;
        cfg.seed = run_seed(spec.master_seed, run);
        with_dict(spec.variant, cfg, [&](auto& dict, const EmomaConfig& used) {
          const auto t0 = Clock::now();
          KeyStream keys(used.seed);
          KeyPool pool;
          Rng pick(detail::mix64(used.seed ^ 0x69746572ULL));
          const FillStats fs = fill_to(dict, keys, target_for(load, used.capacity()), &pool);
          dict.set_max_iterations(t);
          const std::size_t fresh = std::max<std::size_t>(1, used.capacity() / spec.fresh_divisor);
          const std::size_t nwin = std::max<std::size_t>(1, spec.itertime_windows);
          std::size_t done = 0;
          std::size_t fresh_iter = 0;
          for (std::size_t w = 0; w < nwin; ++w) {
            const std::size_t end = fresh * (w + 1) / nwin;
            for (; done < end && !dict.failed() && !pool.empty(); ++done) {
              dict.remove(pool.take_random(pick));
              const std::uint64_t k = keys.next();
              const InsertOutcome o = dict.insert(k, k ^ 0x76616c7565ULL);
              if (!o.failed) pool.add(k);
              fresh_iter += o.iterations_used;
            }
            if (w < point.window_stash.size()) point.window_stash[w] += dict.stash().size();
          }
          RunRecord r = base_record(spec, used, run, dict);
          r.t = t;
          r.avg_iterations = fs.inserts ? static_cast<double>(fs.iterations) / fs.inserts : 0.0;
          r.load_point = load;
          r.mean_iterations = done ? static_cast<double>(fresh_iter) / done : 0.0;
          r.invariants_ok = dict.failed() || dict.verify_invariants().ok();
          r.wall_time = seconds_since(t0);
          point.any_failed = point.any_failed || r.failed;
          iter_sum += static_cast<double>(fresh_iter);
          iter_n += done;
          result.rows.push_back(r);
          return 0;
        });
      }
      point.mean_iterations = iter_n ? iter_sum / static_cast<double>(iter_n) : 0.0;
      result.points.push_back(point);
    }
  }
  return result;
}

/// Watermark statistics for one table size.
struct ScalingPoint {
  std::size_t capacity = 0;
  double mean_max_stash = 0;
  std::size_t max_max_stash = 0;
  std::size_t failures = 0;
  std::map<std::size_t, std::size_t> histogram;  // per-run max stash -> count
};

struct ScalingResult {
  std::vector<RunRecord> rows;
  std::vector<ScalingPoint> points;
};

inline ScalingPoint summarize(std::size_t capacity, const std::vector<RunRecord>& rows) {
  ScalingPoint p;
  p.capacity = capacity;
  double sum = 0;
  for (const auto& r : rows) {
    sum += static_cast<double>(r.max_stash);
    p.max_max_stash = std::max(p.max_max_stash, r.max_stash);
    p.failures += r.failed;
    ++p.histogram[r.max_stash];
  }
  p.mean_max_stash = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
  return p;
}

// CSV order: run index, then sweep point.
inline void order_by_run(std::vector<RunRecord>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RunRecord& a, const RunRecord& b) { return a.run < b.run; });
}

/// Fill experiments over ascending table sizes.
inline ScalingResult run_scaling(const ExperimentSpec& spec) {
  spec.validate();
  ScalingResult result;
  for (std::size_t capacity : spec.size_list) {
    EmomaConfig cfg = spec.config;
    cfg.total_buckets = buckets_for_capacity(capacity);
    std::vector<RunRecord> rows;
    for (std::size_t run = 0; run < spec.runs; ++run) rows.push_back(fill_once(spec, cfg, run));
    result.points.push_back(summarize(capacity, rows));
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  order_by_run(result.rows);
  return result;
}

struct SweepPoint {
  double value = 0;  // P or k
  double mean_max_stash = 0;
  std::size_t max_max_stash = 0;
  std::size_t failures = 0;
};

struct SweepResult {
  std::vector<RunRecord> rows;
  std::vector<SweepPoint> points;
};

/// Fill experiments at each P (sweep_p) or k (sweep_k).
inline SweepResult run_sweeps(const ExperimentSpec& spec) {
  spec.validate();
  SweepResult result;
  std::vector<double> axis;
  if (spec.experiment == Experiment::sweep_p) {
    axis = spec.p_list;
  } else if (spec.experiment == Experiment::sweep_k) {
    for (auto k : spec.k_list) axis.push_back(static_cast<double>(k));
  } else {
    throw config_error("run_sweeps needs sweep_p or sweep_k");
  }
  for (double v : axis) {
    EmomaConfig cfg = spec.config;
    if (spec.experiment == Experiment::sweep_p) {
      cfg.p = v;
    } else {
      cfg.k = static_cast<std::size_t>(v);
    }
    std::vector<RunRecord> rows;
    for (std::size_t run = 0; run < spec.runs; ++run) rows.push_back(fill_once(spec, cfg, run));
    const ScalingPoint s = summarize(cfg.capacity(), rows);
    result.points.push_back({v, s.mean_max_stash, s.max_max_stash, s.failures});
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  order_by_run(result.rows);
  return result;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kCsvHeader =
    "experiment,mode,capacity,seed,p,k,t,bpe,run,max_stash,final_stash,h1_frac,h2_frac,"
    "avg_iterations,failed";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Header for an experiment's rows.
inline std::string csv_header(Experiment e) {
  std::string h(kCsvHeader);
  if (e == Experiment::churn) h += ",window,window_max_stash";
  if (e == Experiment::itertime) h += ",load,mean_iterations";
  return h;
}

inline std::string csv_row(const RunRecord& r) {
  std::string s;
  s += to_string(r.experiment);
  s += ',';
  s += to_string(r.variant);
  s += ',' + std::to_string(r.capacity);
  s += ',' + std::to_string(r.seed);
  s += ',' + format_double(r.p);
  s += ',' + std::to_string(r.k);
  s += ',' + std::to_string(r.t);
  s += ',' + std::to_string(r.bpe);
  s += ',' + std::to_string(r.run);
  s += ',' + std::to_string(r.max_stash);
  s += ',' + std::to_string(r.final_stash);
  s += ',' + format_double(r.h1_frac);
  s += ',' + format_double(r.h2_frac);
  s += ',' + format_double(r.avg_iterations);
  s += r.failed ? ",1" : ",0";
  if (r.experiment == Experiment::churn) {
    s += ',' + (r.window ? std::to_string(*r.window) : std::string());
    s += ',' + (r.window_max_stash ? std::to_string(*r.window_max_stash) : std::string());
  }
  if (r.experiment == Experiment::itertime) {
    s += ',' + (r.load_point ? format_double(*r.load_point) : std::string());
    s += ',' + (r.mean_iterations ? format_double(*r.mean_iterations) : std::string());
  }
  return s;
}

inline void write_csv(std::ostream& out, Experiment e, const std::vector<RunRecord>& records) {
  out << csv_header(e) << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
}

/// Header plus one row per record, in the order given.
inline void emit_csv(Experiment e, const std::vector<RunRecord>& records,
                     const std::string& out_path) {
  std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + out_path + " for writing");
  write_csv(f, e, records);
  if (!f) throw std::runtime_error("write failed: " + out_path);
}

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  return den == 0 ? 0.0 : (n * sxy - sx * sy) / den;
}

}  // namespace emoma::bench
