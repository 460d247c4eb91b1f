#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "emoma/bench.hpp"

using namespace emoma;
using namespace emoma::bench;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ExperimentSpec small_fill(Variant v = Variant::single) {
  ExperimentSpec spec;
  spec.experiment = Experiment::fill;
  spec.variant = v;
  spec.config = EmomaConfig::for_mode(table_mode(v));
  spec.config.total_buckets = 1024;
  spec.runs = 3;
  spec.master_seed = 11;
  return spec;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(BenchCsv, EmptyRecordsHeaderOnly) {
  const std::string path = temp_path("emoma_empty.csv");
  emit_csv(Experiment::fill, {}, path);
  EXPECT_EQ(slurp(path), std::string(kCsvHeader) + "\n");
}

TEST(BenchCsv, OneRecordTwoLines) {
  const std::string path = temp_path("emoma_one.csv");
  ExperimentSpec spec = small_fill();
  spec.runs = 1;
  emit_csv(Experiment::fill, run_fill(spec), path);
  const std::string text = slurp(path);
  EXPECT_EQ(count_lines(text), 2u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(BenchCsv, ExtraColumns) {
  EXPECT_EQ(csv_header(Experiment::churn), std::string(kCsvHeader) + ",window,window_max_stash");
  EXPECT_EQ(csv_header(Experiment::itertime), std::string(kCsvHeader) + ",load,mean_iterations");
  RunRecord r;
  r.experiment = Experiment::fill;
  r.p = 0.99;
  EXPECT_NE(csv_row(r).find(",0.990000,"), std::string::npos);
}

TEST(BenchCsv, ByteIdenticalAcrossRuns) {
  for (auto v : {Variant::single, Variant::double_table, Variant::baseline}) {
    const std::string a = temp_path("emoma_a.csv");
    const std::string b = temp_path("emoma_b.csv");
    emit_csv(Experiment::fill, run_fill(small_fill(v)), a);
    emit_csv(Experiment::fill, run_fill(small_fill(v)), b);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(count_lines(slurp(a)), 4u);
  }
}

TEST(BenchCsv, UnwritablePathThrows) {
  EXPECT_THROW(emit_csv(Experiment::fill, {}, "/nonexistent-dir/x.csv"), std::runtime_error);
}

TEST(BenchKeys, StreamIsDistinct) {
  KeyStream keys(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200000; ++i) ASSERT_TRUE(seen.insert(keys.next()).second);
}

TEST(BenchSeeds, RunsDiffer) {
  EXPECT_NE(run_seed(1, 0), run_seed(1, 1));
  EXPECT_NE(run_seed(1, 0), run_seed(2, 0));
  EXPECT_EQ(run_seed(5, 7), run_seed(5, 7));
}

TEST(BenchFill, LowLoadSanity) {
  ExperimentSpec spec = small_fill();
  spec.config.total_buckets = 8192;
  spec.load = 0.5;
  spec.runs = 5;
  for (const auto& r : run_fill(spec)) {
    EXPECT_FALSE(r.failed);
    EXPECT_TRUE(r.invariants_ok);
    EXPECT_LE(r.max_stash, 2u);
    EXPECT_NEAR(r.h1_frac + r.h2_frac, 1.0, 1e-9);
  }
}

TEST(BenchFill, ReachesTargetLoad) {
  ExperimentSpec spec = small_fill();
  for (const auto& r : run_fill(spec)) {
    EXPECT_FALSE(r.failed);
    EXPECT_TRUE(r.invariants_ok);
    EXPECT_GT(r.avg_iterations, 1.0);
  }
}

TEST(BenchChurn, ZeroReplacementsFillOnly) {
  ExperimentSpec spec = small_fill();
  spec.experiment = Experiment::churn;
  spec.runs = 1;
  spec.replacements = 0;
  const ChurnResult r = run_churn(spec);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_TRUE(r.window_max.empty());
  EXPECT_EQ(r.fills.size(), 1u);
}

TEST(BenchChurn, WindowsCoverAllReplacements) {
  ExperimentSpec spec = small_fill();
  spec.experiment = Experiment::churn;
  spec.runs = 2;
  spec.replacements = 8000;
  const ChurnResult r = run_churn(spec);
  EXPECT_EQ(r.window_max.size(), 16u);
  EXPECT_EQ(r.rows.size(), 32u);
  for (const auto& f : r.fills) EXPECT_TRUE(f.invariants_ok);
}

TEST(BenchItertime, LowLoadNearOne) {
  ExperimentSpec spec = small_fill();
  spec.experiment = Experiment::itertime;
  spec.config.total_buckets = 8192;
  spec.runs = 1;
  spec.t_list = {100};
  spec.load_list = {0.5};
  const ItertimeResult r = run_itertime(spec);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_LT(r.points[0].mean_iterations, 1.2);
}

TEST(BenchScaling, SingleRunPointMass) {
  ExperimentSpec spec = small_fill();
  spec.experiment = Experiment::scaling;
  spec.runs = 1;
  spec.size_list = {4096};
  const ScalingResult r = run_scaling(spec);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.points[0].histogram.size(), 1u);
}

TEST(BenchSweep, SinglePointOneRow) {
  ExperimentSpec spec = small_fill();
  spec.experiment = Experiment::sweep_p;
  spec.runs = 1;
  spec.p_list = {0.99};
  const SweepResult r = run_sweeps(spec);
  EXPECT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.rows.size(), 1u);
}

TEST(BenchSpec, Validation) {
  ExperimentSpec spec = small_fill();
  spec.runs = 0;
  EXPECT_THROW(spec.validate(), config_error);
  spec = small_fill();
  spec.load = 1.5;
  EXPECT_THROW(spec.validate(), config_error);
  spec = small_fill();
  spec.experiment = Experiment::sweep_k;
  EXPECT_THROW(spec.validate(), config_error);
  spec.experiment = Experiment::scaling;
  spec.size_list = {8192, 4096};
  EXPECT_THROW(spec.validate(), config_error);
  EXPECT_THROW(buckets_for_capacity(3000), config_error);
}

TEST(BenchSlope, LeastSquares) {
  EXPECT_NEAR(ls_slope({1, 2, 3, 4}, {1.5, 2.0, 2.5, 3.0}), 0.5, 1e-12);
}
