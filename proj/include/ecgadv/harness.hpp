#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgadv/attack_type1.hpp"
#include "ecgadv/attack_type2.hpp"
#include "ecgadv/metrics.hpp"
#include "ecgadv/model.hpp"
#include "ecgadv/signal.hpp"

namespace ecgadv::harness {

struct Pair {
  RhythmClass source;
  RhythmClass target;
};

/// The 12 ordered source -> target pairs, source-major in class-code order.
std::vector<Pair> all_pairs();

/// First `k` segments of class `cls` (dataset order) that the model classifies correctly.
std::vector<const EcgSegment*> select_correct(const model::ModelParams& params, const Dataset& data,
                                              RhythmClass cls, std::size_t k);

struct ResultRow {
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  std::string variant;  // metric name (Type I) or filter name (Type II)
  std::size_t w_d = 0;  // 0 for Type I rows
  std::size_t trials = 0;
  std::size_t successes = 0;
  double mean_metric = 0.0;  // over successful runs (Type I) / over artifacts (Type II)
  double mean_iters = 0.0;

  double rate() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

struct ResultTable {
  std::vector<ResultRow> rows;

  const ResultRow* find(RhythmClass source, RhythmClass target, const std::string& variant,
                        std::size_t w_d = 0) const;
};

// ---- Type I grid ----------------------------------------------------------

struct Type1GridSpec {
  std::size_t victims_per_class = 10;
  std::vector<metrics::MetricKind> metrics{metrics::MetricKind::smooth_l2()};
  attack::Type1Config base;  // target and metric are overridden per run
};

struct Type1Run {
  std::size_t index = 0;
  std::string victim_id;
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  std::string metric;
  bool success = false;
  bool verified = false;  // forward(x_adv).argmax == target, rechecked after the run
  std::size_t iters = 0;
  std::size_t rounds = 0;
  double c = 0.0;
  double metric_value = 0.0;
  double d_smooth = 0.0;
  double d_l2 = 0.0;
  double final_f_g = 0.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;
  std::string error;  // non-empty when the cell failed with an exception
};

struct Type1GridResult {
  std::vector<Type1Run> runs;
  ResultTable table;
};

Type1GridResult run_type1_grid(const model::ModelParams& params, const Dataset& data,
                               const Type1GridSpec& spec);

/// Rebuilds the per-pair table from run records (used by the grid and by tests).
ResultTable aggregate_type1(const std::vector<Type1Run>& runs);

// ---- Type II grid and window sweep ----------------------------------------

struct Type2GridSpec {
  std::size_t sources_per_pair = 10;
  std::size_t victims_per_pair = 20;
  std::size_t n_shifts = 200;
  std::uint64_t seed = 1;
  std::vector<std::size_t> windows;  // empty: full length only
  attack::Type2Config base;
  attack::DeviceFilters filters;
};

struct Type2GridResult {
  std::vector<attack::SweepCell> cells;
  ResultTable table;
};

/// Full-length artifacts for all pairs, evaluated under both device filters.
Type2GridResult run_type2_grid(const model::ModelParams& params, const Dataset& data,
                               const Type2GridSpec& spec);

/// The same protocol repeated for every window in spec.windows (descending).
Type2GridResult run_window_sweep(const model::ModelParams& params, const Dataset& data,
                                 const Type2GridSpec& spec);

/// w_d in {n, 5n/6, 2n/3, n/2, n/3, n/6}.
std::vector<std::size_t> default_windows(std::size_t n);

// ---- metric timing ----------------------------------------------------------

struct BenchRow {
  std::string metric;
  std::size_t length = 0;
  double median_seconds = 0.0;
  double value = 0.0;  // metric value on the benchmark input, deterministic
};

struct BenchRatio {
  std::string metric;
  std::size_t length = 0;  // ratio is time(2 * length) / time(length)
  double ratio = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchRatio> doubling;
  double median(const std::string& metric, std::size_t length) const;
};

/// Median wall time of value + gradient per metric and length, over `reps`
/// repetitions after one warm-up call. Soft-DTW is skipped above soft_dtw_max.
BenchResult run_metric_bench(const std::vector<std::size_t>& lengths, std::size_t reps,
                             std::size_t soft_dtw_max = 9000, std::uint64_t seed = 1);

// ---- outputs ----------------------------------------------------------------

void write_type1_runs_csv(const std::vector<Type1Run>& runs, const std::filesystem::path& path);
void write_table_csv(const ResultTable& table, const std::filesystem::path& path);
void write_bench_csv(const BenchResult& bench, const std::filesystem::path& path);

struct PlotPoint {
  std::string series;  // "<source>-><target>/<filter>"
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  std::string filter;
  std::size_t w_d = 0;
  double rate = 0.0;
};

/// Long-format CSV `series,source,target,filter,w_d,rate`: one series per
/// (pair, filter) with w_d as abscissa, rows in table order.
void emit_plot_data(const ResultTable& table, const std::filesystem::path& path);
std::vector<PlotPoint> load_plot_data(const std::filesystem::path& path);

}  // namespace ecgadv::harness
