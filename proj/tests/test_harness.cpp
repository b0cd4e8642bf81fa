#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ecgadv/error.hpp"
#include "ecgadv/harness.hpp"
#include "support.hpp"

using namespace ecgadv;
using namespace ecgadv::harness;

namespace {

// A small trained model plus a dataset relabelled with its own predictions,
// so every segment counts as correctly classified.
struct Fixture {
  model::ModelParams params;
  Dataset data;

  Fixture() {
    const auto raw = synth_dataset(10, 600, 300.0, 4);
    const auto [train_set, test_set] = split(raw, 0.5, 4);
    model::Architecture arch;
    arch.input_len = 600;
    arch.stem_channels = 4;
    arch.stem_pool = 4;
    arch.kernel = 9;
    arch.block_channels = {4, 8};
    model::TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    params = model::train(train_set, test_set, arch, cfg);
    data = raw;
    for (auto& s : data.segments) s.label = model::classify(params, s.samples).argmax;
  }

  bool all_classes() const {
    for (int c = 0; c < kNumClasses; ++c) {
      if (data.of_class(class_from_index(c)).size() < 3) return false;
    }
    return true;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(f);
  }
  return rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Type2GridSpec small_type2_spec() {
  Type2GridSpec spec;
  spec.sources_per_pair = 1;
  spec.victims_per_pair = 2;
  spec.n_shifts = 4;
  spec.base.max_iters = 3;
  spec.base.shifts_per_step = 2;
  return spec;
}

}  // namespace

TEST_CASE("twelve ordered pairs") {
  const auto pairs = all_pairs();
  CHECK(pairs.size() == 12);
  std::set<std::pair<int, int>> seen;
  for (const auto& p : pairs) {
    CHECK(p.source != p.target);
    seen.insert({class_index(p.source), class_index(p.target)});
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("aggregation of run records") {
  std::vector<Type1Run> runs;
  for (const auto& p : all_pairs()) {
    for (int v = 0; v < 3; ++v) {
      Type1Run r;
      r.source = p.source;
      r.target = p.target;
      r.metric = "smooth_l2";
      r.success = r.verified = true;
      r.metric_value = 1.0 + v;
      r.iters = 10;
      runs.push_back(r);
    }
  }
  SUBCASE("all-success runs give unit rates") {
    const auto t = aggregate_type1(runs);
    CHECK(t.rows.size() == 12);
    for (const auto& r : t.rows) {
      CHECK(r.rate() == 1.0);
      CHECK(r.trials == 3);
      CHECK(r.mean_metric == doctest::Approx(2.0));
      CHECK(r.mean_iters == doctest::Approx(10.0));
    }
  }
  SUBCASE("failed and unverified cells count as failures") {
    runs[0].error = "boom";
    runs[0].success = runs[0].verified = false;
    runs[1].verified = false;
    const auto t = aggregate_type1(runs);
    const auto* row = t.find(runs[0].source, runs[0].target, "smooth_l2");
    REQUIRE(row);
    CHECK(row->trials == 3);
    CHECK(row->successes == 1);
  }
}

TEST_CASE("type1 grid") {
  const auto& f = fixture();
  REQUIRE(f.all_classes());
  testing::TempDir dir("grid1");
  Type1GridSpec spec;
  spec.victims_per_class = 2;
  spec.metrics = {metrics::MetricKind::smooth_l2(), metrics::MetricKind::l2()};
  spec.base.max_iters = 40;
  spec.base.max_rounds = 2;
  spec.base.refine_iters = 5;
  spec.base.lr = 0.05;
  const auto res = run_type1_grid(f.params, f.data, spec);
  CHECK(res.runs.size() == 12 * 2 * 2);
  CHECK(res.table.rows.size() == 24);
  for (const auto& r : res.table.rows) {
    CHECK(r.rate() >= 0.0);
    CHECK(r.rate() <= 1.0);
    CHECK(r.trials == 2);
  }
  for (const auto& r : res.runs) {
    CHECK(r.error.empty());
    if (r.success) CHECK(r.verified);
  }

  // independent recount from the emitted per-run log
  write_type1_runs_csv(res.runs, dir / "runs.csv");
  write_table_csv(res.table, dir / "table.csv");
  const auto runs_csv = read_csv(dir / "runs.csv");
  std::map<std::string, std::pair<int, int>> counts;  // key -> (trials, successes)
  for (std::size_t i = 1; i < runs_csv.size(); ++i) {
    const auto& r = runs_csv[i];
    auto& c = counts[r[2] + r[3] + r[4]];
    ++c.first;
    c.second += (r[5] == "1" && r[6] == "1") ? 1 : 0;
  }
  const auto table_csv = read_csv(dir / "table.csv");
  REQUIRE(table_csv.size() == 25);
  for (std::size_t i = 1; i < table_csv.size(); ++i) {
    const auto& r = table_csv[i];
    const auto& c = counts.at(r[0] + r[1] + r[2]);
    CHECK(std::stoi(r[4]) == c.first);
    CHECK(std::stoi(r[5]) == c.second);
    CHECK(std::stod(r[6]) == doctest::Approx(static_cast<double>(c.second) / c.first));
  }

  const auto again = run_type1_grid(f.params, f.data, spec);
  write_table_csv(again.table, dir / "table2.csv");
  CHECK(slurp(dir / "table.csv") == slurp(dir / "table2.csv"));
}

TEST_CASE("type2 grid and window sweep") {
  const auto& f = fixture();
  REQUIRE(f.all_classes());
  testing::TempDir dir("grid2");
  auto spec = small_type2_spec();

  const auto grid = run_type2_grid(f.params, f.data, spec);
  CHECK(grid.table.rows.size() == 12 * 2);
  for (const auto& p : all_pairs()) {
    for (const auto* filter : {"rect", "iir"}) {
      const auto* row = grid.table.find(p.source, p.target, filter, 600);
      REQUIRE(row);
      CHECK(row->trials == spec.victims_per_pair * spec.n_shifts);
    }
  }
  const auto grid2 = run_type2_grid(f.params, f.data, spec);
  write_table_csv(grid.table, dir / "a.csv");
  write_table_csv(grid2.table, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  spec.windows = {600, 300, 100};
  const auto sweep = run_window_sweep(f.params, f.data, spec);
  CHECK(sweep.table.rows.size() == 12 * 3 * 2);
  // the full-length rows repeat the grid exactly: same seeds, same protocol
  for (const auto& row : grid.table.rows) {
    const auto* s = sweep.table.find(row.source, row.target, row.variant, 600);
    REQUIRE(s);
    CHECK(s->successes == row.successes);
  }

  emit_plot_data(sweep.table, dir / "plot.csv");
  const auto points = load_plot_data(dir / "plot.csv");
  REQUIRE(points.size() == sweep.table.rows.size());
  std::map<std::string, std::size_t> series_len;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& row = sweep.table.rows[i];
    CHECK(points[i].source == row.source);
    CHECK(points[i].target == row.target);
    CHECK(points[i].filter == row.variant);
    CHECK(points[i].w_d == row.w_d);
    CHECK(points[i].rate == doctest::Approx(row.rate()).epsilon(1e-6));
    ++series_len[points[i].series];
  }
  CHECK(series_len.size() == 24);
  for (const auto& [name, len] : series_len) CHECK(len == 3);
}

TEST_CASE("default windows") {
  CHECK(default_windows(9000) == std::vector<std::size_t>{9000, 7500, 6000, 4500, 3000, 1500});
}

TEST_CASE("metric bench") {
  const auto res = run_metric_bench({300, 600}, 2);
  CHECK(res.rows.size() == 4 * 2);
  CHECK(res.doubling.size() == 4);
  for (const auto& r : res.rows) {
    CHECK(r.median_seconds > 0.0);
    CHECK(std::isfinite(r.value));
  }
  const auto again = run_metric_bench({300, 600}, 2);
  for (std::size_t i = 0; i < res.rows.size(); ++i) CHECK(res.rows[i].value == again.rows[i].value);
  CHECK_THROWS_AS(run_metric_bench({300}, 0), Error);
}

TEST_CASE("plot data errors") {
  testing::TempDir dir("plot");
  std::ofstream(dir / "bad.csv") << "series,source\n";
  CHECK_THROWS_AS(load_plot_data(dir / "bad.csv"), Error);
  CHECK_THROWS_AS(load_plot_data(dir / "missing.csv"), Error);
}
