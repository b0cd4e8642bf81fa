#include "ecgadv/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "ecgadv/detail/io.hpp"
#include "ecgadv/error.hpp"

namespace ecgadv::harness {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

// Fixed-precision formatting keeps aggregate CSVs byte-stable across runs.
std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

RhythmClass parse_class(const std::string& s) {
  auto c = class_from_code(s);
  if (!c) throw Error(ErrorCode::ParseError, "bad class code '" + s + "'");
  return *c;
}

std::vector<attack::SweepPair> build_sweep_pairs(const model::ModelParams& params, const Dataset& data,
                                                 const Type2GridSpec& spec) {
  // Sources and victims are disjoint prefixes of the correctly classified
  // segments of the source class, shared by all three targets.
  std::vector<attack::SweepPair> pairs;
  std::map<RhythmClass, std::vector<const EcgSegment*>> pool;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = class_from_index(c);
    pool[cls] = select_correct(params, data, cls, spec.sources_per_pair + spec.victims_per_pair);
  }
  for (const auto& p : all_pairs()) {
    const auto& cand = pool[p.source];
    if (cand.size() < 1 + std::min<std::size_t>(1, spec.victims_per_pair)) {
      throw Error(ErrorCode::EmptyVictimSet,
                  "not enough correctly classified " + class_name(p.source) + " segments");
    }
    attack::SweepPair sp;
    sp.source = p.source;
    sp.target = p.target;
    // with a short pool, keep the victim count and shrink the source count
    const std::size_t nv = std::min(spec.victims_per_pair, cand.size() - 1);
    const std::size_t ns = std::min(spec.sources_per_pair, cand.size() - nv);
    sp.sources.assign(cand.begin(), cand.begin() + static_cast<long>(ns));
    sp.victims.assign(cand.begin() + static_cast<long>(ns), cand.begin() + static_cast<long>(ns + nv));
    pairs.push_back(std::move(sp));
  }
  return pairs;
}

ResultTable table_from_cells(const std::vector<attack::SweepCell>& cells) {
  ResultTable t;
  for (const auto& c : cells) {
    ResultRow r;
    r.source = c.source;
    r.target = c.target;
    r.variant = attack::filter_name(c.filter);
    r.w_d = c.w_d;
    r.trials = c.trials;
    r.successes = c.successes;
    r.mean_metric = c.mean_distance;
    r.mean_iters = c.mean_iters;
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

std::vector<Pair> all_pairs() {
  std::vector<Pair> pairs;
  for (int s = 0; s < kNumClasses; ++s) {
    for (int t = 0; t < kNumClasses; ++t) {
      if (s != t) pairs.push_back({class_from_index(s), class_from_index(t)});
    }
  }
  return pairs;
}

std::vector<const EcgSegment*> select_correct(const model::ModelParams& params, const Dataset& data,
                                              RhythmClass cls, std::size_t k) {
  std::vector<const EcgSegment*> out;
  for (const auto& seg : data.segments) {
    if (out.size() >= k) break;
    if (seg.label != cls) continue;
    if (model::classify(params, seg.samples).argmax == cls) out.push_back(&seg);
  }
  return out;
}

const ResultRow* ResultTable::find(RhythmClass source, RhythmClass target, const std::string& variant,
                                   std::size_t w_d) const {
  for (const auto& r : rows) {
    if (r.source == source && r.target == target && r.variant == variant && r.w_d == w_d) return &r;
  }
  return nullptr;
}

// ---- Type I -----------------------------------------------------------------

ResultTable aggregate_type1(const std::vector<Type1Run>& runs) {
  ResultTable t;
  std::map<std::tuple<std::string, int, int>, std::size_t> index;
  std::vector<double> iters_sum;
  for (const auto& r : runs) {
    const auto key = std::make_tuple(r.metric, class_index(r.source), class_index(r.target));
    auto it = index.find(key);
    if (it == index.end()) {
      ResultRow row;
      row.source = r.source;
      row.target = r.target;
      row.variant = r.metric;
      it = index.emplace(key, t.rows.size()).first;
      t.rows.push_back(row);
      iters_sum.push_back(0.0);
    }
    auto& row = t.rows[it->second];
    ++row.trials;
    iters_sum[it->second] += static_cast<double>(r.iters);
    if (r.success && r.verified) {
      ++row.successes;
      row.mean_metric += r.metric_value;
    }
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto& row = t.rows[i];
    if (row.successes) row.mean_metric /= static_cast<double>(row.successes);
    if (row.trials) row.mean_iters = iters_sum[i] / static_cast<double>(row.trials);
  }
  return t;
}

Type1GridResult run_type1_grid(const model::ModelParams& params, const Dataset& data,
                               const Type1GridSpec& spec) {
  if (spec.metrics.empty()) throw Error(ErrorCode::InvalidArgument, "no metrics requested");
  spec.base.validate();
  std::map<RhythmClass, std::vector<const EcgSegment*>> victims;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = class_from_index(c);
    victims[cls] = select_correct(params, data, cls, spec.victims_per_class);
    if (victims[cls].empty()) {
      throw Error(ErrorCode::EmptyVictimSet, "no correctly classified " + class_name(cls) + " segments");
    }
  }

  struct Job {
    metrics::MetricKind metric;
    Pair pair;
    const EcgSegment* victim;
  };
  std::vector<Job> jobs;
  for (const auto& m : spec.metrics) {
    for (const auto& p : all_pairs()) {
      for (const auto* v : victims[p.source]) jobs.push_back({m, p, v});
    }
  }

  Type1GridResult result;
  result.runs.resize(jobs.size());
  const auto njobs = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < njobs; ++j) {
    const auto& job = jobs[static_cast<std::size_t>(j)];
    auto& run = result.runs[static_cast<std::size_t>(j)];
    run.index = static_cast<std::size_t>(j);
    run.victim_id = job.victim->id;
    run.source = job.pair.source;
    run.target = job.pair.target;
    run.metric = job.metric.name();
    try {
      auto cfg = spec.base;
      cfg.target = job.pair.target;
      cfg.metric = job.metric;
      const auto out = attack::attack_type1(params, *job.victim, cfg);
      run.success = out.success;
      run.iters = out.iters_used;
      run.rounds = out.rounds_used;
      run.c = out.c_used;
      run.metric_value = out.metric_value;
      run.final_f_g = out.final_f_g;
      run.d_smooth = metrics::d_smooth(out.delta, false).value;
      run.d_l2 = metrics::d_l2(out.delta, false).value;
      run.adv_mean = mean(out.x_adv);
      run.adv_std = popstd(out.x_adv);
      run.verified = model::forward(params, out.x_adv).argmax == job.pair.target;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  }
  result.table = aggregate_type1(result.runs);
  return result;
}

// ---- Type II ----------------------------------------------------------------

std::vector<std::size_t> default_windows(std::size_t n) {
  return {n, 5 * n / 6, 2 * n / 3, n / 2, n / 3, n / 6};
}

Type2GridResult run_type2_grid(const model::ModelParams& params, const Dataset& data,
                               const Type2GridSpec& spec) {
  auto full = spec;
  full.windows = {};
  return run_window_sweep(params, data, full);
}

Type2GridResult run_window_sweep(const model::ModelParams& params, const Dataset& data,
                                 const Type2GridSpec& spec) {
  const auto pairs = build_sweep_pairs(params, data, spec);
  attack::SweepRequest req;
  req.windows = spec.windows.empty() ? std::vector<std::size_t>{params.arch.input_len} : spec.windows;
  req.n_shifts = spec.n_shifts;
  req.seed = spec.seed;
  req.filters = spec.filters;
  Type2GridResult result;
  result.cells = attack::window_sweep(params, pairs, spec.base, req);
  result.table = table_from_cells(result.cells);
  return result;
}

// ---- metric timing ----------------------------------------------------------

double BenchResult::median(const std::string& metric, std::size_t length) const {
  for (const auto& r : rows) {
    if (r.metric == metric && r.length == length) return r.median_seconds;
  }
  return std::nan("");
}

BenchResult run_metric_bench(const std::vector<std::size_t>& lengths, std::size_t reps,
                             std::size_t soft_dtw_max, std::uint64_t seed) {
  if (reps == 0) throw Error(ErrorCode::InvalidArgument, "bench needs at least one repetition");
  using clock = std::chrono::steady_clock;
  const std::vector<metrics::MetricKind> kinds{metrics::MetricKind::l2(), metrics::MetricKind::smooth(),
                                               metrics::MetricKind::smooth_l2(),
                                               metrics::MetricKind::soft_dtw()};
  BenchResult result;
  for (const auto& kind : kinds) {
    for (std::size_t n : lengths) {
      if (kind.type == metrics::MetricType::SoftDtw && n > soft_dtw_max) continue;
      const auto x = synth_segment(RhythmClass::N, n, kDefaultSampleRate, seed).samples;
      std::mt19937_64 rng(seed + n);
      std::normal_distribution<double> noise(0.0, 0.05);
      auto xa = x;
      for (auto& v : xa) v += noise(rng);

      BenchRow row;
      row.metric = kind.name();
      row.length = n;
      row.value = metrics::distance(kind, x, xa, true).value;  // warm-up
      std::vector<double> samples;
      for (std::size_t r = 0; r < reps; ++r) {
        // cheap metrics are looped until the timed block is long enough to resolve
        std::size_t calls = 0;
        const auto t0 = clock::now();
        auto t1 = t0;
        double sink = 0.0;
        do {
          sink += metrics::distance(kind, x, xa, true).value;
          ++calls;
          t1 = clock::now();
        } while (t1 - t0 < std::chrono::milliseconds(20));
        if (!std::isfinite(sink)) throw Error(ErrorCode::Divergence, "non-finite metric value");
        samples.push_back(std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(calls));
      }
      std::sort(samples.begin(), samples.end());
      const auto m = samples.size();
      row.median_seconds = m % 2 ? samples[m / 2] : 0.5 * (samples[m / 2 - 1] + samples[m / 2]);
      result.rows.push_back(row);
    }
  }
  for (const auto& kind : kinds) {
    for (std::size_t n : lengths) {
      const double a = result.median(kind.name(), n);
      const double b = result.median(kind.name(), 2 * n);
      if (std::isfinite(a) && std::isfinite(b) && a > 0.0) {
        result.doubling.push_back({kind.name(), n, b / a});
      }
    }
  }
  return result;
}

// ---- outputs ----------------------------------------------------------------

void write_type1_runs_csv(const std::vector<Type1Run>& runs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "index,victim_id,source,target,metric,success,verified,iters,rounds,c,metric_value,d_smooth,"
         "d_l2,final_f_g,adv_mean,adv_std,error\n";
  for (const auto& r : runs) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.index << ',' << r.victim_id << ',' << class_code(r.source) << ',' << class_code(r.target) << ','
        << r.metric << ',' << int(r.success) << ',' << int(r.verified) << ',' << r.iters << ',' << r.rounds
        << ',' << detail::format_double(r.c) << ',' << detail::format_double(r.metric_value) << ','
        << detail::format_double(r.d_smooth) << ',' << detail::format_double(r.d_l2) << ','
        << detail::format_double(r.final_f_g) << ',' << detail::format_double(r.adv_mean) << ','
        << detail::format_double(r.adv_std) << ',' << err << '\n';
  }
}

void write_table_csv(const ResultTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "source,target,variant,w_d,trials,successes,rate,mean_metric,mean_iters\n";
  for (const auto& r : table.rows) {
    out << class_code(r.source) << ',' << class_code(r.target) << ',' << r.variant << ',' << r.w_d << ','
        << r.trials << ',' << r.successes << ',' << fixed(r.rate()) << ',' << fixed(r.mean_metric) << ','
        << fixed(r.mean_iters, 2) << '\n';
  }
}

void write_bench_csv(const BenchResult& bench, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "metric,length,median_seconds,value\n";
  for (const auto& r : bench.rows) {
    out << r.metric << ',' << r.length << ',' << detail::format_double(r.median_seconds) << ','
        << detail::format_double(r.value) << '\n';
  }
}

void emit_plot_data(const ResultTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "series,source,target,filter,w_d,rate\n";
  for (const auto& r : table.rows) {
    out << class_code(r.source) << "->" << class_code(r.target) << '/' << r.variant << ','
        << class_code(r.source) << ',' << class_code(r.target) << ',' << r.variant << ',' << r.w_d << ','
        << fixed(r.rate()) << '\n';
  }
}

std::vector<PlotPoint> load_plot_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "series,source,target,filter,w_d,rate") {
    throw Error(ErrorCode::ParseError, "bad plot data header in " + path.string());
  }
  std::vector<PlotPoint> points;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 6 fields");
    }
    PlotPoint p;
    p.series = f[0];
    p.source = parse_class(f[1]);
    p.target = parse_class(f[2]);
    p.filter = f[3];
    p.w_d = detail::parse_uint(f[4], ErrorCode::ParseError);
    p.rate = detail::parse_double(f[5], ErrorCode::ParseError);
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace ecgadv::harness
