// ecgadv: synthetic ECG data, victim training, Type I / Type II attacks,
// robustness evaluation, experiment grids and metric timing.

#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ecgadv/attack_type1.hpp"
#include "ecgadv/attack_type2.hpp"
#include "ecgadv/config.hpp"
#include "ecgadv/detail/io.hpp"
#include "ecgadv/error.hpp"
#include "ecgadv/harness.hpp"
#include "ecgadv/metrics.hpp"
#include "ecgadv/model.hpp"
#include "ecgadv/signal.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ecgadv;

namespace {

/// Bad input or configuration: exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::string weights;
  std::string dataset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> target;
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> w_d;
  std::optional<int> verbosity;
  std::string id;
  std::string artifact;
  std::string filter = "both";
  std::string kind = "type1";
};

class Run {
 public:
  Run(std::string command, CliConfig cfg, fs::path out)
      : command_(std::move(command)), cfg_(std::move(cfg)), out_(std::move(out)) {
    fs::create_directories(out_);
  }

  const CliConfig& cfg() const { return cfg_; }
  fs::path path(const std::string& name) {
    files_.push_back(name);
    return out_ / name;
  }
  void result(const std::string& key, json value) { results_[key] = std::move(value); }
  void log(int level, const std::string& msg) const {
    if (cfg_.verbosity >= level) std::cerr << "[" << command_ << "] " << msg << "\n";
  }

  void write_manifest() {
    const auto cfg_name = command_ + ".config";
    {
      std::ofstream c(out_ / cfg_name);
      c << config_to_text(cfg_);
    }
    files_.push_back(cfg_name);
    json m;
    m["command"] = command_;
    m["seed"] = cfg_.seed;
    m["files"] = files_;
    json conf = json::object();
    for (const auto& k : config_keys()) conf[k.key] = get_config_value(cfg_, k.key);
    m["config"] = conf;
    m["results"] = results_;
    m["environment"] = {{"compiler", __VERSION__},
                        {"cplusplus", static_cast<long>(__cplusplus)},
                        {"openmp_max_threads", omp_get_max_threads()}};
    std::ofstream out(out_ / (command_ + ".manifest.json"));
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_.string());
    out << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  CliConfig cfg_;
  fs::path out_;
  std::vector<std::string> files_;
  json results_ = json::object();
};

CliConfig build_config(const Options& o) {
  CliConfig cfg;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw UsageError("config file not found: " + o.config_path);
    cfg = load_config(o.config_path, cfg);
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.per_class) cfg.per_class = *o.per_class;
  if (o.w_d) cfg.type2.w_d = *o.w_d;
  if (o.verbosity) cfg.verbosity = *o.verbosity;
  if (o.target) {
    set_config_value(cfg, "type1.target", *o.target);
    set_config_value(cfg, "type2.target", *o.target);
  }
  cfg.arch.input_len = cfg.length;
  cfg.validate();
  return cfg;
}

fs::path output_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("ECGADV_OUT"); env && *env) return env;
  return "ecgadv-out";
}

/// The explicit --dataset, else <out>/dataset.csv, else a fresh synthetic set.
Dataset obtain_dataset(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  fs::path p = o.dataset;
  if (p.empty() && fs::exists(output_dir(o) / "dataset.csv")) p = output_dir(o) / "dataset.csv";
  Dataset d;
  if (!p.empty()) {
    if (!fs::exists(p)) throw UsageError("dataset not found: " + p.string() + " (run `ecgadv synth` first)");
    run.log(1, "loading " + p.string());
    d = load_csv(p);
  } else {
    run.log(1, "synthesizing " + std::to_string(cfg.per_class) + " segments per class");
    d = synth_dataset(cfg.per_class, cfg.length, cfg.fs, cfg.seed);
  }
  for (const auto& s : d.segments) {
    if (s.samples.size() != cfg.length) {
      throw Error(ErrorCode::ShapeMismatch, "segment " + s.id + " has " + std::to_string(s.samples.size()) +
                                                " samples; data.length is " + std::to_string(cfg.length));
    }
  }
  return d;
}

model::ModelParams obtain_weights(const Options& o) {
  fs::path p = o.weights.empty() ? output_dir(o) / "model.bin" : fs::path(o.weights);
  if (!fs::exists(p)) {
    throw UsageError("weights file not found: " + p.string() + " (run `ecgadv train` or pass --weights)");
  }
  return model::load_params(p);
}

void check_input_len(const model::ModelParams& params, const CliConfig& cfg) {
  if (params.arch.input_len != cfg.length) {
    throw Error(ErrorCode::ShapeMismatch, "weights expect input length " + std::to_string(params.arch.input_len) +
                                              "; data.length is " + std::to_string(cfg.length));
  }
}

const EcgSegment* find_segment(const Dataset& d, const std::string& id) {
  for (const auto& s : d.segments) {
    if (s.id == id) return &s;
  }
  throw UsageError("no segment with id '" + id + "' in the dataset");
}

/// First correctly classified test segment not of class `avoid`.
void check_target(const EcgSegment& x, RhythmClass target) {
  if (x.label == target) {
    throw Error(ErrorCode::TargetEqualsSource,
                "segment '" + x.id + "' is labelled " + class_name(target) + "; pick a different --target");
  }
}

const EcgSegment* default_victim(const model::ModelParams& params, const Dataset& test, RhythmClass avoid) {
  for (const auto& s : test.segments) {
    if (s.label == avoid) continue;
    if (model::classify(params, s.samples).argmax == s.label) return &s;
  }
  throw Error(ErrorCode::EmptyVictimSet, "no correctly classified test segment outside the target class");
}

// ---- subcommands --------------------------------------------------------------

void cmd_synth(const Options&, Run& run) {
  const auto& cfg = run.cfg();
  const auto d = synth_dataset(cfg.per_class, cfg.length, cfg.fs, cfg.seed);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);
  save_csv(d, run.path("dataset.csv"));
  save_csv(train, run.path("train.csv"));
  save_csv(test, run.path("test.csv"));
  run.result("segments", d.segments.size());
  run.result("train", train.segments.size());
  run.result("test", test.segments.size());
  run.log(1, "wrote " + std::to_string(d.segments.size()) + " segments");
}

void cmd_train(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  const auto d = obtain_dataset(o, run);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);
  model::TrainReport report;
  const auto params = model::train(train, test, cfg.arch, cfg.train, &report, [&](const model::EpochReport& e) {
    run.log(1, "epoch " + std::to_string(e.epoch) + " loss " + detail::format_double(e.mean_loss) + " train " +
                   detail::format_double(e.train_accuracy) + " test " + detail::format_double(e.test_accuracy));
  });
  model::save_params(params, run.path("model.bin"));
  std::ofstream log(run.path("train_log.csv"));
  log << "epoch,mean_loss,train_accuracy,test_accuracy\n";
  for (const auto& e : report.epochs) {
    log << e.epoch << ',' << detail::format_double(e.mean_loss) << ',' << detail::format_double(e.train_accuracy)
        << ',' << detail::format_double(e.test_accuracy) << '\n';
  }
  run.result("best_epoch", report.best_epoch);
  run.result("test_accuracy", params.test_accuracy);
  run.result("train_accuracy", params.train_accuracy);
}

void cmd_attack1(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  const auto params = obtain_weights(o);
  check_input_len(params, cfg);
  const auto d = obtain_dataset(o, run);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);
  const auto tcfg = cfg.resolved_type1();
  const EcgSegment* x = o.id.empty() ? default_victim(params, test, tcfg.target) : find_segment(d, o.id);
  check_target(*x, tcfg.target);
  run.log(1, "attacking " + x->id + " toward " + class_name(tcfg.target) + " with " + tcfg.metric.name());
  const auto out = attack::attack_type1(params, *x, tcfg);

  Dataset adv;
  adv.segments.push_back(*x);
  EcgSegment xa = *x;
  xa.samples = out.x_adv;
  xa.id = x->id + "-adv";
  xa.label = out.predicted;
  adv.segments.push_back(std::move(xa));
  save_csv(adv, run.path("adversarial.csv"));

  std::ofstream csv(run.path("attack1.csv"));
  csv << "victim_id,source,target,metric,success,predicted,iters,rounds,c,metric_value,d_smooth,d_l2\n";
  csv << x->id << ',' << class_code(out.source) << ',' << class_code(tcfg.target) << ',' << tcfg.metric.name()
      << ',' << int(out.success) << ',' << class_code(out.predicted) << ',' << out.iters_used << ','
      << out.rounds_used << ',' << detail::format_double(out.c_used) << ','
      << detail::format_double(out.metric_value) << ','
      << detail::format_double(metrics::d_smooth(out.delta, false).value) << ','
      << detail::format_double(metrics::d_l2(out.delta, false).value) << '\n';
  run.result("victim_id", x->id);
  run.result("success", out.success);
  run.result("iters", out.iters_used);
  run.result("metric_value", out.metric_value);
  run.log(1, out.success ? "success" : "no success within the iteration budget");
}

void cmd_attack2(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  const auto params = obtain_weights(o);
  check_input_len(params, cfg);
  const auto d = obtain_dataset(o, run);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);
  const auto tcfg = cfg.resolved_type2();
  const EcgSegment* x = o.id.empty() ? default_victim(params, test, tcfg.target) : find_segment(d, o.id);
  check_target(*x, tcfg.target);
  run.log(1, "generating from " + x->id + " toward " + class_name(tcfg.target) + ", window " +
                 std::to_string(tcfg.window(cfg.length)));
  const auto art = attack::attack_type2(params, *x, tcfg);
  attack::save_artifact(art, run.path("perturbation.bin"));
  std::ofstream csv(run.path("attack2.csv"));
  csv << "source_id,source,target,w_d,iters,mean_distance,final_objective,sampled_success\n";
  csv << art.training_source_id << ',' << class_code(art.source) << ',' << class_code(art.target) << ','
      << tcfg.window(cfg.length) << ',' << art.iters_used << ',' << detail::format_double(art.mean_distance) << ','
      << detail::format_double(art.final_objective) << ',' << detail::format_double(art.final_sampled_success)
      << '\n';
  run.result("source_id", art.training_source_id);
  run.result("iters", art.iters_used);
  run.result("sampled_success", art.final_sampled_success);
}

void cmd_eval(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  const auto params = obtain_weights(o);
  check_input_len(params, cfg);
  const auto d = obtain_dataset(o, run);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);

  if (o.artifact.empty()) {
    std::ofstream csv(run.path("eval.csv"));
    csv << "class,segments,correct,accuracy\n";
    for (int c = 0; c < kNumClasses; ++c) {
      const auto cls = class_from_index(c);
      const auto sub = test.of_class(cls);
      std::size_t correct = 0;
      for (const auto* seg : sub) correct += model::classify(params, seg->samples).argmax == cls ? 1 : 0;
      const double acc = sub.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(sub.size());
      csv << class_code(cls) << ',' << sub.size() << ',' << correct << ',' << detail::format_double(acc) << '\n';
    }
    const double acc = model::accuracy(params, test);
    run.result("test_accuracy", acc);
    run.log(1, "test accuracy " + detail::format_double(acc));
    return;
  }

  if (!fs::exists(o.artifact)) throw UsageError("artifact not found: " + o.artifact);
  const auto art = attack::load_artifact(o.artifact);
  if (art.delta.size() != cfg.length) throw Error(ErrorCode::ShapeMismatch, "artifact length differs from data.length");
  std::vector<const EcgSegment*> victims;
  for (const auto* s : harness::select_correct(params, test, art.source, cfg.victims_per_pair + 1)) {
    if (s->id != art.training_source_id && victims.size() < cfg.victims_per_pair) victims.push_back(s);
  }
  std::vector<attack::FilterChoice> filters;
  if (o.filter == "rect" || o.filter == "both") filters.push_back(attack::FilterChoice::Rect);
  if (o.filter == "iir" || o.filter == "both") filters.push_back(attack::FilterChoice::Iir);
  if (filters.empty()) throw UsageError("--filter must be rect, iir or both");

  std::ofstream csv(run.path("robustness.csv"));
  csv << "filter,victim_id,trials,successes,rate\n";
  json rates = json::object();
  for (auto f : filters) {
    const auto rep =
        attack::evaluate_robustness(params, art, victims, f, cfg.n_shifts, cfg.seed, cfg.filters());
    for (std::size_t v = 0; v < rep.victim_ids.size(); ++v) {
      csv << attack::filter_name(f) << ',' << rep.victim_ids[v] << ',' << rep.n_shifts << ',' << rep.successes[v]
          << ',' << detail::format_double(static_cast<double>(rep.successes[v]) / static_cast<double>(rep.n_shifts))
          << '\n';
    }
    rates[attack::filter_name(f)] = rep.rate();
    run.log(1, attack::filter_name(f) + " success rate " + detail::format_double(rep.rate()));
  }
  run.result("rates", rates);
}

void cmd_sweep(const Options& o, Run& run) {
  const auto& cfg = run.cfg();
  const auto params = obtain_weights(o);
  check_input_len(params, cfg);
  const auto d = obtain_dataset(o, run);
  const auto [train, test] = split(d, cfg.train_fraction, cfg.seed);

  if (o.kind == "type1") {
    harness::Type1GridSpec spec;
    spec.victims_per_class = cfg.victims_per_class;
    spec.metrics.clear();
    for (const auto& m : cfg.grid_metrics) spec.metrics.push_back(cfg.metric(m));
    spec.base = cfg.resolved_type1();
    run.log(1, "Type I grid over " + std::to_string(cfg.grid_metrics.size()) + " metrics");
    const auto res = harness::run_type1_grid(params, test, spec);
    harness::write_type1_runs_csv(res.runs, run.path("type1_runs.csv"));
    harness::write_table_csv(res.table, run.path("type1_table.csv"));
    std::size_t failed = 0;
    for (const auto& r : res.runs) failed += r.error.empty() ? 0 : 1;
    run.result("runs", res.runs.size());
    run.result("failed_cells", failed);
    return;
  }
  if (o.kind != "type2" && o.kind != "window") throw UsageError("--kind must be type1, type2 or window");

  harness::Type2GridSpec spec;
  spec.sources_per_pair = cfg.sources_per_pair;
  spec.victims_per_pair = cfg.victims_per_pair;
  spec.n_shifts = cfg.n_shifts;
  spec.seed = cfg.seed;
  spec.base = cfg.resolved_type2();
  spec.filters = cfg.filters();
  if (o.kind == "type2") {
    run.log(1, "Type II grid");
    const auto res = harness::run_type2_grid(params, test, spec);
    harness::write_table_csv(res.table, run.path("type2_table.csv"));
    return;
  }
  spec.windows = cfg.resolved_windows();
  run.log(1, "window sweep over " + std::to_string(spec.windows.size()) + " windows");
  const auto res = harness::run_window_sweep(params, test, spec);
  harness::write_table_csv(res.table, run.path("window_table.csv"));
  harness::emit_plot_data(res.table, run.path("window_plot.csv"));
}

void cmd_bench(const Options&, Run& run) {
  const auto& cfg = run.cfg();
  const auto res = harness::run_metric_bench(cfg.bench_lengths, cfg.bench_reps, cfg.bench_soft_dtw_max, cfg.seed);
  // values are deterministic; wall times are not and live in their own file
  std::ofstream values(run.path("bench_values.csv"));
  values << "metric,length,value\n";
  for (const auto& r : res.rows) values << r.metric << ',' << r.length << ',' << detail::format_double(r.value) << '\n';
  harness::write_bench_csv(res, run.path("bench_timings.csv"));
  std::ofstream ratios(run.path("bench_ratios.csv"));
  ratios << "metric,length,doubling_ratio\n";
  for (const auto& r : res.doubling) {
    ratios << r.metric << ',' << r.length << ',' << detail::format_double(r.ratio) << '\n';
  }
  for (const auto& r : res.rows) {
    run.log(1, r.metric + " n=" + std::to_string(r.length) + " " + detail::format_double(r.median_seconds) + " s");
  }
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::IoError:
    case ErrorCode::Divergence:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted adversarial attacks on a 1-D CNN ECG rhythm classifier"};
  app.footer("\n" + config_help() +
             "\nThe default output directory is $ECGADV_OUT, or ./ecgadv-out when unset.\n"
             "Exit codes: 0 success, 1 validation error, 2 runtime failure.");
  app.require_subcommand(1);

  Options o;
  app.add_option("-c,--config", o.config_path, "config file of key = value lines");
  app.add_option("--set", o.sets, "override one config key (key=value), repeatable");
  app.add_option("-o,--out", o.out, "output directory");
  app.add_option("--weights", o.weights, "model weights (default <out>/model.bin)");
  app.add_option("--dataset", o.dataset, "dataset CSV (default <out>/dataset.csv, else synthesized)");
  app.add_option("--seed", o.seed, "shorthand for seed=");
  app.add_option("--target", o.target, "shorthand for type1.target= and type2.target=");
  app.add_option("-v,--verbosity", o.verbosity, "shorthand for verbosity=");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset and its train/test split");
  synth->add_option("--per-class", o.per_class, "shorthand for data.per_class=");
  auto* train = app.add_subcommand("train", "train the victim classifier");
  train->add_option("--per-class", o.per_class, "shorthand for data.per_class= when synthesizing");
  auto* attack1 = app.add_subcommand("attack1", "Type I attack on one segment");
  attack1->add_option("--id", o.id, "victim segment id (default: first correct test segment)");
  auto* attack2 = app.add_subcommand("attack2", "generate a Type II perturbation from one segment");
  attack2->add_option("--id", o.id, "source segment id (default: first correct test segment)");
  attack2->add_option("--w-d", o.w_d, "shorthand for type2.w_d=");
  auto* eval = app.add_subcommand("eval", "test accuracy, or robustness of a Type II perturbation");
  eval->add_option("--artifact", o.artifact, "perturbation file written by attack2");
  eval->add_option("--filter", o.filter, "rect | iir | both")->capture_default_str();
  auto* sweep = app.add_subcommand("sweep", "experiment grids over all 12 source-target pairs");
  sweep->add_option("--kind", o.kind, "type1 | type2 | window")->capture_default_str();
  auto* bench = app.add_subcommand("bench", "time the distance metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    const auto cfg = build_config(o);
    auto* sub = app.get_subcommands().front();
    Run run(sub->get_name(), cfg, output_dir(o));
    if (sub == synth) cmd_synth(o, run);
    else if (sub == train) cmd_train(o, run);
    else if (sub == attack1) cmd_attack1(o, run);
    else if (sub == attack2) cmd_attack2(o, run);
    else if (sub == eval) cmd_eval(o, run);
    else if (sub == sweep) cmd_sweep(o, run);
    else if (sub == bench) cmd_bench(o, run);
    run.write_manifest();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
