#include "ecgadv/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "ecgadv/detail/io.hpp"
#include "ecgadv/error.hpp"

namespace ecgadv {

namespace {

using Getter = std::function<std::string(const CliConfig&)>;
using Setter = std::function<void(CliConfig&, const std::string&)>;

struct Entry {
  ConfigKey meta;
  Getter get;
  Setter set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) { return detail::parse_double(v, ErrorCode::ConfigError); }
std::size_t to_size(const std::string& v) { return detail::parse_uint(v, ErrorCode::ConfigError); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::ConfigError, "expected true or false, got '" + v + "'");
}

RhythmClass to_class(const std::string& v) {
  auto c = class_from_code(v);
  if (!c) throw Error(ErrorCode::ConfigError, "expected a class code N, A, O or X, got '" + v + "'");
  return *c;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

template <class T>
std::string join_numbers(const std::vector<T>& v) {
  std::vector<std::string> s;
  for (const auto& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      s.push_back(detail::format_double(x));
    } else {
      s.push_back(std::to_string(x));
    }
  }
  return join(s);
}

template <class T>
std::vector<T> parse_numbers(const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    if constexpr (std::is_floating_point_v<T>) {
      out.push_back(to_double(item));
    } else {
      out.push_back(static_cast<T>(to_size(item)));
    }
  }
  return out;
}

// Typed entries built from a lambda selecting the field.
template <class F>
Entry size_entry(std::string key, std::string help, F field) {
  return {{std::move(key), std::move(help)},
          [field](const CliConfig& c) { return std::to_string(field(const_cast<CliConfig&>(c))); },
          [field](CliConfig& c, const std::string& v) { field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_size(v)); }};
}

template <class F>
Entry double_entry(std::string key, std::string help, F field) {
  return {{std::move(key), std::move(help)},
          [field](const CliConfig& c) { return detail::format_double(field(const_cast<CliConfig&>(c))); },
          [field](CliConfig& c, const std::string& v) { field(c) = to_double(v); }};
}

template <class F>
Entry class_entry(std::string key, std::string help, F field) {
  return {{std::move(key), std::move(help)},
          [field](const CliConfig& c) { return std::string(1, class_code(field(const_cast<CliConfig&>(c)))); },
          [field](CliConfig& c, const std::string& v) { field(c) = to_class(v); }};
}

template <class F>
Entry metric_entry(std::string key, std::string help, F field) {
  return {{std::move(key), std::move(help)},
          [field](const CliConfig& c) { return field(const_cast<CliConfig&>(c)); },
          [field](CliConfig& c, const std::string& v) {
            metrics::MetricKind::parse(v);  // validates the name
            field(c) = v;
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> e;
    e.push_back(size_entry("seed", "master seed for data synthesis and attacks",
                           [](CliConfig& c) -> std::uint64_t& { return c.seed; }));
    e.push_back(size_entry("verbosity", "0 quiet, 1 progress, 2 detail",
                           [](CliConfig& c) -> int& { return c.verbosity; }));

    e.push_back(size_entry("data.per_class", "synthetic segments per class",
                           [](CliConfig& c) -> std::size_t& { return c.per_class; }));
    e.push_back(size_entry("data.length", "samples per segment (also the model input length)",
                           [](CliConfig& c) -> std::size_t& { return c.length; }));
    e.push_back(double_entry("data.fs", "sampling rate in Hz", [](CliConfig& c) -> double& { return c.fs; }));
    e.push_back(double_entry("data.train_fraction", "stratified train share of the dataset",
                             [](CliConfig& c) -> double& { return c.train_fraction; }));

    e.push_back(size_entry("model.stem_channels", "stem convolution channels",
                           [](CliConfig& c) -> std::size_t& { return c.arch.stem_channels; }));
    e.push_back(size_entry("model.stem_pool", "average-pool factor after the stem",
                           [](CliConfig& c) -> std::size_t& { return c.arch.stem_pool; }));
    e.push_back(size_entry("model.kernel", "convolution kernel width (odd)",
                           [](CliConfig& c) -> std::size_t& { return c.arch.kernel; }));
    e.push_back({{"model.block_channels", "channels of each residual block"},
                 [](const CliConfig& c) { return join_numbers(c.arch.block_channels); },
                 [](CliConfig& c, const std::string& v) { c.arch.block_channels = parse_numbers<std::size_t>(v); }});

    e.push_back(size_entry("train.epochs", "training epochs",
                           [](CliConfig& c) -> std::size_t& { return c.train.epochs; }));
    e.push_back(size_entry("train.batch_size", "minibatch size",
                           [](CliConfig& c) -> std::size_t& { return c.train.batch_size; }));
    e.push_back(double_entry("train.learning_rate", "Adam learning rate",
                             [](CliConfig& c) -> double& { return c.train.learning_rate; }));
    e.push_back(size_entry("train.seed", "weight init and shuffling seed",
                           [](CliConfig& c) -> std::uint64_t& { return c.train.seed; }));

    e.push_back(double_entry("metric.smooth_l2_k", "weight of the L2 term in smooth_l2",
                             [](CliConfig& c) -> double& { return c.smooth_l2_k; }));
    e.push_back(double_entry("metric.soft_dtw_gamma", "soft-DTW temperature",
                             [](CliConfig& c) -> double& { return c.soft_dtw_gamma; }));

    e.push_back(class_entry("type1.target", "target class code",
                            [](CliConfig& c) -> RhythmClass& { return c.type1.target; }));
    e.push_back(metric_entry("type1.metric", "l2 | smooth | smooth_l2 | soft_dtw",
                             [](CliConfig& c) -> std::string& { return c.type1_metric; }));
    e.push_back(double_entry("type1.c", "initial weight of the classification term",
                             [](CliConfig& c) -> double& { return c.type1.c; }));
    e.push_back(double_entry("type1.c_escalation", "factor applied to c after an unsuccessful round",
                             [](CliConfig& c) -> double& { return c.type1.c_escalation; }));
    e.push_back(size_entry("type1.max_rounds", "number of c values tried",
                           [](CliConfig& c) -> std::size_t& { return c.type1.max_rounds; }));
    e.push_back(double_entry("type1.lr", "Adam learning rate",
                             [](CliConfig& c) -> double& { return c.type1.lr; }));
    e.push_back(size_entry("type1.max_iters", "iterations per round",
                           [](CliConfig& c) -> std::size_t& { return c.type1.max_iters; }));
    e.push_back(size_entry("type1.refine_iters", "iterations kept after the first success",
                           [](CliConfig& c) -> std::size_t& { return c.type1.refine_iters; }));
    e.push_back({{"type1.restandardize", "optimize on the restandardized adversarial input"},
                 [](const CliConfig& c) { return std::string(c.type1.restandardize ? "true" : "false"); },
                 [](CliConfig& c, const std::string& v) { c.type1.restandardize = to_bool(v); }});

    e.push_back(class_entry("type2.target", "target class code",
                            [](CliConfig& c) -> RhythmClass& { return c.type2.target; }));
    e.push_back(size_entry("type2.w_d", "perturbation window in samples (0 = full length)",
                           [](CliConfig& c) -> std::size_t& { return c.type2.w_d; }));
    e.push_back(size_entry("type2.window_offset", "window start sample",
                           [](CliConfig& c) -> std::size_t& { return c.type2.window_offset; }));
    e.push_back(size_entry("type2.shifts_per_step", "random shifts averaged per step",
                           [](CliConfig& c) -> std::size_t& { return c.type2.shifts_per_step; }));
    e.push_back(double_entry("type2.eps1", "lower distance bound (<= 0: 0.01 * length)",
                             [](CliConfig& c) -> double& { return c.type2.eps1; }));
    e.push_back(double_entry("type2.eps2", "upper distance bound (<= 0: 0.1 * length)",
                             [](CliConfig& c) -> double& { return c.type2.eps2; }));
    e.push_back(double_entry("type2.lambda", "weight of the distance band penalty",
                             [](CliConfig& c) -> double& { return c.type2.lambda; }));
    e.push_back(double_entry("type2.c", "weight of the classification term",
                             [](CliConfig& c) -> double& { return c.type2.c; }));
    e.push_back(double_entry("type2.lr", "Adam learning rate",
                             [](CliConfig& c) -> double& { return c.type2.lr; }));
    e.push_back(size_entry("type2.max_iters", "optimization steps",
                           [](CliConfig& c) -> std::size_t& { return c.type2.max_iters; }));
    e.push_back(double_entry("type2.stop_confidence", "early-stop target probability (> 1 disables)",
                             [](CliConfig& c) -> double& { return c.type2.stop_confidence; }));
    e.push_back(size_entry("type2.stop_patience", "consecutive confident steps before stopping",
                           [](CliConfig& c) -> std::size_t& { return c.type2.stop_patience; }));
    e.push_back(metric_entry("type2.metric", "l2 | smooth | smooth_l2 | soft_dtw",
                             [](CliConfig& c) -> std::string& { return c.type2_metric; }));

    e.push_back(double_entry("filter.mask_low_cut", "rectangular mask: bins below this frequency are zeroed (Hz)",
                             [](CliConfig& c) -> double& { return c.type2.mask.low_cut_hz; }));
    e.push_back({{"filter.mask_notches", "rectangular mask: notch centers (Hz)"},
                 [](const CliConfig& c) { return join_numbers(c.type2.mask.notch_centers_hz); },
                 [](CliConfig& c, const std::string& v) { c.type2.mask.notch_centers_hz = parse_numbers<double>(v); }});
    e.push_back(double_entry("filter.mask_halfwidth", "rectangular mask: notch half-width (Hz)",
                             [](CliConfig& c) -> double& { return c.type2.mask.notch_halfwidth_hz; }));
    e.push_back(double_entry("filter.iir_highpass", "IIR bank: Butterworth high-pass cutoff (Hz)",
                             [](CliConfig& c) -> double& { return c.iir.highpass_cutoff_hz; }));
    e.push_back({{"filter.iir_order", "IIR bank: high-pass order (even)"},
                 [](const CliConfig& c) { return std::to_string(c.iir.highpass_order); },
                 [](CliConfig& c, const std::string& v) { c.iir.highpass_order = static_cast<int>(to_size(v)); }});
    e.push_back({{"filter.iir_notches", "IIR bank: notch centers (Hz)"},
                 [](const CliConfig& c) { return join_numbers(c.iir.notch_centers_hz); },
                 [](CliConfig& c, const std::string& v) { c.iir.notch_centers_hz = parse_numbers<double>(v); }});
    e.push_back(double_entry("filter.iir_q", "IIR bank: notch quality factor",
                             [](CliConfig& c) -> double& { return c.iir.notch_q; }));

    e.push_back(size_entry("grid.victims_per_class", "Type I: correctly classified victims per source class",
                           [](CliConfig& c) -> std::size_t& { return c.victims_per_class; }));
    e.push_back({{"grid.metrics", "Type I: metrics compared by the grid"},
                 [](const CliConfig& c) { return join(c.grid_metrics); },
                 [](CliConfig& c, const std::string& v) {
                   auto names = split_list(v);
                   for (const auto& n : names) metrics::MetricKind::parse(n);
                   c.grid_metrics = std::move(names);
                 }});
    e.push_back(size_entry("grid.sources_per_pair", "Type II: artifacts generated per pair and window",
                           [](CliConfig& c) -> std::size_t& { return c.sources_per_pair; }));
    e.push_back(size_entry("grid.victims_per_pair", "Type II: unseen victims per pair",
                           [](CliConfig& c) -> std::size_t& { return c.victims_per_pair; }));
    e.push_back(size_entry("grid.n_shifts", "Type II: random shifts per victim at evaluation",
                           [](CliConfig& c) -> std::size_t& { return c.n_shifts; }));
    e.push_back({{"grid.windows", "window sweep sizes, descending (empty: n, 5n/6, 2n/3, n/2, n/3, n/6)"},
                 [](const CliConfig& c) { return join_numbers(c.windows); },
                 [](CliConfig& c, const std::string& v) { c.windows = parse_numbers<std::size_t>(v); }});

    e.push_back({{"bench.lengths", "signal lengths timed by bench"},
                 [](const CliConfig& c) { return join_numbers(c.bench_lengths); },
                 [](CliConfig& c, const std::string& v) { c.bench_lengths = parse_numbers<std::size_t>(v); }});
    e.push_back(size_entry("bench.reps", "timed repetitions per cell (median reported)",
                           [](CliConfig& c) -> std::size_t& { return c.bench_reps; }));
    e.push_back(size_entry("bench.soft_dtw_max", "longest signal timed for soft_dtw",
                           [](CliConfig& c) -> std::size_t& { return c.bench_soft_dtw_max; }));
    return e;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.meta.key == key) return e;
  }
  throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
}

}  // namespace

metrics::MetricKind CliConfig::metric(const std::string& name) const {
  auto m = metrics::MetricKind::parse(name);
  m.k = smooth_l2_k;
  m.gamma = soft_dtw_gamma;
  return m;
}

attack::Type1Config CliConfig::resolved_type1() const {
  auto t = type1;
  t.metric = metric(type1_metric);
  return t;
}

attack::Type2Config CliConfig::resolved_type2() const {
  auto t = type2;
  t.metric = metric(type2_metric);
  t.seed = seed;
  return t;
}

attack::DeviceFilters CliConfig::filters() const { return {type2.mask, iir}; }

std::vector<std::size_t> CliConfig::resolved_windows() const {
  return windows.empty() ? std::vector<std::size_t>{length, 5 * length / 6, 2 * length / 3, length / 2,
                                                    length / 3, length / 6}
                         : windows;
}

void CliConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorCode::ConfigError, key + ": " + why);
  };
  if (per_class == 0) fail("data.per_class", "must be positive");
  if (length < 16) fail("data.length", "must be at least 16");
  if (!(fs > 0.0)) fail("data.fs", "must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("data.train_fraction", "must lie in (0, 1)");
  if (train.epochs == 0) fail("train.epochs", "must be positive");
  if (train.batch_size == 0) fail("train.batch_size", "must be positive");
  if (!(train.learning_rate > 0.0)) fail("train.learning_rate", "must be positive");
  if (!(smooth_l2_k >= 0.0)) fail("metric.smooth_l2_k", "must be non-negative");
  if (!(soft_dtw_gamma > 0.0)) fail("metric.soft_dtw_gamma", "must be positive");
  if (grid_metrics.empty()) fail("grid.metrics", "must name at least one metric");
  if (sources_per_pair == 0) fail("grid.sources_per_pair", "must be positive");
  if (victims_per_pair == 0) fail("grid.victims_per_pair", "must be positive");
  if (victims_per_class == 0) fail("grid.victims_per_class", "must be positive");
  if (n_shifts == 0) fail("grid.n_shifts", "must be positive");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i] == 0 || windows[i] > length) fail("grid.windows", "sizes must lie in [1, data.length]");
    if (i && windows[i] > windows[i - 1]) fail("grid.windows", "must be descending");
  }
  if (bench_lengths.empty()) fail("bench.lengths", "must list at least one length");
  for (auto n : bench_lengths) {
    if (n < 3) fail("bench.lengths", "lengths must be at least 3");
  }
  if (bench_reps == 0) fail("bench.reps", "must be positive");
  try {
    auto a = arch;
    a.input_len = length;
    a.validate();
    resolved_type1().validate();
    resolved_type2().validate(length);
    type2.mask.validate(fs);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.meta);
    return k;
  }();
  return keys;
}

void set_config_value(CliConfig& cfg, const std::string& key, const std::string& value) {
  const auto& e = find_entry(key);
  try {
    e.set(cfg, value);
  } catch (const Error& err) {
    throw Error(ErrorCode::ConfigError, key + ": " + err.what());
  }
}

std::string get_config_value(const CliConfig& cfg, const std::string& key) { return find_entry(key).get(cfg); }

CliConfig parse_config(const std::string& text, CliConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const Error& err) {
      throw Error(ErrorCode::ConfigError, where + err.what());
    }
  }
  return base;
}

CliConfig load_config(const std::filesystem::path& path, CliConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const Error& err) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + err.what());
  }
}

std::string config_to_text(const CliConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.meta.key + " = " + e.get(cfg) + "\n";
  return out;
}

std::string config_help() {
  const CliConfig defaults;
  std::string out = "Configuration keys (file: key = value, or --set key=value):\n";
  for (const auto& e : entries()) {
    std::string lhs = "  " + e.meta.key + " = " + e.get(defaults);
    if (lhs.size() < 44) lhs.resize(44, ' ');
    out += lhs + "  " + e.meta.help + "\n";
  }
  return out;
}

}  // namespace ecgadv
