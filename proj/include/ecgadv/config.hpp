#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgadv/attack_type1.hpp"
#include "ecgadv/attack_type2.hpp"
#include "ecgadv/dsp.hpp"
#include "ecgadv/model.hpp"

namespace ecgadv {

/// Every tunable of the command-line tool. Files use `key = value` lines;
/// `#` starts a comment and lists are comma-separated.
struct CliConfig {
  std::uint64_t seed = 1;
  int verbosity = 1;  // 0 quiet, 1 progress, 2 detail

  // data
  std::size_t per_class = 500;
  std::size_t length = kDefaultLength;
  double fs = kDefaultSampleRate;
  double train_fraction = 0.75;

  model::Architecture arch;
  model::TrainConfig train;

  // metric parameters shared by every metric name below
  double smooth_l2_k = 0.01;
  double soft_dtw_gamma = 1.0;

  attack::Type1Config type1;
  std::string type1_metric = "smooth_l2";
  attack::Type2Config type2;
  std::string type2_metric = "l2";
  dsp::IirDesign iir;  // the rectangular mask is type2.mask

  // experiment grids
  std::size_t victims_per_class = 10;
  std::vector<std::string> grid_metrics{"smooth_l2", "smooth", "l2"};
  std::size_t sources_per_pair = 3;
  std::size_t victims_per_pair = 20;
  std::size_t n_shifts = 200;
  std::vector<std::size_t> windows;  // empty: n, 5n/6, 2n/3, n/2, n/3, n/6

  // metric timing
  std::vector<std::size_t> bench_lengths{1125, 2250, 4500, 9000, 18000};
  std::size_t bench_reps = 5;
  std::size_t bench_soft_dtw_max = 9000;

  metrics::MetricKind metric(const std::string& name) const;
  /// type1/type2 configs with metric names resolved and the architecture
  /// input length tied to the data length.
  attack::Type1Config resolved_type1() const;
  attack::Type2Config resolved_type2() const;
  attack::DeviceFilters filters() const;
  std::vector<std::size_t> resolved_windows() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

struct ConfigKey {
  std::string key;
  std::string help;
};

/// All keys in file order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value; throws ConfigError on unknown key or bad value.
void set_config_value(CliConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const CliConfig& cfg, const std::string& key);

/// Parses `key = value` text on top of `base`. Errors carry the 1-based line number.
CliConfig parse_config(const std::string& text, CliConfig base = {});
CliConfig load_config(const std::filesystem::path& path, CliConfig base = {});

/// Every key with its current value, one per line, parseable by parse_config.
std::string config_to_text(const CliConfig& cfg);

/// Human-readable key listing with defaults and help strings.
std::string config_help();

}  // namespace ecgadv
