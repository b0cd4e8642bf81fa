#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ecgadv/attack_type1.hpp"
#include "ecgadv/dsp.hpp"
#include "ecgadv/metrics.hpp"
#include "ecgadv/model.hpp"
#include "ecgadv/signal.hpp"

namespace ecgadv::attack {

/// Circular rotation: out[(i + offset) mod n] = v[i].
std::vector<double> apply_shift(std::span<const double> v, std::size_t offset);

/// Orthogonal projection onto perturbations that are zero outside
/// [offset, offset + width) and carry no power in the masked DFT bins.
///
/// For a full-length window this is exactly dsp::rect_filter. For shorter
/// windows the masked-bin constraints restricted to the window are
/// orthonormalized once (pivoted QR) and subtracted per call. The projector is
/// symmetric, so it maps gradients back the same way it maps perturbations.
class WindowProjector {
 public:
  WindowProjector(std::size_t n, double fs, const dsp::FrequencyMask& mask, std::size_t offset,
                  std::size_t width);
  ~WindowProjector();
  WindowProjector(WindowProjector&&) noexcept;
  WindowProjector& operator=(WindowProjector&&) noexcept;

  std::vector<double> apply(std::span<const double> v) const;
  std::size_t size() const { return n_; }
  std::size_t offset() const { return offset_; }
  std::size_t width() const { return width_; }

 private:
  struct Basis;
  std::size_t n_, offset_, width_;
  double fs_;
  dsp::FrequencyMask mask_;
  std::unique_ptr<Basis> basis_;
};

struct Type2Config {
  RhythmClass target = RhythmClass::A;
  std::size_t w_d = 0;            // 0 means the full segment length
  std::size_t window_offset = 0;
  std::size_t shifts_per_step = 16;
  double eps1 = -1.0;             // <= 0 means 0.01 * n
  double eps2 = -1.0;             // <= 0 means 0.1 * n
  double lambda = 10.0;
  double c = 1000.0;  // the classification term must outweigh a distance summed over n samples
  double lr = 0.005;
  std::size_t max_iters = 2000;
  /// Generation stops early once every sampled shift reaches this target
  /// probability with the mean distance inside [eps1, eps2], for
  /// `stop_patience` consecutive steps. Set above 1 to disable.
  double stop_confidence = 0.99;
  std::size_t stop_patience = 20;
  metrics::MetricKind metric = metrics::MetricKind::l2();
  dsp::FrequencyMask mask;
  std::uint64_t seed = 1;
  AdamSettings adam;

  std::size_t window(std::size_t n) const { return w_d == 0 ? n : w_d; }
  double lower_bound(std::size_t n) const { return eps1 > 0.0 ? eps1 : 0.01 * static_cast<double>(n); }
  double upper_bound(std::size_t n) const { return eps2 > 0.0 ? eps2 : 0.1 * static_cast<double>(n); }
  void validate(std::size_t n) const;
};

struct PerturbationArtifact {
  std::vector<double> delta;
  std::string training_source_id;
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  double fs = kDefaultSampleRate;
  Type2Config config;
  // generation diagnostics
  std::size_t iters_used = 0;
  double mean_distance = 0.0;
  double final_objective = 0.0;
  double final_sampled_success = 0.0;
};

/// Expectation-over-shifts attack: Adam on a raw perturbation whose effective
/// value is WindowProjector(raw); each step samples shifts_per_step circular
/// offsets and descends mean D + c * mean(-log P(target)) + lambda * band penalty.
PerturbationArtifact attack_type2(const model::ModelParams& params, const EcgSegment& x,
                                  const Type2Config& config);

void save_artifact(const PerturbationArtifact& artifact, const std::filesystem::path& path);
PerturbationArtifact load_artifact(const std::filesystem::path& path);

enum class FilterChoice { Rect, Iir };
std::string filter_name(FilterChoice f);

struct DeviceFilters {
  dsp::FrequencyMask mask;
  dsp::IirDesign iir;
};

struct RobustnessReport {
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  FilterChoice filter = FilterChoice::Rect;
  std::size_t n_shifts = 0;
  std::vector<std::string> victim_ids;
  std::vector<std::size_t> successes;  // per victim, out of n_shifts
  std::size_t total_trials() const { return n_shifts * successes.size(); }
  std::size_t total_successes() const;
  double rate() const;
};

/// Applies the device filter to the perturbation, then for every victim and
/// n_shifts uniform circular offsets classifies standardize(x + shift(delta')).
/// Victims must belong to the artifact's source class.
RobustnessReport evaluate_robustness(const model::ModelParams& params,
                                     const PerturbationArtifact& artifact,
                                     std::span<const EcgSegment* const> victims, FilterChoice filter,
                                     std::size_t n_shifts, std::uint64_t seed,
                                     const DeviceFilters& filters = {});

struct SweepCell {
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  std::size_t w_d = 0;
  FilterChoice filter = FilterChoice::Rect;
  std::size_t artifacts = 0;
  std::size_t failed = 0;  // artifacts whose generation or evaluation threw
  std::size_t trials = 0;
  std::size_t successes = 0;
  double mean_distance = 0.0;  // generation diagnostics, averaged over artifacts
  double mean_iters = 0.0;
  double rate() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

struct SweepRequest {
  std::vector<std::size_t> windows;      // descending
  std::size_t n_shifts = 200;
  std::uint64_t seed = 1;
  DeviceFilters filters;
};

/// One pair's worth of sources and unseen victims.
struct SweepPair {
  RhythmClass source = RhythmClass::N;
  RhythmClass target = RhythmClass::A;
  std::vector<const EcgSegment*> sources;  // one artifact per source per window
  std::vector<const EcgSegment*> victims;
};

/// For each pair, window and source sample: generate an artifact (base config
/// with target and w_d overridden) and evaluate it under both filters.
std::vector<SweepCell> window_sweep(const model::ModelParams& params,
                                    std::span<const SweepPair> pairs, const Type2Config& base,
                                    const SweepRequest& request);

}  // namespace ecgadv::attack
