#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ecgadv {

enum class RhythmClass : int { N = 0, A = 1, O = 2, Noise = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr double kDefaultSampleRate = 300.0;
inline constexpr std::size_t kDefaultLength = 9000;

/// Single-letter code used in CSV files and reports: N, A, O, X.
char class_code(RhythmClass c);
/// Inverse of class_code; nullopt for anything else.
std::optional<RhythmClass> class_from_code(std::string_view code);
std::string class_name(RhythmClass c);
RhythmClass class_from_index(int index);
inline int class_index(RhythmClass c) { return static_cast<int>(c); }

struct EcgSegment {
  std::vector<double> samples;
  double sample_rate_hz = kDefaultSampleRate;
  RhythmClass label = RhythmClass::N;
  std::string id;

  std::size_t size() const { return samples.size(); }
  /// |mean| and |popstd - 1| both within tol.
  bool is_standardized(double tol = 1e-9) const;
};

struct Dataset {
  std::vector<EcgSegment> segments;
  std::string provenance;

  std::size_t size() const { return segments.size(); }
  double sample_rate_hz() const;
  /// Segments whose label equals c, in dataset order.
  std::vector<const EcgSegment*> of_class(RhythmClass c) const;
};

double mean(std::span<const double> x);
/// Population standard deviation (divides by count).
double popstd(std::span<const double> x);

/// Affine map to zero mean and unit population variance. Throws ZeroVariance.
std::vector<double> standardize(std::span<const double> x);

/// Pulls an upstream gradient g (w.r.t. y = standardize(z)) back to z.
/// `y` is the standardized output and `sigma` the population std of z.
std::vector<double> standardize_backward(std::span<const double> y, double sigma,
                                         std::span<const double> g);

EcgSegment synth_segment(RhythmClass cls, std::size_t length, double fs, std::uint64_t seed);

Dataset synth_dataset(std::size_t per_class, std::size_t length, double fs, std::uint64_t seed);

/// Stratified, seeded partition; returns (train, test).
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace ecgadv
