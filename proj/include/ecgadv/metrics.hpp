#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecgadv::metrics {

enum class MetricType { L2, Smooth, SmoothL2, SoftDtw };

struct MetricKind {
  MetricType type = MetricType::L2;
  double k = 0.01;      // SmoothL2 weight on the L2 term
  double gamma = 1.0;   // SoftDtw temperature

  static MetricKind l2() { return {MetricType::L2}; }
  static MetricKind smooth() { return {MetricType::Smooth}; }
  static MetricKind smooth_l2(double k = 0.01) { return {MetricType::SmoothL2, k}; }
  static MetricKind soft_dtw(double gamma = 1.0) { return {MetricType::SoftDtw, 0.01, gamma}; }

  void validate() const;
  /// "l2", "smooth", "smooth_l2", "soft_dtw".
  std::string name() const;
  static MetricKind parse(const std::string& name);
};

struct MetricValue {
  double value = 0.0;
  std::optional<std::vector<double>> gradient;
};

/// Sum of squares; gradient 2 delta.
MetricValue d_l2(std::span<const double> delta, bool with_gradient = true);

/// Population variance of first differences, one pass. Throws LengthTooShort for n < 3.
MetricValue d_smooth(std::span<const double> delta, bool with_gradient = true);

MetricValue d_smooth_l2(std::span<const double> delta, double k = 0.01, bool with_gradient = true);

/// Classic DTW with squared-difference cost, steps {up, left, diagonal}.
double dtw(std::span<const double> a, std::span<const double> b);

/// Soft-DTW value and gradient with respect to `a`.
MetricValue soft_dtw(std::span<const double> a, std::span<const double> b, double gamma,
                     bool with_gradient = true);

/// D(x, x_adv) for the perturbation-based metrics, evaluated on delta = x_adv - x.
/// Soft-DTW compares the two series directly; gradient is w.r.t. x_adv.
MetricValue distance(const MetricKind& kind, std::span<const double> x,
                     std::span<const double> x_adv, bool with_gradient = true);

}  // namespace ecgadv::metrics
