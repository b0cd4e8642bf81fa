#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace ecgadv::dsp {

using cplx = std::complex<double>;

struct Spectrum {
  std::vector<cplx> bins;
  double fs = 0.0;

  std::size_t size() const { return bins.size(); }
  /// Frequency of bin k for k <= n/2.
  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * fs / static_cast<double>(bins.size());
  }
};

/// Precomputed complex DFT of one length. Lengths whose prime factors are all
/// small go through a recursive mixed-radix decomposition; anything with a large
/// prime factor is handled by Bluestein's chirp-z over a power-of-two plan.
/// Plans are immutable after construction and safe to share across threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }
  /// Unnormalized forward transform, X_k = sum_j x_j e^{-2 pi i jk/n}.
  void forward(std::span<const cplx> in, std::span<cplx> out) const;
  /// Inverse transform including the 1/n factor.
  void inverse(std::span<const cplx> in, std::span<cplx> out) const;

  bool uses_bluestein() const;

 private:
  struct Impl;
  std::size_t n_;
  std::unique_ptr<Impl> impl_;
};

/// Process-wide cache of plans keyed by length.
const FftPlan& plan_for(std::size_t n);

Spectrum dft_forward(std::span<const double> x, double fs);
/// Real part of the inverse transform.
std::vector<double> dft_inverse(const Spectrum& spectrum);

struct FrequencyMask {
  double low_cut_hz = 0.05;
  std::vector<double> notch_centers_hz{50.0, 60.0};
  double notch_halfwidth_hz = 0.5;

  void validate(double fs) const;
};

/// Boolean per bin (length n): true where the mask zeroes power, Hermitian-symmetric.
std::vector<bool> masked_bins(const FrequencyMask& mask, std::size_t n, double fs);

/// The rectangular filter h: DFT, zero masked bins, inverse DFT. Linear,
/// idempotent and self-adjoint, so it also serves as its own gradient map.
std::vector<double> rect_filter(std::span<const double> x, const FrequencyMask& mask, double fs);

struct Biquad {
  // y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  std::complex<double> response(double freq_hz, double fs) const;
  double max_pole_magnitude() const;
};

struct IirFilterBank {
  std::vector<Biquad> sections;

  std::complex<double> response(double freq_hz, double fs) const;
};

struct IirDesign {
  double highpass_cutoff_hz = 0.05;
  int highpass_order = 2;
  std::vector<double> notch_centers_hz{50.0, 60.0};
  double notch_q = 30.0;
};

/// Butterworth high-pass (even order, bilinear with prewarp) followed by
/// notch biquads. Throws UnstableFilter if any section has a pole on or
/// outside the unit circle.
IirFilterBank design_filter_bank(const IirDesign& design, double fs);

/// Single causal pass of the cascade with zero initial state.
std::vector<double> iir_apply(std::span<const double> x, const IirFilterBank& bank);

}  // namespace ecgadv::dsp
