#include "ecgadv/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "ecgadv/error.hpp"

namespace ecgadv::dsp {

namespace {

constexpr std::size_t kMaxRadix = 13;

std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> f;
  // radix-4 first would be faster; plain primes keep the butterfly generic
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

struct FftPlan::Impl {
  std::size_t n = 0;
  std::vector<std::size_t> factors;
  std::vector<cplx> twiddle;  // e^{-2 pi i j / n}, j = 0..n-1

  // Bluestein state
  bool bluestein = false;
  std::unique_ptr<FftPlan> inner;
  std::vector<cplx> chirp;         // e^{-i pi k^2 / n}, k = 0..n-1
  std::vector<cplx> kernel_freq;   // FFT of the conjugate chirp, wrapped to inner size

  void mixed_radix(const cplx* in, std::size_t stride, cplx* out, std::size_t len,
                   std::size_t level) const {
    if (len == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = factors[level];
    const std::size_t m = len / p;
    for (std::size_t q = 0; q < p; ++q) {
      mixed_radix(in + q * stride, stride * p, out + q * m, m, level + 1);
    }
    const std::size_t tw_step = n / len;
    std::array<cplx, kMaxRadix> t{};
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t q = 0; q < p; ++q) {
        t[q] = out[q * m + k] * twiddle[(q * k * tw_step) % n];
      }
      for (std::size_t r = 0; r < p; ++r) {
        cplx acc = t[0];
        for (std::size_t q = 1; q < p; ++q) {
          acc += t[q] * twiddle[((q * r) % p) * (n / p)];
        }
        out[r * m + k] = acc;
      }
    }
  }
};

FftPlan::FftPlan(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "FFT length must be positive");
  impl_->n = n;
  impl_->factors = factorize(n);
  const bool small_primes = impl_->factors.empty() || impl_->factors.back() <= kMaxRadix;
  impl_->twiddle.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    impl_->twiddle[j] = {std::cos(ang), std::sin(ang)};
  }
  if (small_primes) return;

  impl_->bluestein = true;
  const std::size_t m = next_pow2(2 * n - 1);
  impl_->inner = std::make_unique<FftPlan>(m);
  impl_->chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small and exact
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    impl_->chirp[k] = {std::cos(ang), std::sin(ang)};
  }
  std::vector<cplx> b(m, cplx{0.0, 0.0});
  b[0] = std::conj(impl_->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b[k] = std::conj(impl_->chirp[k]);
    b[m - k] = std::conj(impl_->chirp[k]);
  }
  impl_->kernel_freq.resize(m);
  impl_->inner->forward(b, impl_->kernel_freq);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

bool FftPlan::uses_bluestein() const { return impl_->bluestein; }

void FftPlan::forward(std::span<const cplx> in, std::span<cplx> out) const {
  if (in.size() != n_ || out.size() != n_) {
    throw Error(ErrorCode::ShapeMismatch, "FFT buffer length mismatch");
  }
  if (!impl_->bluestein) {
    if (in.data() == out.data()) {
      std::vector<cplx> tmp(in.begin(), in.end());
      impl_->mixed_radix(tmp.data(), 1, out.data(), n_, 0);
    } else {
      impl_->mixed_radix(in.data(), 1, out.data(), n_, 0);
    }
    return;
  }
  const std::size_t m = impl_->inner->size();
  std::vector<cplx> a(m, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * impl_->chirp[k];
  std::vector<cplx> fa(m);
  impl_->inner->forward(a, fa);
  for (std::size_t k = 0; k < m; ++k) fa[k] *= impl_->kernel_freq[k];
  impl_->inner->inverse(fa, a);
  for (std::size_t k = 0; k < n_; ++k) out[k] = a[k] * impl_->chirp[k];
}

void FftPlan::inverse(std::span<const cplx> in, std::span<cplx> out) const {
  std::vector<cplx> tmp(in.size());
  for (std::size_t k = 0; k < in.size(); ++k) tmp[k] = std::conj(in[k]);
  forward(tmp, out);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : out) v = std::conj(v) * scale;
}

const FftPlan& plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

Spectrum dft_forward(std::span<const double> x, double fs) {
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "dft needs at least 2 samples");
  std::vector<cplx> in(x.begin(), x.end());
  Spectrum s;
  s.fs = fs;
  s.bins.resize(x.size());
  plan_for(x.size()).forward(in, s.bins);
  return s;
}

std::vector<double> dft_inverse(const Spectrum& spectrum) {
  std::vector<cplx> out(spectrum.size());
  plan_for(spectrum.size()).inverse(spectrum.bins, out);
  std::vector<double> x(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) x[i] = out[i].real();
  return x;
}

void FrequencyMask::validate(double fs) const {
  if (!(low_cut_hz >= 0.0 && low_cut_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidArgument, "mask low cut must lie in [0, fs/2)");
  }
  if (!(notch_halfwidth_hz >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "notch half-width must be non-negative");
  }
  for (double c : notch_centers_hz) {
    if (!(c > 0.0 && c < fs / 2.0)) {
      throw Error(ErrorCode::InvalidArgument, "notch centers must lie in (0, fs/2)");
    }
  }
}

std::vector<bool> masked_bins(const FrequencyMask& mask, std::size_t n, double fs) {
  mask.validate(fs);
  std::vector<bool> out(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    // folding k and n-k onto the same frequency makes the mask Hermitian
    const std::size_t folded = std::min(k, n - k);
    const double f = static_cast<double>(folded) * fs / static_cast<double>(n);
    bool hit = f < mask.low_cut_hz;
    for (double c : mask.notch_centers_hz) hit = hit || std::abs(f - c) <= mask.notch_halfwidth_hz;
    out[k] = hit;
  }
  return out;
}

std::vector<double> rect_filter(std::span<const double> x, const FrequencyMask& mask, double fs) {
  auto spec = dft_forward(x, fs);
  const auto zero = masked_bins(mask, x.size(), fs);
  for (std::size_t k = 0; k < spec.bins.size(); ++k) {
    if (zero[k]) spec.bins[k] = {0.0, 0.0};
  }
  return dft_inverse(spec);
}

std::complex<double> Biquad::response(double freq_hz, double fs) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs;
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

double Biquad::max_pole_magnitude() const {
  // roots of z^2 + a1 z + a2
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  const cplx r1 = (-a1 + disc) / 2.0;
  const cplx r2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

std::complex<double> IirFilterBank::response(double freq_hz, double fs) const {
  cplx h{1.0, 0.0};
  for (const auto& s : sections) h *= s.response(freq_hz, fs);
  return h;
}

IirFilterBank design_filter_bank(const IirDesign& design, double fs) {
  if (design.highpass_order < 2 || design.highpass_order % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "Butterworth order must be even and >= 2");
  }
  if (!(design.highpass_cutoff_hz > 0.0 && design.highpass_cutoff_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidArgument, "high-pass cutoff must lie in (0, fs/2)");
  }
  IirFilterBank bank;
  const double pi = std::numbers::pi;
  // prewarped analog cutoff, bilinear transform with K = tan(wc/2)
  const double k = std::tan(pi * design.highpass_cutoff_hz / fs);
  const int order = design.highpass_order;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = pi * (2.0 * i + 1.0) / (2.0 * order);
    const double q_inv = 2.0 * std::sin(theta);  // 1/Q of this pole pair
    const double norm = 1.0 + q_inv * k + k * k;
    Biquad s;
    s.b0 = 1.0 / norm;
    s.b1 = -2.0 / norm;
    s.b2 = 1.0 / norm;
    s.a1 = 2.0 * (k * k - 1.0) / norm;
    s.a2 = (1.0 - q_inv * k + k * k) / norm;
    bank.sections.push_back(s);
  }
  for (double f0 : design.notch_centers_hz) {
    if (!(f0 > 0.0 && f0 < fs / 2.0) || !(design.notch_q > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "notch center must lie in (0, fs/2) with Q > 0");
    }
    const double w0 = 2.0 * pi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * design.notch_q);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = 1.0 / a0;
    s.b1 = -2.0 * std::cos(w0) / a0;
    s.b2 = 1.0 / a0;
    s.a1 = -2.0 * std::cos(w0) / a0;
    s.a2 = (1.0 - alpha) / a0;
    bank.sections.push_back(s);
  }
  for (const auto& s : bank.sections) {
    if (!(s.max_pole_magnitude() < 1.0)) {
      throw Error(ErrorCode::UnstableFilter, "designed section has a pole outside the unit circle");
    }
  }
  return bank;
}

std::vector<double> iir_apply(std::span<const double> x, const IirFilterBank& bank) {
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "iir_apply needs at least 2 samples");
  for (const auto& s : bank.sections) {
    if (!(s.max_pole_magnitude() < 1.0)) {
      throw Error(ErrorCode::UnstableFilter, "filter bank contains an unstable section");
    }
  }
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : bank.sections) {
    // transposed direct form II
    double z1 = 0.0, z2 = 0.0;
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

}  // namespace ecgadv::dsp
