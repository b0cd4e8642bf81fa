#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ecgadv/dsp.hpp"
#include "ecgadv/error.hpp"
#include "support.hpp"

using namespace ecgadv;
using dsp::cplx;

namespace {

std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // reduce jk mod n first so the angle stays accurate
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      acc += x[j] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<double> tone(double f, std::size_t n = 9000, double fs = 300.0, double phase = 0.3) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  }
  return x;
}

double peak(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("fft matches the naive dft") {
  for (std::size_t n : {1, 2, 3, 4, 5, 7, 8, 12, 30, 97, 120, 127, 250, 360}) {
    CAPTURE(n);
    const auto re = testing::randn(n, n), im = testing::randn(n, n + 1000);
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = {re[i], im[i]};
    const auto expect = naive_dft(x);
    std::vector<cplx> got(n);
    dsp::plan_for(n).forward(x, got);
    double err = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      err = std::max(err, std::abs(got[k] - expect[k]));
      scale = std::max(scale, std::abs(expect[k]));
    }
    CHECK(err <= 1e-10 * std::max(1.0, scale));
  }
}

TEST_CASE("plan selection") {
  CHECK_FALSE(dsp::FftPlan(9000).uses_bluestein());
  CHECK_FALSE(dsp::FftPlan(1024).uses_bluestein());
  CHECK(dsp::FftPlan(97).uses_bluestein());
  CHECK(dsp::FftPlan(2 * 17).uses_bluestein());
}

TEST_CASE("dft round trip and Parseval at n = 9000") {
  const auto x = testing::randn(9000, 7);
  const auto spec = dsp::dft_forward(x, 300.0);
  const auto back = dsp::dft_inverse(spec);
  CHECK(max_diff(x, back) < 1e-12);

  double time_energy = 0.0, freq_energy = 0.0;
  for (double v : x) time_energy += v * v;
  for (const auto& b : spec.bins) freq_energy += std::norm(b);
  freq_energy /= 9000.0;
  CHECK(std::abs(time_energy - freq_energy) / time_energy < 1e-12);
  CHECK(spec.bin_frequency(30) == doctest::Approx(1.0));
}

TEST_CASE("masked bins") {
  const dsp::FrequencyMask mask;
  const auto m = dsp::masked_bins(mask, 9000, 300.0);
  // 1/30 Hz resolution: 50 Hz is bin 1500, 60 Hz bin 1800, halfwidth 15 bins
  CHECK(m[0]);
  CHECK(m[1]);  // 0.033 Hz < 0.05 Hz
  CHECK_FALSE(m[2]);
  CHECK(m[1500]);
  CHECK(m[1485]);
  CHECK(m[1515]);
  CHECK_FALSE(m[1484]);
  CHECK_FALSE(m[1516]);
  CHECK(m[1800]);
  CHECK_FALSE(m[300]);
  for (std::size_t k = 1; k < 9000; ++k) CHECK(m[k] == m[9000 - k]);
}

TEST_CASE("rectangular filter properties") {
  const dsp::FrequencyMask mask;
  const auto x = testing::randn(9000, 11), y = testing::randn(9000, 12);

  SUBCASE("idempotent") {
    const auto hx = dsp::rect_filter(x, mask, 300.0);
    CHECK(max_diff(hx, dsp::rect_filter(hx, mask, 300.0)) < 1e-9);
  }
  SUBCASE("linear") {
    std::vector<double> combo(9000);
    for (std::size_t i = 0; i < 9000; ++i) combo[i] = 2.5 * x[i] - 0.75 * y[i];
    const auto hx = dsp::rect_filter(x, mask, 300.0), hy = dsp::rect_filter(y, mask, 300.0);
    const auto hc = dsp::rect_filter(combo, mask, 300.0);
    std::vector<double> expect(9000);
    for (std::size_t i = 0; i < 9000; ++i) expect[i] = 2.5 * hx[i] - 0.75 * hy[i];
    CHECK(max_diff(hc, expect) < 1e-9);
  }
  SUBCASE("self-adjoint") {
    const auto hx = dsp::rect_filter(x, mask, 300.0), hy = dsp::rect_filter(y, mask, 300.0);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < 9000; ++i) {
      a += hx[i] * y[i];
      b += x[i] * hy[i];
    }
    CHECK(std::abs(a - b) < 1e-9 * std::abs(a) + 1e-9);
  }
  SUBCASE("mains tones are nulled, in-band tones pass") {
    CHECK(peak(dsp::rect_filter(tone(50.0), mask, 300.0)) < 1e-8);
    CHECK(peak(dsp::rect_filter(tone(60.0), mask, 300.0)) < 1e-8);
    const auto t10 = tone(10.0);
    CHECK(max_diff(dsp::rect_filter(t10, mask, 300.0), t10) < 1e-9);
  }
}

TEST_CASE("mask validation") {
  dsp::FrequencyMask bad;
  bad.notch_centers_hz = {160.0};
  CHECK_THROWS_AS(bad.validate(300.0), Error);
  dsp::FrequencyMask neg;
  neg.notch_halfwidth_hz = -1.0;
  CHECK_THROWS_AS(neg.validate(300.0), Error);
  CHECK_NOTHROW(dsp::FrequencyMask{}.validate(300.0));
}

TEST_CASE("iir filter bank") {
  const auto bank = dsp::design_filter_bank({}, 300.0);
  for (const auto& s : bank.sections) CHECK(s.max_pole_magnitude() < 1.0);

  const auto db = [&](double f) { return 20.0 * std::log10(std::abs(bank.response(f, 300.0))); };
  CHECK(db(50.0) <= -30.0);
  CHECK(db(60.0) <= -30.0);
  CHECK(std::abs(db(1.0)) < 1.0);
  CHECK(std::abs(db(10.0)) < 1.0);

  SUBCASE("steady-state gain matches the transfer function") {
    for (double f : {1.0, 5.0, 50.0}) {
      CAPTURE(f);
      const auto x = tone(f, 30000, 300.0, 0.0);
      const auto y = dsp::iir_apply(x, bank);
      // amplitude over the last 10 s, after the 0.05 Hz high-pass has settled
      const double got = peak(std::span<const double>(y).subspan(27000));
      CHECK(got == doctest::Approx(std::abs(bank.response(f, 300.0))).epsilon(2e-3).scale(1.0));
    }
  }
  SUBCASE("causal and linear") {
    auto x = testing::randn(2000, 3);
    const auto y = dsp::iir_apply(x, bank);
    for (std::size_t i = 1000; i < 2000; ++i) x[i] += 1.0;
    const auto y2 = dsp::iir_apply(x, bank);
    CHECK(max_diff(std::span<const double>(y).first(1000), std::span<const double>(y2).first(1000)) == 0.0);
  }
}

TEST_CASE("filter design errors") {
  dsp::IirDesign odd;
  odd.highpass_order = 3;
  CHECK_THROWS_AS(dsp::design_filter_bank(odd, 300.0), Error);
  dsp::IirDesign high;
  high.highpass_cutoff_hz = 200.0;
  CHECK_THROWS_AS(dsp::design_filter_bank(high, 300.0), Error);

  dsp::Biquad unstable;
  unstable.a2 = 1.21;  // poles at +-1.1i
  CHECK(unstable.max_pole_magnitude() == doctest::Approx(1.1));
}
