#include "ecgadv/kernels.hpp"

#include <algorithm>
#include <string>

#include "ecgadv/error.hpp"

namespace ecgadv::kernels {

namespace {

void check(const ConvShape& s, std::size_t in, std::size_t w, std::size_t out) {
  if (s.k % 2 == 0 || in != s.input_size() || w != s.weight_size() || out != s.output_size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "conv1d buffers do not match shape (in=" + std::to_string(s.in_ch) +
                    ", out=" + std::to_string(s.out_ch) + ", len=" + std::to_string(s.len) +
                    ", k=" + std::to_string(s.k) + ")");
  }
}

// valid output range [lo, hi) for tap j: t + j - pad must lie in [0, len)
inline void tap_range(std::size_t j, std::size_t pad, std::size_t len, std::size_t& lo,
                      std::size_t& hi) {
  lo = j < pad ? pad - j : 0;
  hi = j > pad ? len - (j - pad) : len;
  if (j > pad && j - pad >= len) hi = 0;
  if (lo > hi) lo = hi;
}

// Spawning a team costs more than tiny convolutions are worth.
constexpr std::size_t kParallelMinWork = 1 << 14;

}  // namespace

void conv1d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvShape& s) {
  check(s, x.size(), w.size(), y.size());
  const std::size_t len = s.len, pad = s.k / 2;
  const auto out_ch = static_cast<long>(s.out_ch);
  const bool par = s.output_size() * s.in_ch * s.k >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (par)
  for (long o = 0; o < out_ch; ++o) {
    double* yo = y.data() + static_cast<std::size_t>(o) * len;
    std::fill(yo, yo + len, 0.0);
    for (std::size_t i = 0; i < s.in_ch; ++i) {
      const double* xi = x.data() + i * len;
      const double* wk = w.data() + (static_cast<std::size_t>(o) * s.in_ch + i) * s.k;
      for (std::size_t j = 0; j < s.k; ++j) {
        std::size_t lo, hi;
        tap_range(j, pad, len, lo, hi);
        const double wv = wk[j];
        const double* src = xi + lo + j - pad;  // src[c] == xi[t + j - pad], t = lo + c
        double* dst = yo + lo;
#pragma omp simd
        for (std::size_t c = 0; c < hi - lo; ++c) dst[c] += wv * src[c];
      }
    }
  }
}

void conv1d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvShape& s) {
  check(s, gx.size(), w.size(), gy.size());
  const std::size_t len = s.len, pad = s.k / 2;
  const auto in_ch = static_cast<long>(s.in_ch);
  const bool par = s.output_size() * s.in_ch * s.k >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < in_ch; ++i) {
    double* gxi = gx.data() + static_cast<std::size_t>(i) * len;
    std::fill(gxi, gxi + len, 0.0);
    for (std::size_t o = 0; o < s.out_ch; ++o) {
      const double* gyo = gy.data() + o * len;
      const double* wk = w.data() + (o * s.in_ch + static_cast<std::size_t>(i)) * s.k;
      for (std::size_t j = 0; j < s.k; ++j) {
        // y[t] uses x[t + j - pad]; so x[u] receives gy[u - j + pad] for valid t
        std::size_t lo, hi;
        tap_range(j, pad, len, lo, hi);
        const double wv = wk[j];
        double* dst = gxi + lo + j - pad;
        const double* src = gyo + lo;
#pragma omp simd
        for (std::size_t c = 0; c < hi - lo; ++c) dst[c] += wv * src[c];
      }
    }
  }
}

void conv1d_backward_weight(std::span<const double> gy, std::span<const double> x,
                            std::span<double> gw, const ConvShape& s) {
  check(s, x.size(), gw.size(), gy.size());
  const std::size_t len = s.len, pad = s.k / 2;
  const auto out_ch = static_cast<long>(s.out_ch);
  const bool par = s.output_size() * s.in_ch * s.k >= kParallelMinWork;
  // Interior outputs see every tap; there four taps share one pass over gy
  // with independent accumulators. The few edge outputs go through a checked loop.
  const std::size_t t0 = std::min(pad, len), t1 = len > pad ? std::max(t0, len - pad) : t0;
#pragma omp parallel for schedule(static) if (par)
  for (long o = 0; o < out_ch; ++o) {
    const double* gyo = gy.data() + static_cast<std::size_t>(o) * len;
    for (std::size_t i = 0; i < s.in_ch; ++i) {
      const double* xi = x.data() + i * len;
      double* gwk = gw.data() + (static_cast<std::size_t>(o) * s.in_ch + i) * s.k;
      std::size_t j = t1 > t0 ? 0 : s.k;
      for (; j + 4 <= s.k; j += 4) {
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        const double* src = xi + (t0 + j - pad);
        const double* g = gyo + t0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
        for (std::size_t c = 0; c < t1 - t0; ++c) {
          a0 += g[c] * src[c];
          a1 += g[c] * src[c + 1];
          a2 += g[c] * src[c + 2];
          a3 += g[c] * src[c + 3];
        }
        gwk[j] += a0;
        gwk[j + 1] += a1;
        gwk[j + 2] += a2;
        gwk[j + 3] += a3;
      }
      for (; j < s.k; ++j) {
        double acc = 0.0;
        const double* src = xi + (t0 + j - pad);
        const double* g = gyo + t0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t c = 0; c < t1 - t0; ++c) acc += g[c] * src[c];
        gwk[j] += acc;
      }
      auto edge = [&](std::size_t t) {
        for (std::size_t jj = 0; jj < s.k; ++jj) {
          if (t + jj < pad || t + jj - pad >= len) continue;
          gwk[jj] += gyo[t] * xi[t + jj - pad];
        }
      };
      for (std::size_t t = 0; t < t0; ++t) edge(t);
      for (std::size_t t = t1; t < len; ++t) edge(t);
    }
  }
}

namespace reference {

void conv1d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvShape& s) {
  check(s, x.size(), w.size(), y.size());
  const long pad = static_cast<long>(s.k / 2);
  const long len = static_cast<long>(s.len);
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (long t = 0; t < len; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.in_ch; ++i) {
        for (std::size_t j = 0; j < s.k; ++j) {
          const long u = t + static_cast<long>(j) - pad;
          if (u < 0 || u >= len) continue;
          acc += w[(o * s.in_ch + i) * s.k + j] * x[i * s.len + static_cast<std::size_t>(u)];
        }
      }
      y[o * s.len + static_cast<std::size_t>(t)] = acc;
    }
  }
}

void conv1d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvShape& s) {
  check(s, gx.size(), w.size(), gy.size());
  const long pad = static_cast<long>(s.k / 2);
  const long len = static_cast<long>(s.len);
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (long t = 0; t < len; ++t) {
      const double g = gy[o * s.len + static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < s.in_ch; ++i) {
        for (std::size_t j = 0; j < s.k; ++j) {
          const long u = t + static_cast<long>(j) - pad;
          if (u < 0 || u >= len) continue;
          gx[i * s.len + static_cast<std::size_t>(u)] += w[(o * s.in_ch + i) * s.k + j] * g;
        }
      }
    }
  }
}

void conv1d_backward_weight(std::span<const double> gy, std::span<const double> x,
                            std::span<double> gw, const ConvShape& s) {
  check(s, x.size(), gw.size(), gy.size());
  const long pad = static_cast<long>(s.k / 2);
  const long len = static_cast<long>(s.len);
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    for (long t = 0; t < len; ++t) {
      const double g = gy[o * s.len + static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < s.in_ch; ++i) {
        for (std::size_t j = 0; j < s.k; ++j) {
          const long u = t + static_cast<long>(j) - pad;
          if (u < 0 || u >= len) continue;
          gw[(o * s.in_ch + i) * s.k + j] += g * x[i * s.len + static_cast<std::size_t>(u)];
        }
      }
    }
  }
}

}  // namespace reference

}  // namespace ecgadv::kernels
