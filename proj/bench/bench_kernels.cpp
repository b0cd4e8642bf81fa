// Serial reference vs OpenMP convolution kernels on the model's layer shapes.
// Usage: bench_kernels [reps]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "ecgadv/kernels.hpp"

using namespace ecgadv::kernels;

namespace {

double median_seconds(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 7;
  // stem, then the three residual stages at the default architecture
  const std::vector<ConvShape> shapes{{1, 8, 9000, 15}, {8, 8, 1125, 15}, {8, 16, 562, 15}, {16, 32, 281, 15}};

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
  std::printf("%-24s %-16s %12s %12s %8s %10s\n", "shape", "kernel", "serial_us", "openmp_us", "speedup", "max_diff");

  for (const auto& s : shapes) {
    std::vector<double> x(s.input_size()), w(s.weight_size()), gy(s.output_size());
    for (auto* v : {&x, &w, &gy}) {
      for (auto& e : *v) e = nd(rng);
    }
    std::vector<double> y1(s.output_size()), y2(s.output_size());
    std::vector<double> gx1(s.input_size()), gx2(s.input_size());
    std::vector<double> gw1(s.weight_size()), gw2(s.weight_size());

    char label[64];
    std::snprintf(label, sizeof(label), "%zux%zu len=%zu k=%zu", s.in_ch, s.out_ch, s.len, s.k);

    auto report = [&](const char* name, const std::function<void()>& ref, const std::function<void()>& par,
                      const std::vector<double>& a, const std::vector<double>& b) {
      const double ts = median_seconds(ref, reps);
      const double tp = median_seconds(par, reps);
      std::printf("%-24s %-16s %12.1f %12.1f %8.2f %10.2e\n", label, name, ts * 1e6, tp * 1e6, ts / tp,
                  max_abs_diff(a, b));
    };
    report(
        "forward", [&] { reference::conv1d_forward(x, w, y1, s); }, [&] { conv1d_forward(x, w, y2, s); }, y1, y2);
    report(
        "backward_input", [&] { reference::conv1d_backward_input(gy, w, gx1, s); },
        [&] { conv1d_backward_input(gy, w, gx2, s); }, gx1, gx2);
    // accumulating kernels: zero first so both sides hold one pass
    report(
        "backward_weight",
        [&] {
          std::fill(gw1.begin(), gw1.end(), 0.0);
          reference::conv1d_backward_weight(gy, x, gw1, s);
        },
        [&] {
          std::fill(gw2.begin(), gw2.end(), 0.0);
          conv1d_backward_weight(gy, x, gw2, s);
        },
        gw1, gw2);
  }
  return 0;
}
