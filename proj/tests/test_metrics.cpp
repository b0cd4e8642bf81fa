#include <doctest.h>

#include <functional>

#include "ecgadv/error.hpp"
#include "ecgadv/metrics.hpp"
#include "support.hpp"

using namespace ecgadv;
using namespace ecgadv::metrics;

namespace {

// Minimum over every monotone warping path, by explicit recursion.
double brute_dtw(const std::vector<double>& a, const std::vector<double>& b, std::size_t i = 0,
                 std::size_t j = 0) {
  const double c = (a[i] - b[j]) * (a[i] - b[j]);
  if (i + 1 == a.size() && j + 1 == b.size()) return c;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < a.size()) best = std::min(best, brute_dtw(a, b, i + 1, j));
  if (j + 1 < b.size()) best = std::min(best, brute_dtw(a, b, i, j + 1));
  if (i + 1 < a.size() && j + 1 < b.size()) best = std::min(best, brute_dtw(a, b, i + 1, j + 1));
  return c + best;
}

std::vector<std::vector<double>> all_sequences(std::size_t max_len, const std::vector<double>& alphabet) {
  std::vector<std::vector<double>> out;
  std::vector<std::vector<double>> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::vector<double>> next;
    for (const auto& s : frontier) {
      for (double v : alphabet) {
        auto t = s;
        t.push_back(v);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

// Two-pass textbook variance of first differences.
double naive_smooth(const std::vector<double>& d) {
  std::vector<double> diff;
  for (std::size_t i = 1; i < d.size(); ++i) diff.push_back(d[i] - d[i - 1]);
  double m = 0.0;
  for (double v : diff) m += v;
  m /= static_cast<double>(diff.size());
  double s = 0.0;
  for (double v : diff) s += (v - m) * (v - m);
  return s / static_cast<double>(diff.size());
}

}  // namespace

TEST_CASE("metric names") {
  for (const auto& n : {"l2", "smooth", "smooth_l2", "soft_dtw"}) CHECK(MetricKind::parse(n).name() == n);
  CHECK_THROWS_AS(MetricKind::parse("linf"), Error);
  MetricKind bad = MetricKind::soft_dtw(0.0);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("l2") {
  const std::vector<double> d{1.0, -2.0, 3.0};
  const auto v = d_l2(d);
  CHECK(v.value == 14.0);
  REQUIRE(v.gradient);
  CHECK(*v.gradient == std::vector<double>{2.0, -4.0, 6.0});
  CHECK_FALSE(d_l2(d, false).gradient.has_value());
}

TEST_CASE("smooth") {
  SUBCASE("alternating sequence") {
    CHECK(d_smooth(std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1, 0}).value == 1.0);
  }
  SUBCASE("affine perturbations are perfectly smooth") {
    std::vector<double> d(100);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.25 * static_cast<double>(i) - 3.0;
    CHECK(d_smooth(d).value == 0.0);
  }
  SUBCASE("translation invariance") {
    const auto d = testing::randn(300, 1);
    auto e = d;
    for (auto& v : e) v += 12.5;
    CHECK(std::abs(d_smooth(d).value - d_smooth(e).value) <= 1e-12);
  }
  SUBCASE("one-pass value agrees with the two-pass definition") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto d = testing::randn(3 + 37 * s, s);
      CHECK(d_smooth(d).value == doctest::Approx(naive_smooth(d)).epsilon(1e-12));
    }
  }
  SUBCASE("too short") {
    try {
      d_smooth(std::vector<double>{1.0, 2.0});
      FAIL("expected LengthTooShort");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::LengthTooShort);
    }
  }
  SUBCASE("smooth_l2 combines both terms") {
    const auto d = testing::randn(50, 2);
    CHECK(d_smooth_l2(d, 0.3).value == doctest::Approx(d_smooth(d).value + 0.3 * d_l2(d).value));
  }
}

TEST_CASE("metric gradients match finite differences") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = testing::randn(25, 40 + s);
    const std::vector<std::pair<const char*, std::function<MetricValue(const std::vector<double>&, bool)>>> fns{
        {"l2", [](const std::vector<double>& v, bool g) { return d_l2(v, g); }},
        {"smooth", [](const std::vector<double>& v, bool g) { return d_smooth(v, g); }},
        {"smooth_l2", [](const std::vector<double>& v, bool g) { return d_smooth_l2(v, 0.01, g); }},
    };
    for (const auto& [name, fn] : fns) {
      CAPTURE(name);
      const auto analytic = *fn(d, true).gradient;
      const auto numeric = testing::numeric_gradient([&](const std::vector<double>& v) { return fn(v, false).value; }, d);
      CHECK(testing::relative_error(analytic, numeric) < 1e-6);
    }
    const auto b = testing::randn(19, 90 + s);
    const auto analytic = *soft_dtw(d, b, 0.7).gradient;
    const auto numeric =
        testing::numeric_gradient([&](const std::vector<double>& v) { return soft_dtw(v, b, 0.7, false).value; }, d);
    CHECK(testing::relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("dtw equals brute-force path enumeration") {
  const auto seqs = all_sequences(4, {0.0, 1.0, 2.5});
  for (const auto& a : seqs) {
    for (const auto& b : seqs) {
      REQUIRE(dtw(a, b) == doctest::Approx(brute_dtw(a, b)).epsilon(1e-12));
    }
  }
  CHECK(dtw(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
}

TEST_CASE("soft-dtw lower-bounds dtw and converges to it") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto a = testing::randn(10, 300 + s), b = testing::randn(10, 600 + s);
    const double hard = dtw(a, b);
    CHECK(soft_dtw(a, b, 1.0, false).value <= hard);
    CHECK(std::abs(soft_dtw(a, b, 1e-4, false).value - hard) < 1e-2);
  }
}

TEST_CASE("distance dispatch") {
  const auto x = testing::randn(40, 1);
  auto xa = x;
  for (std::size_t i = 0; i < xa.size(); ++i) xa[i] += 0.1 * static_cast<double>(i % 3);
  std::vector<double> delta(40);
  for (std::size_t i = 0; i < 40; ++i) delta[i] = xa[i] - x[i];
  CHECK(distance(MetricKind::l2(), x, xa).value == doctest::Approx(d_l2(delta).value));
  CHECK(distance(MetricKind::smooth(), x, xa).value == doctest::Approx(d_smooth(delta).value));
  CHECK(distance(MetricKind::soft_dtw(0.5), x, xa).value == doctest::Approx(soft_dtw(xa, x, 0.5).value));
  // gradients are with respect to x_adv
  const auto g = *distance(MetricKind::smooth_l2(), x, xa).gradient;
  const auto numeric = testing::numeric_gradient(
      [&](const std::vector<double>& v) { return distance(MetricKind::smooth_l2(), x, v, false).value; }, xa);
  CHECK(testing::relative_error(g, numeric) < 1e-6);
}
