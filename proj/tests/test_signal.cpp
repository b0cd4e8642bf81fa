#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "ecgadv/error.hpp"
#include "ecgadv/signal.hpp"
#include "support.hpp"

using namespace ecgadv;

namespace {

// R-peak times (s): local maxima above 2.5 standard deviations, 0.2 s refractory.
std::vector<double> r_peaks(const EcgSegment& s) {
  std::vector<double> t;
  const auto& x = s.samples;
  const auto refractory = static_cast<std::size_t>(0.2 * s.sample_rate_hz);
  std::size_t last = 0;
  bool any = false;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > 2.5 && x[i] >= x[i - 1] && x[i] > x[i + 1]) {
      if (any && i - last < refractory) continue;
      t.push_back(static_cast<double>(i) / s.sample_rate_hz);
      last = i;
      any = true;
    }
  }
  return t;
}

struct RrStats {
  double mean = 0.0, cv = 0.0;
};

RrStats rr_stats(const EcgSegment& s) {
  const auto p = r_peaks(s);
  std::vector<double> rr;
  for (std::size_t i = 1; i < p.size(); ++i) rr.push_back(p[i] - p[i - 1]);
  RrStats out;
  if (rr.size() < 2) return out;
  out.mean = mean(rr);
  out.cv = popstd(rr) / out.mean;
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_CASE("class codes round trip") {
  for (int i = 0; i < kNumClasses; ++i) {
    const auto c = class_from_index(i);
    const auto back = class_from_code(std::string(1, class_code(c)));
    REQUIRE(back.has_value());
    CHECK(*back == c);
  }
  CHECK_FALSE(class_from_code("Q").has_value());
  CHECK_FALSE(class_from_code("").has_value());
}

TEST_CASE("mean and population std") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(mean(x) == doctest::Approx(3.0));
  CHECK(popstd(x) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("standardize") {
  const auto x = testing::randn(500, 3, 4.0);
  auto y = standardize(x);
  CHECK(std::abs(mean(y)) < 1e-12);
  CHECK(std::abs(popstd(y) - 1.0) < 1e-12);

  SUBCASE("constant input has zero variance") {
    const std::vector<double> c(10, 2.5);
    CHECK_THROWS_AS(standardize(c), Error);
    try {
      standardize(c);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroVariance);
    }
  }
}

TEST_CASE("standardize backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto z = testing::randn(40, 100 + seed, 2.0);
    const auto g = testing::randn(40, 200 + seed);
    auto f = [&](const std::vector<double>& v) {
      const auto y = standardize(v);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
      return s;
    };
    const auto y = standardize(z);
    const auto analytic = standardize_backward(y, popstd(z), g);
    const auto numeric = testing::numeric_gradient(f, z);
    CHECK(testing::relative_error(analytic, numeric) < 1e-7);
  }
}

TEST_CASE("synthetic segments") {
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = class_from_index(c);
    const auto a = synth_segment(cls, 9000, 300.0, 42);
    const auto b = synth_segment(cls, 9000, 300.0, 42);
    const auto other = synth_segment(cls, 9000, 300.0, 43);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != other.samples);
    CHECK(a.label == cls);
    CHECK(a.size() == 9000);
    CHECK(a.is_standardized());
  }
}

TEST_CASE("rhythm statistics separate the classes") {
  // peak-spacing oracle, independent of the generator's internals
  double n_cv = 0, a_cv = 0, n_rr = 0, o_rr = 0;
  const int reps = 5;
  for (int s = 0; s < reps; ++s) {
    const auto n = rr_stats(synth_segment(RhythmClass::N, 9000, 300.0, 10 + s));
    const auto a = rr_stats(synth_segment(RhythmClass::A, 9000, 300.0, 10 + s));
    const auto o = rr_stats(synth_segment(RhythmClass::O, 9000, 300.0, 10 + s));
    n_cv += n.cv / reps;
    a_cv += a.cv / reps;
    n_rr += n.mean / reps;
    o_rr += o.mean / reps;
  }
  CHECK(n_cv < 0.05);       // near-regular sinus rhythm
  CHECK(a_cv > 0.15);       // irregularly irregular
  CHECK(n_rr > 0.75);
  CHECK(n_rr < 1.05);
  CHECK(o_rr < 0.55);       // tachycardic
}

TEST_CASE("synthetic dataset and stratified split") {
  const auto d = synth_dataset(8, 600, 300.0, 5);
  REQUIRE(d.size() == 32);
  std::set<std::string> ids;
  for (const auto& s : d.segments) ids.insert(s.id);
  CHECK(ids.size() == 32);
  for (int c = 0; c < kNumClasses; ++c) CHECK(d.of_class(class_from_index(c)).size() == 8);

  const auto [train, test] = split(d, 0.75, 9);
  CHECK(train.size() == 24);
  CHECK(test.size() == 8);
  for (int c = 0; c < kNumClasses; ++c) {
    CHECK(train.of_class(class_from_index(c)).size() == 6);
    CHECK(test.of_class(class_from_index(c)).size() == 2);
  }
  std::set<std::string> seen;
  for (const auto& s : train.segments) seen.insert(s.id);
  for (const auto& s : test.segments) CHECK(seen.insert(s.id).second);
  CHECK(seen == ids);

  const auto [train2, test2] = split(d, 0.75, 9);
  for (std::size_t i = 0; i < train.size(); ++i) CHECK(train.segments[i].id == train2.segments[i].id);
}

TEST_CASE("csv round trip is exact") {
  testing::TempDir dir("signal");
  const auto d = synth_dataset(2, 300, 300.0, 1);
  save_csv(d, dir / "d.csv");
  const auto back = load_csv(dir / "d.csv");
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.segments[i].id == d.segments[i].id);
    CHECK(back.segments[i].label == d.segments[i].label);
    CHECK(back.segments[i].samples == d.segments[i].samples);
  }
  save_csv(back, dir / "e.csv");
  std::ifstream a(dir / "d.csv"), b(dir / "e.csv");
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("csv errors") {
  testing::TempDir dir("signal-err");
  auto code_of = [](const std::filesystem::path& p) {
    try {
      load_csv(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;  // no error
  };
  write_text(dir / "empty.csv", "");
  CHECK(code_of(dir / "empty.csv") == ErrorCode::ParseError);
  write_text(dir / "header.csv", "id,lbl,fs,n\n");
  CHECK(code_of(dir / "header.csv") == ErrorCode::ParseError);
  write_text(dir / "label.csv", "id,label,fs,n\na,Z,300,3,1,2,3\n");
  CHECK(code_of(dir / "label.csv") == ErrorCode::LabelError);
  write_text(dir / "count.csv", "id,label,fs,n\na,N,300,4,1,2,3\n");
  CHECK(code_of(dir / "count.csv") == ErrorCode::ParseError);
  write_text(dir / "rate.csv", "id,label,fs,n\na,N,300,3,1,2,3\nb,A,250,3,1,2,3\n");
  CHECK(code_of(dir / "rate.csv") == ErrorCode::RateMismatch);
  CHECK(code_of(dir / "missing.csv") == ErrorCode::IoError);
}
