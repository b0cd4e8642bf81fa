#include "ecgadv/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "ecgadv/error.hpp"

namespace ecgadv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::LabelError: return "LabelError";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::UnstableFilter: return "UnstableFilter";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ArchMismatch: return "ArchMismatch";
    case ErrorCode::LengthTooShort: return "LengthTooShort";
    case ErrorCode::TargetEqualsSource: return "TargetEqualsSource";
    case ErrorCode::EmptyVictimSet: return "EmptyVictimSet";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

char class_code(RhythmClass c) {
  switch (c) {
    case RhythmClass::N: return 'N';
    case RhythmClass::A: return 'A';
    case RhythmClass::O: return 'O';
    case RhythmClass::Noise: return 'X';
  }
  return '?';
}

std::optional<RhythmClass> class_from_code(std::string_view code) {
  if (code == "N") return RhythmClass::N;
  if (code == "A") return RhythmClass::A;
  if (code == "O") return RhythmClass::O;
  if (code == "X") return RhythmClass::Noise;
  return std::nullopt;
}

std::string class_name(RhythmClass c) { return std::string(1, class_code(c)); }

RhythmClass class_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw Error(ErrorCode::LabelError, "class index out of range: " + std::to_string(index));
  }
  return static_cast<RhythmClass>(index);
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double popstd(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

bool EcgSegment::is_standardized(double tol) const {
  return std::abs(mean(samples)) <= tol && std::abs(popstd(samples) - 1.0) <= tol;
}

double Dataset::sample_rate_hz() const {
  return segments.empty() ? kDefaultSampleRate : segments.front().sample_rate_hz;
}

std::vector<const EcgSegment*> Dataset::of_class(RhythmClass c) const {
  std::vector<const EcgSegment*> out;
  for (const auto& s : segments) {
    if (s.label == c) out.push_back(&s);
  }
  return out;
}

std::vector<double> standardize(std::span<const double> x) {
  if (x.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "standardize needs at least 2 samples");
  }
  const double m = mean(x);
  const double s = popstd(x);
  if (!(s > 0.0)) throw Error(ErrorCode::ZeroVariance, "input has zero variance");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - m) / s;
  return y;
}

// y = (z - mean z) / sigma  =>  dL/dz = (g - mean(g) - y * mean(g .* y)) / sigma
std::vector<double> standardize_backward(std::span<const double> y, double sigma,
                                         std::span<const double> g) {
  if (y.size() != g.size()) {
    throw Error(ErrorCode::ShapeMismatch, "standardize_backward size mismatch");
  }
  const double n = static_cast<double>(y.size());
  double g_mean = 0.0;
  double gy_mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    g_mean += g[i];
    gy_mean += g[i] * y[i];
  }
  g_mean /= n;
  gy_mean /= n;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (g[i] - g_mean - y[i] * gy_mean) / sigma;
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void add_bump(std::vector<double>& x, double fs, double center_s, double sigma_s, double amp) {
  const double c = center_s * fs;
  const double sd = sigma_s * fs;
  const auto lo = static_cast<long>(std::floor(c - 5.0 * sd));
  const auto hi = static_cast<long>(std::ceil(c + 5.0 * sd));
  const long n = static_cast<long>(x.size());
  for (long i = std::max(0L, lo); i <= std::min(n - 1, hi); ++i) {
    const double u = (static_cast<double>(i) - c) / sd;
    x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * u * u);
  }
}

struct BeatShape {
  bool p_wave = true;
  double qrs_scale = 1.0;
};

void add_beat(std::vector<double>& x, double fs, double r_time, double rr, const BeatShape& shape) {
  if (shape.p_wave) add_bump(x, fs, r_time - 0.16, 0.02, 0.15);
  const double w = shape.qrs_scale;
  add_bump(x, fs, r_time - 0.025 * w, 0.008 * w, -0.1);
  add_bump(x, fs, r_time, 0.010 * w, 1.0);
  add_bump(x, fs, r_time + 0.025 * w, 0.008 * w, -0.2);
  add_bump(x, fs, r_time + std::min(0.25, 0.45 * rr), 0.04, 0.3);
}

// Beats are laid from one second before the segment to one second after so the
// edges carry partial beats like a cropped recording.
template <class RrFn>
void add_rhythm(std::vector<double>& x, double fs, std::mt19937_64& rng, RrFn next_rr,
                const BeatShape& shape) {
  const double duration = static_cast<double>(x.size()) / fs;
  std::uniform_real_distribution<double> phase(0.0, 1.0);
  double t = -1.0 + phase(rng);
  while (t < duration + 1.0) {
    const double rr = next_rr();
    add_beat(x, fs, t, rr, shape);
    t += rr;
  }
}

}  // namespace

EcgSegment synth_segment(RhythmClass cls, std::size_t length, double fs, std::uint64_t seed) {
  if (!(fs > 0.0) || static_cast<double>(length) < fs || length < 2) {
    throw Error(ErrorCode::InvalidArgument, "synth_segment needs at least one second of samples");
  }
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(class_index(cls))));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> x(length, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;

  // shared slow baseline
  {
    const double f = uniform(0.1, 0.3);
    const double amp = uniform(0.0, 0.1);
    const double ph = uniform(0.0, two_pi);
    for (std::size_t i = 0; i < length; ++i) {
      x[i] += amp * std::sin(two_pi * f * static_cast<double>(i) / fs + ph);
    }
  }

  switch (cls) {
    case RhythmClass::N: {
      const double base = uniform(0.8, 1.0);
      add_rhythm(x, fs, rng, [&] { return base * (1.0 + uniform(-0.02, 0.02)); }, BeatShape{});
      break;
    }
    case RhythmClass::A: {
      add_rhythm(x, fs, rng, [&] { return uniform(0.4, 1.2); }, BeatShape{.p_wave = false});
      const double f = uniform(5.0, 8.0);
      const double amp = uniform(0.05, 0.1);
      const double ph = uniform(0.0, two_pi);
      for (std::size_t i = 0; i < length; ++i) {
        x[i] += amp * std::sin(two_pi * f * static_cast<double>(i) / fs + ph);
      }
      break;
    }
    case RhythmClass::O: {
      const double base = uniform(0.35, 0.5);
      add_rhythm(x, fs, rng, [&] { return base * (1.0 + uniform(-0.02, 0.02)); },
                 BeatShape{.p_wave = true, .qrs_scale = 2.0});
      break;
    }
    case RhythmClass::Noise: {
      // white noise through a ~15 Hz moving average, then scaled
      const std::size_t width = std::max<std::size_t>(1, static_cast<std::size_t>(fs / 15.0));
      std::vector<double> white(length + width);
      for (auto& v : white) v = gauss(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < width; ++i) acc += white[i];
      const double scale = 0.5 * std::sqrt(static_cast<double>(width)) / static_cast<double>(width);
      for (std::size_t i = 0; i < length; ++i) {
        x[i] += acc * scale;
        acc += white[i + width] - white[i];
      }
      const int artifacts = 3 + static_cast<int>(uniform(0.0, 6.0));
      const double duration = static_cast<double>(length) / fs;
      for (int k = 0; k < artifacts; ++k) {
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        add_bump(x, fs, uniform(0.0, duration), uniform(0.02, 0.2), sign * uniform(2.0, 5.0));
      }
      break;
    }
  }

  for (auto& v : x) v += 0.02 * gauss(rng);

  EcgSegment seg;
  seg.samples = standardize(x);
  seg.sample_rate_hz = fs;
  seg.label = cls;
  seg.id = "syn-" + class_name(cls) + "-" + std::to_string(seed);
  return seg;
}

Dataset synth_dataset(std::size_t per_class, std::size_t length, double fs, std::uint64_t seed) {
  if (per_class < 1) throw Error(ErrorCode::InvalidArgument, "per_class must be >= 1");
  Dataset ds;
  ds.provenance = "synthetic seed=" + std::to_string(seed);
  ds.segments.reserve(per_class * kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(c) * 1000003ULL + i);
      auto seg = synth_segment(class_from_index(c), length, fs, s);
      seg.id = "syn-" + class_name(seg.label) + "-" + std::to_string(i);
      ds.segments.push_back(std::move(seg));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(mix_seed(seed, 0x5157));
  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  for (std::size_t i = 0; i < dataset.segments.size(); ++i) {
    by_class[static_cast<std::size_t>(class_index(dataset.segments[i].label))].push_back(i);
  }
  for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);

  // largest-remainder allocation keeps the total at round(f * n) while staying stratified
  const auto total = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(dataset.segments.size())));
  std::vector<std::size_t> take(kNumClasses);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double want = train_fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(want));
    assigned += take[c];
    remainders.emplace_back(-(want - std::floor(want)), c);
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const auto c = remainders[k].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  Dataset train, test;
  train.provenance = dataset.provenance + " [train]";
  test.provenance = dataset.provenance + " [test]";
  std::vector<bool> in_train(dataset.segments.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (std::size_t k = 0; k < take[c]; ++k) in_train[by_class[c][k]] = true;
  }
  for (std::size_t i = 0; i < dataset.segments.size(); ++i) {
    (in_train[i] ? train : test).segments.push_back(dataset.segments[i]);
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw Error(ErrorCode::ParseError, path.string() + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,label,fs,n") {
    throw Error(ErrorCode::ParseError, path.string() + ": expected header 'id,label,fs,n'");
  }

  Dataset ds;
  ds.provenance = "file " + path.string();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() < 4) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": too few fields");
    }
    EcgSegment seg;
    seg.id = std::string(fields[0]);
    const auto label = class_from_code(fields[1]);
    if (!label) {
      throw Error(ErrorCode::LabelError, "line " + std::to_string(line_no) + ": unknown label '" +
                                             std::string(fields[1]) + "'");
    }
    seg.label = *label;
    seg.sample_rate_hz = parse_double(fields[2], line_no);
    const double n = parse_double(fields[3], line_no);
    if (!(n >= 2.0) || n != std::floor(n) || fields.size() - 4 != static_cast<std::size_t>(n)) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": sample count does not match n");
    }
    seg.samples.reserve(fields.size() - 4);
    for (std::size_t i = 4; i < fields.size(); ++i) {
      const double v = parse_double(fields[i], line_no);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": non-finite sample");
      }
      seg.samples.push_back(v);
    }
    if (!ds.segments.empty() && seg.sample_rate_hz != ds.segments.front().sample_rate_hz) {
      throw Error(ErrorCode::RateMismatch, "line " + std::to_string(line_no) +
                                               ": sample rate differs from first segment");
    }
    ds.segments.push_back(std::move(seg));
  }
  if (ds.segments.empty()) throw Error(ErrorCode::ParseError, path.string() + ": no segments");
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "id,label,fs,n\n";
  char buf[64];
  auto put = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
  };
  for (const auto& seg : dataset.segments) {
    out << seg.id << ',' << class_code(seg.label) << ',';
    put(seg.sample_rate_hz);
    out << ',' << seg.samples.size();
    for (double v : seg.samples) {
      out << ',';
      put(v);
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace ecgadv
