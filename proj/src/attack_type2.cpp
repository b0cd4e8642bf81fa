#include "ecgadv/attack_type2.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ecgadv/detail/io.hpp"
#include "ecgadv/error.hpp"

namespace ecgadv::attack {

std::vector<double> apply_shift(std::span<const double> v, std::size_t offset) {
  const std::size_t n = v.size();
  if (n == 0) return {};
  if (offset >= n) throw Error(ErrorCode::InvalidArgument, "shift offset must be < length");
  std::vector<double> out(n);
  std::copy(v.begin(), v.end() - static_cast<long>(offset), out.begin() + static_cast<long>(offset));
  std::copy(v.end() - static_cast<long>(offset), v.end(), out.begin());
  return out;
}

// ---------------------------------------------------------------------------
// WindowProjector

struct WindowProjector::Basis {
  Eigen::MatrixXd q;  // width x rank, orthonormal columns spanning the constraints
};

WindowProjector::WindowProjector(std::size_t n, double fs, const dsp::FrequencyMask& mask,
                                 std::size_t offset, std::size_t width)
    : n_(n), offset_(offset), width_(width), fs_(fs), mask_(mask) {
  if (n < 2 || width < 1 || offset + width > n) {
    throw Error(ErrorCode::InvalidArgument, "window [offset, offset + w_d) must lie inside the segment");
  }
  mask_.validate(fs);
  if (width == n) return;

  // One cosine row per masked bin k <= n/2, plus a sine row unless k is 0 or n/2.
  const auto masked = dsp::masked_bins(mask_, n, fs);
  std::vector<std::pair<std::size_t, bool>> rows;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    if (!masked[k]) continue;
    rows.emplace_back(k, false);
    if (k != 0 && 2 * k != n) rows.emplace_back(k, true);
  }
  basis_ = std::make_unique<Basis>();
  if (rows.empty()) return;

  Eigen::MatrixXd at(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
  const double two_pi_over_n = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [k, is_sin] = rows[r];
    for (std::size_t i = 0; i < width; ++i) {
      // reduce k * t mod n before scaling to keep the phase exact
      const std::size_t phase = (k * (offset + i)) % n;
      const double ang = two_pi_over_n * static_cast<double>(phase);
      at(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = is_sin ? std::sin(ang) : std::cos(ang);
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(at);
  qr.setThreshold(1e-12);
  const auto rank = qr.rank();
  Eigen::MatrixXd thin = Eigen::MatrixXd::Identity(at.rows(), rank);
  basis_->q = qr.householderQ() * thin;
}

WindowProjector::~WindowProjector() = default;
WindowProjector::WindowProjector(WindowProjector&&) noexcept = default;
WindowProjector& WindowProjector::operator=(WindowProjector&&) noexcept = default;

std::vector<double> WindowProjector::apply(std::span<const double> v) const {
  if (v.size() != n_) throw Error(ErrorCode::ShapeMismatch, "projector length mismatch");
  if (width_ == n_) return dsp::rect_filter(v, mask_, fs_);
  std::vector<double> out(n_, 0.0);
  Eigen::Map<Eigen::VectorXd> w(out.data() + offset_, static_cast<Eigen::Index>(width_));
  w = Eigen::Map<const Eigen::VectorXd>(v.data() + offset_, static_cast<Eigen::Index>(width_));
  if (basis_->q.cols() > 0) {
    const Eigen::VectorXd coef = basis_->q.transpose() * w;
    w -= basis_->q * coef;
  }
  return out;
}

// ---------------------------------------------------------------------------
// generation

void Type2Config::validate(std::size_t n) const {
  metric.validate();
  const std::size_t w = window(n);
  if (w < 1 || w > n || window_offset + w > n) {
    throw Error(ErrorCode::InvalidArgument, "window must satisfy 1 <= w_d and offset + w_d <= n");
  }
  if (!(lower_bound(n) > 0.0 && lower_bound(n) < upper_bound(n))) {
    throw Error(ErrorCode::InvalidArgument, "distance bounds must satisfy 0 < eps1 < eps2");
  }
  if (shifts_per_step < 1 || max_iters < 1 || !(lr > 0.0) || !(c > 0.0) || !(lambda >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "type2 config needs shifts_per_step >= 1, max_iters >= 1, lr > 0, c > 0, lambda >= 0");
  }
}

PerturbationArtifact attack_type2(const model::ModelParams& params, const EcgSegment& x,
                                  const Type2Config& config) {
  const std::size_t n = x.samples.size();
  config.validate(n);
  const RhythmClass source = model::classify(params, x.samples).argmax;
  if (source == config.target) {
    throw Error(ErrorCode::TargetEqualsSource,
                "segment '" + x.id + "' is already classified as target " + class_name(config.target));
  }
  const WindowProjector proj(n, x.sample_rate_hz, config.mask, config.window_offset, config.window(n));
  const double eps1 = config.lower_bound(n);
  const double eps2 = config.upper_bound(n);
  const std::size_t shifts = config.shifts_per_step;
  const double inv_s = 1.0 / static_cast<double>(shifts);

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> offset_dist(0, n - 1);
  std::vector<double> raw(n, 0.0);
  Adam adam(n, config.lr, config.adam);

  PerturbationArtifact art;
  art.training_source_id = x.id;
  art.source = source;
  art.target = config.target;
  art.fs = x.sample_rate_hz;
  art.config = config;
  art.config.eps1 = eps1;
  art.config.eps2 = eps2;

  std::vector<std::size_t> offsets(shifts);
  std::vector<std::vector<double>> shifted(shifts);
  std::vector<metrics::MetricValue> dists(shifts);
  std::vector<double> z(n), g_q(n);
  std::size_t streak = 0;

  for (std::size_t it = 0; it < config.max_iters; ++it) {
    const auto q = proj.apply(raw);
    for (auto& o : offsets) o = offset_dist(rng);

    double d_mean = 0.0;
    for (std::size_t s = 0; s < shifts; ++s) {
      shifted[s] = apply_shift(q, offsets[s]);
      for (std::size_t i = 0; i < n; ++i) z[i] = x.samples[i] + shifted[s][i];
      dists[s] = metrics::distance(config.metric, x.samples, z);
      d_mean += dists[s].value * inv_s;
    }
    double band_sign = 0.0;
    double penalty = 0.0;
    if (d_mean < eps1) {
      band_sign = -1.0;
      penalty = eps1 - d_mean;
    } else if (d_mean > eps2) {
      band_sign = 1.0;
      penalty = d_mean - eps2;
    }
    const double d_weight = (1.0 + config.lambda * band_sign) * inv_s;

    std::fill(g_q.begin(), g_q.end(), 0.0);
    double nll_mean = 0.0;
    std::size_t hits = 0;
    double min_prob = 1.0;
    for (std::size_t s = 0; s < shifts; ++s) {
      for (std::size_t i = 0; i < n; ++i) z[i] = x.samples[i] + shifted[s][i];
      const double sigma = popstd(z);
      const auto xa = standardize(z);
      const auto obj = model::input_gradient(params, xa, model::Objective::CrossEntropy, config.target);
      nll_mean += obj.value * inv_s;
      const double p_t = obj.prediction.probs[static_cast<std::size_t>(class_index(config.target))];
      min_prob = std::min(min_prob, p_t);
      if (obj.prediction.argmax == config.target) ++hits;
      const auto gz = standardize_backward(xa, sigma, obj.gradient);
      const auto& gd = *dists[s].gradient;
      // d/dq of a term evaluated on shift(q, o) is the inverse rotation of its gradient
      const std::size_t o = offsets[s];
      for (std::size_t i = 0; i < n; ++i) {
        const double g = d_weight * gd[i] + config.c * inv_s * gz[i];
        const std::size_t src = i >= o ? i - o : i + n - o;
        g_q[src] += g;
      }
    }

    art.iters_used = it + 1;
    art.mean_distance = d_mean;
    art.final_objective = d_mean + config.c * nll_mean + config.lambda * penalty;
    art.final_sampled_success = static_cast<double>(hits) * inv_s;

    const bool settled = hits == shifts && min_prob >= config.stop_confidence && d_mean >= eps1 &&
                         d_mean <= eps2;
    streak = settled ? streak + 1 : 0;
    if (streak >= config.stop_patience) break;

    const auto g_raw = proj.apply(g_q);
    adam.step(raw, g_raw);
  }

  art.delta = proj.apply(raw);
  return art;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

constexpr std::string_view kArtifactMagic = "ecgadv-perturbation v1";

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += detail::format_double(v[i]);
  }
  return s;
}

}  // namespace

void save_artifact(const PerturbationArtifact& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto& c = a.config;
  const auto f = detail::format_double;
  out << kArtifactMagic << '\n'
      << "source_id " << a.training_source_id << '\n'
      << "source " << class_code(a.source) << '\n'
      << "target " << class_code(a.target) << '\n'
      << "fs " << f(a.fs) << '\n'
      << "w_d " << c.w_d << '\n'
      << "window_offset " << c.window_offset << '\n'
      << "shifts_per_step " << c.shifts_per_step << '\n'
      << "eps1 " << f(c.eps1) << '\n'
      << "eps2 " << f(c.eps2) << '\n'
      << "lambda " << f(c.lambda) << '\n'
      << "c " << f(c.c) << '\n'
      << "lr " << f(c.lr) << '\n'
      << "max_iters " << c.max_iters << '\n'
      << "stop_confidence " << f(c.stop_confidence) << '\n'
      << "stop_patience " << c.stop_patience << '\n'
      << "metric " << c.metric.name() << '\n'
      << "metric_k " << f(c.metric.k) << '\n'
      << "metric_gamma " << f(c.metric.gamma) << '\n'
      << "mask_low_cut " << f(c.mask.low_cut_hz) << '\n'
      << "mask_notches " << join_doubles(c.mask.notch_centers_hz) << '\n'
      << "mask_halfwidth " << f(c.mask.notch_halfwidth_hz) << '\n'
      << "seed " << c.seed << '\n'
      << "iters_used " << a.iters_used << '\n'
      << "mean_distance " << f(a.mean_distance) << '\n'
      << "final_objective " << f(a.final_objective) << '\n'
      << "final_sampled_success " << f(a.final_sampled_success) << '\n'
      << "n " << a.delta.size() << '\n'
      << "data\n";
  detail::write_le_doubles(out, a.delta);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

PerturbationArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kArtifactMagic) {
    throw Error(ErrorCode::FormatError, path.string() + ": not a perturbation file");
  }
  PerturbationArtifact a;
  auto& c = a.config;
  std::size_t n = 0;
  bool have_n = false, have_data = false;
  const auto E = ErrorCode::FormatError;
  auto cls = [&](const std::string& v) {
    const auto r = class_from_code(v);
    if (!r) throw Error(ErrorCode::FormatError, "bad class code '" + v + "'");
    return *r;
  };
  while (std::getline(in, line)) {
    if (line == "data") {
      have_data = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(E, "malformed header line '" + line + "'");
    const std::string key = line.substr(0, sp), v = line.substr(sp + 1);
    if (key == "source_id") a.training_source_id = v;
    else if (key == "source") a.source = cls(v);
    else if (key == "target") a.target = cls(v);
    else if (key == "fs") a.fs = detail::parse_double(v, E);
    else if (key == "w_d") c.w_d = detail::parse_uint(v, E);
    else if (key == "window_offset") c.window_offset = detail::parse_uint(v, E);
    else if (key == "shifts_per_step") c.shifts_per_step = detail::parse_uint(v, E);
    else if (key == "eps1") c.eps1 = detail::parse_double(v, E);
    else if (key == "eps2") c.eps2 = detail::parse_double(v, E);
    else if (key == "lambda") c.lambda = detail::parse_double(v, E);
    else if (key == "c") c.c = detail::parse_double(v, E);
    else if (key == "lr") c.lr = detail::parse_double(v, E);
    else if (key == "max_iters") c.max_iters = detail::parse_uint(v, E);
    else if (key == "stop_confidence") c.stop_confidence = detail::parse_double(v, E);
    else if (key == "stop_patience") c.stop_patience = detail::parse_uint(v, E);
    else if (key == "metric") {
      const double k = c.metric.k, g = c.metric.gamma;
      c.metric = metrics::MetricKind::parse(v);
      c.metric.k = k;
      c.metric.gamma = g;
    } else if (key == "metric_k") c.metric.k = detail::parse_double(v, E);
    else if (key == "metric_gamma") c.metric.gamma = detail::parse_double(v, E);
    else if (key == "mask_low_cut") c.mask.low_cut_hz = detail::parse_double(v, E);
    else if (key == "mask_notches") {
      c.mask.notch_centers_hz.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.mask.notch_centers_hz.push_back(detail::parse_double(item, E));
    } else if (key == "mask_halfwidth") c.mask.notch_halfwidth_hz = detail::parse_double(v, E);
    else if (key == "seed") c.seed = detail::parse_uint(v, E);
    else if (key == "iters_used") a.iters_used = detail::parse_uint(v, E);
    else if (key == "mean_distance") a.mean_distance = detail::parse_double(v, E);
    else if (key == "final_objective") a.final_objective = detail::parse_double(v, E);
    else if (key == "final_sampled_success") a.final_sampled_success = detail::parse_double(v, E);
    else if (key == "n") {
      n = detail::parse_uint(v, E);
      have_n = true;
    } else {
      throw Error(E, "unknown header key '" + key + "'");
    }
  }
  if (!have_data || !have_n || n < 2) throw Error(E, "truncated perturbation header");
  c.target = a.target;
  a.delta = detail::read_le_doubles(in, n);
  return a;
}

// ---------------------------------------------------------------------------
// evaluation

std::string filter_name(FilterChoice f) { return f == FilterChoice::Rect ? "rect" : "iir"; }

std::size_t RobustnessReport::total_successes() const {
  std::size_t s = 0;
  for (auto v : successes) s += v;
  return s;
}

double RobustnessReport::rate() const {
  const auto t = total_trials();
  return t ? static_cast<double>(total_successes()) / static_cast<double>(t) : 0.0;
}

namespace {

std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RobustnessReport evaluate_robustness(const model::ModelParams& params,
                                     const PerturbationArtifact& artifact,
                                     std::span<const EcgSegment* const> victims, FilterChoice filter,
                                     std::size_t n_shifts, std::uint64_t seed,
                                     const DeviceFilters& filters) {
  if (victims.empty()) throw Error(ErrorCode::EmptyVictimSet, "no victims to evaluate");
  if (n_shifts < 1) throw Error(ErrorCode::InvalidArgument, "n_shifts must be >= 1");
  const std::size_t n = artifact.delta.size();
  for (const auto* v : victims) {
    if (v->samples.size() != n) throw Error(ErrorCode::ShapeMismatch, "victim length differs from perturbation");
    if (v->label != artifact.source) {
      throw Error(ErrorCode::InvalidArgument, "victim '" + v->id + "' is not from the artifact's source class");
    }
  }
  const std::vector<double> filtered =
      filter == FilterChoice::Rect
          ? dsp::rect_filter(artifact.delta, filters.mask, artifact.fs)
          : dsp::iir_apply(artifact.delta, dsp::design_filter_bank(filters.iir, artifact.fs));

  RobustnessReport rep;
  rep.source = artifact.source;
  rep.target = artifact.target;
  rep.filter = filter;
  rep.n_shifts = n_shifts;
  rep.successes.assign(victims.size(), 0);
  for (const auto* v : victims) rep.victim_ids.push_back(v->id);

  // offsets depend only on (seed, victim index), never on thread scheduling
  std::vector<std::size_t> offsets(victims.size() * n_shifts);
  for (std::size_t v = 0; v < victims.size(); ++v) {
    std::mt19937_64 rng(trial_seed(seed, v, 0));
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    for (std::size_t s = 0; s < n_shifts; ++s) offsets[v * n_shifts + s] = dist(rng);
  }
  std::vector<unsigned char> hit(offsets.size(), 0);
  const auto total = static_cast<long>(offsets.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long idx = 0; idx < total; ++idx) {
    const auto u = static_cast<std::size_t>(idx);
    const auto& x = victims[u / n_shifts]->samples;
    const std::size_t o = offsets[u];
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t dst = i + o < n ? i + o : i + o - n;
      z[dst] = filtered[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] += x[i];
    hit[u] = model::classify(params, z).argmax == artifact.target ? 1 : 0;
  }
  for (std::size_t u = 0; u < hit.size(); ++u) rep.successes[u / n_shifts] += hit[u];
  return rep;
}

std::vector<SweepCell> window_sweep(const model::ModelParams& params,
                                    std::span<const SweepPair> pairs, const Type2Config& base,
                                    const SweepRequest& request) {
  if (request.windows.empty()) throw Error(ErrorCode::InvalidArgument, "window list is empty");
  for (std::size_t i = 1; i < request.windows.size(); ++i) {
    if (request.windows[i] > request.windows[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "window list must be descending");
    }
  }
  struct Job {
    std::size_t pair, window, source;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t w = 0; w < request.windows.size(); ++w) {
      for (std::size_t s = 0; s < pairs[p].sources.size(); ++s) jobs.push_back({p, w, s});
    }
  }
  // per job: successes under rect and iir
  std::vector<std::array<std::size_t, 2>> succ(jobs.size(), {0, 0});
  std::vector<std::array<std::size_t, 2>> trials(jobs.size(), {0, 0});
  std::vector<double> dist(jobs.size(), 0.0), iters(jobs.size(), 0.0);
  std::vector<char> failed(jobs.size(), 0);
  const auto njobs = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < njobs; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const auto& job = jobs[uj];
    const auto& pair = pairs[job.pair];
    Type2Config cfg = base;
    cfg.target = pair.target;
    cfg.w_d = request.windows[job.window];
    cfg.window_offset = 0;
    // the same generation seed across windows keeps the comparison paired
    cfg.seed = trial_seed(request.seed, job.pair, job.source);
    try {
      const auto art = attack_type2(params, *pair.sources[job.source], cfg);
      dist[uj] = art.mean_distance;
      iters[uj] = static_cast<double>(art.iters_used);
      for (int f = 0; f < 2; ++f) {
        const auto rep = evaluate_robustness(params, art, pair.victims,
                                             f == 0 ? FilterChoice::Rect : FilterChoice::Iir,
                                             request.n_shifts,
                                             trial_seed(request.seed + 1, job.pair, job.source),
                                             request.filters);
        succ[uj][static_cast<std::size_t>(f)] = rep.total_successes();
        trials[uj][static_cast<std::size_t>(f)] = rep.total_trials();
      }
    } catch (const std::exception&) {
      // a failed artifact counts as zero successes over the trials it would have run
      failed[uj] = 1;
      succ[uj] = {0, 0};
      const auto t = request.n_shifts * pair.victims.size();
      trials[uj] = {t, t};
    }
  }

  std::vector<SweepCell> cells;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t w = 0; w < request.windows.size(); ++w) {
      for (int f = 0; f < 2; ++f) {
        SweepCell cell;
        cell.source = pairs[p].source;
        cell.target = pairs[p].target;
        cell.w_d = request.windows[w];
        cell.filter = f == 0 ? FilterChoice::Rect : FilterChoice::Iir;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
          if (jobs[j].pair != p || jobs[j].window != w) continue;
          ++cell.artifacts;
          cell.failed += failed[j] ? 1 : 0;
          cell.successes += succ[j][static_cast<std::size_t>(f)];
          cell.trials += trials[j][static_cast<std::size_t>(f)];
          cell.mean_distance += dist[j];
          cell.mean_iters += iters[j];
        }
        if (cell.artifacts) {
          cell.mean_distance /= static_cast<double>(cell.artifacts);
          cell.mean_iters /= static_cast<double>(cell.artifacts);
        }
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

}  // namespace ecgadv::attack
