#include "ecgadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ecgadv/error.hpp"

namespace ecgadv::metrics {

void MetricKind::validate() const {
  if (type == MetricType::SmoothL2 && !(k >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "smooth_l2 weight k must be >= 0");
  }
  if (type == MetricType::SoftDtw && !(gamma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "soft_dtw gamma must be > 0");
  }
}

std::string MetricKind::name() const {
  switch (type) {
    case MetricType::L2: return "l2";
    case MetricType::Smooth: return "smooth";
    case MetricType::SmoothL2: return "smooth_l2";
    case MetricType::SoftDtw: return "soft_dtw";
  }
  return "?";
}

MetricKind MetricKind::parse(const std::string& name) {
  if (name == "l2") return l2();
  if (name == "smooth") return smooth();
  if (name == "smooth_l2") return smooth_l2();
  if (name == "soft_dtw") return soft_dtw();
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}

MetricValue d_l2(std::span<const double> delta, bool with_gradient) {
  if (delta.empty()) throw Error(ErrorCode::LengthTooShort, "d_l2 needs at least one sample");
  MetricValue out;
  for (double d : delta) out.value += d * d;
  if (with_gradient) {
    std::vector<double> g(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] = 2.0 * delta[i];
    out.gradient = std::move(g);
  }
  return out;
}

MetricValue d_smooth(std::span<const double> delta, bool with_gradient) {
  const std::size_t n = delta.size();
  if (n < 3) throw Error(ErrorCode::LengthTooShort, "d_smooth needs at least 3 samples");
  const double m = static_cast<double>(n - 1);
  // the mean of the differences telescopes to the endpoints, so one pass suffices
  const double mu = (delta[n - 1] - delta[0]) / m;
  double ss = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double e = (delta[i] - delta[i - 1]) - mu;
    ss += e * e;
  }
  MetricValue out;
  out.value = ss / m;
  if (with_gradient) {
    // d var / d diff_i = 2 (diff_i - mu) / m; diff_i = delta_i - delta_{i-1}
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const double e = 2.0 * ((delta[i] - delta[i - 1]) - mu) / m;
      g[i] += e;
      g[i - 1] -= e;
    }
    out.gradient = std::move(g);
  }
  return out;
}

MetricValue d_smooth_l2(std::span<const double> delta, double k, bool with_gradient) {
  auto s = d_smooth(delta, with_gradient);
  if (k == 0.0) return s;
  const auto l = d_l2(delta, with_gradient);
  s.value += k * l.value;
  if (with_gradient) {
    for (std::size_t i = 0; i < delta.size(); ++i) (*s.gradient)[i] += k * (*l.gradient)[i];
  }
  return s;
}

double dtw(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::LengthTooShort, "dtw needs non-empty inputs");
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t m = b.size();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      cur[j] = d * d + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

inline double softmin3(double u, double v, double w, double gamma) {
  const double lo = std::min({u, v, w});
  if (lo == std::numeric_limits<double>::infinity()) return lo;
  const double s = std::exp(-(u - lo) / gamma) + std::exp(-(v - lo) / gamma) +
                   std::exp(-(w - lo) / gamma);
  return lo - gamma * std::log(s);
}

}  // namespace

MetricValue soft_dtw(std::span<const double> a, std::span<const double> b, double gamma,
                     bool with_gradient) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::LengthTooShort, "soft_dtw needs non-empty inputs");
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "soft_dtw gamma must be > 0");
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = a.size(), m = b.size();
  auto cost = [&](std::size_t i, std::size_t j) {  // 1-based
    const double d = a[i - 1] - b[j - 1];
    return d * d;
  };

  MetricValue out;
  if (!with_gradient) {
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      cur[0] = inf;
      for (std::size_t j = 1; j <= m; ++j) {
        cur[j] = cost(i, j) + softmin3(prev[j], cur[j - 1], prev[j - 1], gamma);
      }
      std::swap(prev, cur);
    }
    out.value = prev[m];
    return out;
  }

  // R is (n + 2) x (m + 2) so the backward pass can read one step past the end.
  const std::size_t cols = m + 2;
  std::vector<double> r((n + 2) * cols, inf);
  auto R = [&](std::size_t i, std::size_t j) -> double& { return r[i * cols + j]; };
  R(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      R(i, j) = cost(i, j) + softmin3(R(i - 1, j), R(i, j - 1), R(i - 1, j - 1), gamma);
    }
  }
  out.value = R(n, m);

  // Backward recursion over alignment expectations, two rolling rows of E.
  for (std::size_t i = 1; i <= n + 1; ++i) R(i, m + 1) = -inf;
  for (std::size_t j = 1; j <= m + 1; ++j) R(n + 1, j) = -inf;
  R(n + 1, m + 1) = R(n, m);
  std::vector<double> e_next(m + 2, 0.0), e_cur(m + 2, 0.0);
  e_next[m + 1] = 1.0;  // row n + 1
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = n; i >= 1; --i) {
    std::fill(e_cur.begin(), e_cur.end(), 0.0);
    double g = 0.0;
    for (std::size_t j = m; j >= 1; --j) {
      const double rij = R(i, j);
      const double c_down = i < n ? cost(i + 1, j) : 0.0;
      const double c_right = j < m ? cost(i, j + 1) : 0.0;
      const double c_diag = (i < n && j < m) ? cost(i + 1, j + 1) : 0.0;
      const double wa = std::exp((R(i + 1, j) - rij - c_down) / gamma);
      const double wb = std::exp((R(i, j + 1) - rij - c_right) / gamma);
      const double wc = std::exp((R(i + 1, j + 1) - rij - c_diag) / gamma);
      const double eij = e_next[j] * wa + e_cur[j + 1] * wb + e_next[j + 1] * wc;
      e_cur[j] = eij;
      g += eij * 2.0 * (a[i - 1] - b[j - 1]);
    }
    grad[i - 1] = g;
    std::swap(e_cur, e_next);
    e_cur[m + 1] = 0.0;
  }
  out.gradient = std::move(grad);
  return out;
}

MetricValue distance(const MetricKind& kind, std::span<const double> x,
                     std::span<const double> x_adv, bool with_gradient) {
  if (x.size() != x_adv.size()) throw Error(ErrorCode::ShapeMismatch, "distance length mismatch");
  kind.validate();
  if (kind.type == MetricType::SoftDtw) return soft_dtw(x_adv, x, kind.gamma, with_gradient);
  std::vector<double> delta(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) delta[i] = x_adv[i] - x[i];
  switch (kind.type) {
    case MetricType::L2: return d_l2(delta, with_gradient);
    case MetricType::Smooth: return d_smooth(delta, with_gradient);
    case MetricType::SmoothL2: return d_smooth_l2(delta, kind.k, with_gradient);
    case MetricType::SoftDtw: break;
  }
  return {};
}

}  // namespace ecgadv::metrics
