#include "ecgadv/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ecgadv/error.hpp"
#include "ecgadv/detail/io.hpp"
#include "ecgadv/kernels.hpp"

namespace ecgadv::model {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct BlockLayout {
  std::size_t c_in = 0, c_out = 0, len = 0;
  std::size_t w1 = 0, s1 = 0, h1 = 0, w2 = 0, s2 = 0, h2 = 0, proj = kNone;
};

struct Layout {
  std::size_t stem_w = 0, stem_b = 0;
  std::size_t stem_len = 0, pooled_len = 0;
  std::vector<BlockLayout> blocks;
  std::size_t head_in = 0;
  std::size_t head_len = 0;  // length entering global pooling
  std::size_t dense_w = 0, dense_b = 0;
  std::size_t total = 0;
};

Layout make_layout(const Architecture& a) {
  Layout l;
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  l.stem_w = take(a.stem_channels * a.kernel);
  l.stem_b = take(a.stem_channels);
  l.stem_len = a.input_len;
  l.pooled_len = a.input_len / a.stem_pool;
  std::size_t c = a.stem_channels;
  std::size_t len = l.pooled_len;
  for (std::size_t out : a.block_channels) {
    BlockLayout b;
    b.c_in = c;
    b.c_out = out;
    b.len = len;
    b.w1 = take(out * c * a.kernel);
    b.s1 = take(out);
    b.h1 = take(out);
    b.w2 = take(out * out * a.kernel);
    b.s2 = take(out);
    b.h2 = take(out);
    if (c != out) b.proj = take(out * c);
    l.blocks.push_back(b);
    c = out;
    len /= 2;
  }
  l.head_in = c;
  l.head_len = len;
  l.dense_w = take(kNumClasses * c);
  l.dense_b = take(kNumClasses);
  l.total = off;
  return l;
}

struct BlockCache {
  std::vector<double> in, u1, v1, r1, u2, z, out;
};

struct Cache {
  std::vector<double> x;
  std::vector<double> stem_pre;  // conv + bias, before ReLU
  std::vector<double> pooled;    // stem output
  std::vector<BlockCache> blocks;
  std::vector<double> feat;
  Logits logits{};
};

void avgpool_forward(std::span<const double> in, std::size_t channels, std::size_t len,
                     std::size_t factor, std::span<double> out) {
  const std::size_t out_len = len / factor;
  const double inv = 1.0 / static_cast<double>(factor);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in.data() + c * len;
    double* dst = out.data() + c * out_len;
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < factor; ++j) acc += src[t * factor + j];
      dst[t] = acc * inv;
    }
  }
}

void avgpool_backward(std::span<const double> g_out, std::size_t channels, std::size_t len,
                      std::size_t factor, std::span<double> g_in) {
  const std::size_t out_len = len / factor;
  const double inv = 1.0 / static_cast<double>(factor);
  std::fill(g_in.begin(), g_in.end(), 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = g_out.data() + c * out_len;
    double* dst = g_in.data() + c * len;
    for (std::size_t t = 0; t < out_len; ++t) {
      for (std::size_t j = 0; j < factor; ++j) dst[t * factor + j] = src[t] * inv;
    }
  }
}

void check_input(const ModelParams& p, std::span<const double> x) {
  if (x.size() != p.arch.input_len) {
    throw Error(ErrorCode::ShapeMismatch, "input length " + std::to_string(x.size()) +
                                              " does not match model input " +
                                              std::to_string(p.arch.input_len));
  }
  if (p.values.size() != p.arch.parameter_count()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter vector does not match architecture");
  }
}

void run_forward(const ModelParams& p, const Layout& l, std::span<const double> x, Cache& cache) {
  const auto& a = p.arch;
  const double* w = p.values.data();
  std::span<const double> values(p.values);
  cache.x.assign(x.begin(), x.end());

  const std::size_t c0 = a.stem_channels;
  cache.stem_pre.resize(c0 * l.stem_len);
  kernels::conv1d_forward(x, values.subspan(l.stem_w, c0 * a.kernel), cache.stem_pre,
                          {1, c0, l.stem_len, a.kernel});
  // bias, then ReLU fused into the average pool
  cache.pooled.resize(c0 * l.pooled_len);
  const double inv_pool = 1.0 / static_cast<double>(a.stem_pool);
  for (std::size_t c = 0; c < c0; ++c) {
    const double b = w[l.stem_b + c];
    double* pre = cache.stem_pre.data() + c * l.stem_len;
    for (std::size_t t = 0; t < l.stem_len; ++t) pre[t] += b;
    for (std::size_t t = 0; t < l.pooled_len; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < a.stem_pool; ++j) {
        const double v = pre[t * a.stem_pool + j];
        acc += v > 0.0 ? v : 0.0;
      }
      cache.pooled[c * l.pooled_len + t] = acc * inv_pool;
    }
  }

  cache.blocks.resize(l.blocks.size());
  std::span<const double> cur = cache.pooled;
  for (std::size_t bi = 0; bi < l.blocks.size(); ++bi) {
    const auto& b = l.blocks[bi];
    auto& bc = cache.blocks[bi];
    const std::size_t n_out = b.c_out * b.len;
    bc.in.assign(cur.begin(), cur.end());
    bc.u1.resize(n_out);
    kernels::conv1d_forward(bc.in, values.subspan(b.w1, b.c_out * b.c_in * a.kernel), bc.u1,
                            {b.c_in, b.c_out, b.len, a.kernel});
    bc.v1.resize(n_out);
    bc.r1.resize(n_out);
    for (std::size_t c = 0; c < b.c_out; ++c) {
      const double s = w[b.s1 + c], h = w[b.h1 + c];
      for (std::size_t t = 0; t < b.len; ++t) {
        const std::size_t i = c * b.len + t;
        bc.v1[i] = s * bc.u1[i] + h;
        bc.r1[i] = bc.v1[i] > 0.0 ? bc.v1[i] : 0.0;
      }
    }
    bc.u2.resize(n_out);
    kernels::conv1d_forward(bc.r1, values.subspan(b.w2, b.c_out * b.c_out * a.kernel), bc.u2,
                            {b.c_out, b.c_out, b.len, a.kernel});
    bc.z.resize(n_out);
    for (std::size_t c = 0; c < b.c_out; ++c) {
      const double s = w[b.s2 + c], h = w[b.h2 + c];
      for (std::size_t t = 0; t < b.len; ++t) {
        const std::size_t i = c * b.len + t;
        double skip;
        if (b.proj == kNone) {
          skip = bc.in[i];
        } else {
          skip = 0.0;
          for (std::size_t ci = 0; ci < b.c_in; ++ci) {
            skip += w[b.proj + c * b.c_in + ci] * bc.in[ci * b.len + t];
          }
        }
        bc.z[i] = s * bc.u2[i] + h + skip;
      }
    }
    std::vector<double> r(n_out);
    for (std::size_t i = 0; i < n_out; ++i) r[i] = bc.z[i] > 0.0 ? bc.z[i] : 0.0;
    bc.out.resize(b.c_out * (b.len / 2));
    avgpool_forward(r, b.c_out, b.len, 2, bc.out);
    cur = bc.out;
  }

  cache.feat.assign(l.head_in, 0.0);
  for (std::size_t c = 0; c < l.head_in; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < l.head_len; ++t) acc += cur[c * l.head_len + t];
    cache.feat[c] = acc / static_cast<double>(l.head_len);
  }
  for (int k = 0; k < kNumClasses; ++k) {
    double acc = w[l.dense_b + static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < l.head_in; ++c) {
      acc += w[l.dense_w + static_cast<std::size_t>(k) * l.head_in + c] * cache.feat[c];
    }
    cache.logits[static_cast<std::size_t>(k)] = acc;
  }
}

// Backpropagates dlogits. Parameter gradients are accumulated into `grad` when
// it is non-empty; the input gradient is written to `dx` when non-empty.
void run_backward(const ModelParams& p, const Layout& l, const Cache& cache, const Logits& dlogits,
                  std::span<double> grad, std::span<double> dx) {
  const auto& a = p.arch;
  const double* w = p.values.data();
  std::span<const double> values(p.values);
  const bool want_params = !grad.empty();

  std::vector<double> dfeat(l.head_in, 0.0);
  for (int k = 0; k < kNumClasses; ++k) {
    const double g = dlogits[static_cast<std::size_t>(k)];
    if (want_params) grad[l.dense_b + static_cast<std::size_t>(k)] += g;
    for (std::size_t c = 0; c < l.head_in; ++c) {
      const std::size_t wi = l.dense_w + static_cast<std::size_t>(k) * l.head_in + c;
      if (want_params) grad[wi] += g * cache.feat[c];
      dfeat[c] += w[wi] * g;
    }
  }
  std::vector<double> dcur(l.head_in * l.head_len);
  for (std::size_t c = 0; c < l.head_in; ++c) {
    const double g = dfeat[c] / static_cast<double>(l.head_len);
    std::fill_n(dcur.begin() + static_cast<long>(c * l.head_len), l.head_len, g);
  }

  for (std::size_t bi = l.blocks.size(); bi-- > 0;) {
    const auto& b = l.blocks[bi];
    const auto& bc = cache.blocks[bi];
    const std::size_t n_out = b.c_out * b.len;
    std::vector<double> dz(n_out);
    avgpool_backward(dcur, b.c_out, b.len, 2, dz);
    for (std::size_t i = 0; i < n_out; ++i) {
      if (!(bc.z[i] > 0.0)) dz[i] = 0.0;
    }

    std::vector<double> din(b.c_in * b.len, 0.0);
    // skip path
    if (b.proj == kNone) {
      din = dz;
    } else {
      for (std::size_t c = 0; c < b.c_out; ++c) {
        for (std::size_t ci = 0; ci < b.c_in; ++ci) {
          const double pw = w[b.proj + c * b.c_in + ci];
          double acc = 0.0;
          for (std::size_t t = 0; t < b.len; ++t) {
            const double g = dz[c * b.len + t];
            din[ci * b.len + t] += pw * g;
            acc += g * bc.in[ci * b.len + t];
          }
          if (want_params) grad[b.proj + c * b.c_in + ci] += acc;
        }
      }
    }

    // second conv + affine
    std::vector<double> du2(n_out);
    for (std::size_t c = 0; c < b.c_out; ++c) {
      const double s = w[b.s2 + c];
      double ds = 0.0, dh = 0.0;
      for (std::size_t t = 0; t < b.len; ++t) {
        const std::size_t i = c * b.len + t;
        ds += dz[i] * bc.u2[i];
        dh += dz[i];
        du2[i] = s * dz[i];
      }
      if (want_params) {
        grad[b.s2 + c] += ds;
        grad[b.h2 + c] += dh;
      }
    }
    const kernels::ConvShape s2{b.c_out, b.c_out, b.len, a.kernel};
    if (want_params) {
      kernels::conv1d_backward_weight(du2, bc.r1, grad.subspan(b.w2, s2.weight_size()), s2);
    }
    std::vector<double> dv1(n_out);
    kernels::conv1d_backward_input(du2, values.subspan(b.w2, s2.weight_size()), dv1, s2);

    // first conv + affine
    std::vector<double> du1(n_out);
    for (std::size_t c = 0; c < b.c_out; ++c) {
      const double s = w[b.s1 + c];
      double ds = 0.0, dh = 0.0;
      for (std::size_t t = 0; t < b.len; ++t) {
        const std::size_t i = c * b.len + t;
        const double g = bc.v1[i] > 0.0 ? dv1[i] : 0.0;
        ds += g * bc.u1[i];
        dh += g;
        du1[i] = s * g;
      }
      if (want_params) {
        grad[b.s1 + c] += ds;
        grad[b.h1 + c] += dh;
      }
    }
    const kernels::ConvShape s1{b.c_in, b.c_out, b.len, a.kernel};
    if (want_params) {
      kernels::conv1d_backward_weight(du1, bc.in, grad.subspan(b.w1, s1.weight_size()), s1);
    }
    std::vector<double> dconv(b.c_in * b.len);
    kernels::conv1d_backward_input(du1, values.subspan(b.w1, s1.weight_size()), dconv, s1);
    for (std::size_t i = 0; i < din.size(); ++i) din[i] += dconv[i];
    dcur = std::move(din);
  }

  const std::size_t c0 = a.stem_channels;
  // the largest buffer of the pass; reused to keep allocation out of attack loops
  thread_local std::vector<double> dpre;
  dpre.resize(c0 * l.stem_len);
  avgpool_backward(dcur, c0, l.stem_len, a.stem_pool, dpre);
  for (std::size_t c = 0; c < c0; ++c) {
    double db = 0.0;
    for (std::size_t t = 0; t < l.stem_len; ++t) {
      double& g = dpre[c * l.stem_len + t];
      if (!(cache.stem_pre[c * l.stem_len + t] > 0.0)) g = 0.0;
      db += g;
    }
    if (want_params) grad[l.stem_b + c] += db;
  }
  const kernels::ConvShape ss{1, c0, l.stem_len, a.kernel};
  if (want_params) {
    kernels::conv1d_backward_weight(dpre, cache.x, grad.subspan(l.stem_w, ss.weight_size()), ss);
  }
  if (!dx.empty()) {
    kernels::conv1d_backward_input(dpre, values.subspan(l.stem_w, ss.weight_size()), dx, ss);
  }
}

Prediction make_prediction(const Logits& z) {
  Prediction p;
  p.logits = z;
  p.probs = softmax(z);
  p.argmax = argmax(z);
  return p;
}

}  // namespace

void Architecture::validate() const {
  if (input_len < 2 || stem_channels == 0 || stem_pool == 0 || kernel % 2 == 0 ||
      block_channels.empty()) {
    throw Error(ErrorCode::ArchMismatch, "invalid architecture parameters");
  }
  std::size_t len = input_len / stem_pool;
  for (std::size_t c : block_channels) {
    if (c == 0 || len < 2) throw Error(ErrorCode::ArchMismatch, "architecture too deep for input");
    len /= 2;
  }
}

std::size_t Architecture::parameter_count() const { return make_layout(*this).total; }

Logits softmax(const Logits& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Logits p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

RhythmClass argmax(const Logits& z) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return class_from_index(static_cast<int>(best));
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  const Layout l = make_layout(arch);
  ModelParams p;
  p.arch = arch;
  p.seed = seed;
  p.values.assign(l.total, 0.0);
  std::mt19937_64 rng(seed);
  auto fill_normal = [&](std::size_t at, std::size_t n, double sd) {
    std::normal_distribution<double> d(0.0, sd);
    for (std::size_t i = 0; i < n; ++i) p.values[at + i] = d(rng);
  };
  const double k = static_cast<double>(arch.kernel);
  fill_normal(l.stem_w, arch.stem_channels * arch.kernel, std::sqrt(2.0 / k));
  for (const auto& b : l.blocks) {
    fill_normal(b.w1, b.c_out * b.c_in * arch.kernel,
                std::sqrt(2.0 / (static_cast<double>(b.c_in) * k)));
    fill_normal(b.w2, b.c_out * b.c_out * arch.kernel,
                std::sqrt(2.0 / (static_cast<double>(b.c_out) * k)));
    std::fill_n(p.values.begin() + static_cast<long>(b.s1), b.c_out, 1.0);
    // residual branch starts damped so the skip path dominates early training
    std::fill_n(p.values.begin() + static_cast<long>(b.s2), b.c_out, 0.5);
    if (b.proj != kNone) {
      fill_normal(b.proj, b.c_out * b.c_in, std::sqrt(1.0 / static_cast<double>(b.c_in)));
    }
  }
  fill_normal(l.dense_w, kNumClasses * l.head_in, std::sqrt(1.0 / static_cast<double>(l.head_in)));
  return p;
}

Prediction forward(const ModelParams& params, std::span<const double> x) {
  check_input(params, x);
  const Layout l = make_layout(params.arch);
  thread_local Cache cache;
  run_forward(params, l, x, cache);
  return make_prediction(cache.logits);
}

Prediction classify(const ModelParams& params, std::span<const double> x) {
  const auto xs = standardize(x);
  return forward(params, xs);
}

LogitLoss hinge_objective(const Logits& z, RhythmClass target) {
  const auto t = static_cast<std::size_t>(class_index(target));
  std::size_t other = t == 0 ? 1 : 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != t && z[i] > z[other]) other = i;
  }
  LogitLoss out;
  const double gap = z[other] - z[t];
  if (gap > 0.0) {
    out.value = gap;
    out.grad[other] = 1.0;
    out.grad[t] = -1.0;
  }
  return out;
}

LogitLoss nll_objective(const Logits& z, RhythmClass target) {
  const auto t = static_cast<std::size_t>(class_index(target));
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  LogitLoss out;
  out.value = lse - z[t];
  for (std::size_t i = 0; i < z.size(); ++i) out.grad[i] = std::exp(z[i] - lse);
  out.grad[t] -= 1.0;
  return out;
}

ObjectiveGradient input_gradient(const ModelParams& params, std::span<const double> x,
                                 const std::function<LogitLoss(const Logits&)>& loss) {
  check_input(params, x);
  const Layout l = make_layout(params.arch);
  thread_local Cache cache;
  run_forward(params, l, x, cache);
  const LogitLoss ll = loss(cache.logits);
  ObjectiveGradient out;
  out.value = ll.value;
  out.prediction = make_prediction(cache.logits);
  out.gradient.assign(x.size(), 0.0);
  if (std::any_of(ll.grad.begin(), ll.grad.end(), [](double g) { return g != 0.0; })) {
    run_backward(params, l, cache, ll.grad, {}, out.gradient);
  }
  return out;
}

ObjectiveGradient input_gradient(const ModelParams& params, std::span<const double> x,
                                 Objective objective, RhythmClass target) {
  if (objective == Objective::Hinge) {
    return input_gradient(params, x, [target](const Logits& z) { return hinge_objective(z, target); });
  }
  return input_gradient(params, x, [target](const Logits& z) { return nll_objective(z, target); });
}

double accumulate_parameter_gradient(const ModelParams& params, std::span<const double> x,
                                     RhythmClass label, std::span<double> grad) {
  check_input(params, x);
  if (grad.size() != params.values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer does not match parameter count");
  }
  const Layout l = make_layout(params.arch);
  thread_local Cache cache;
  run_forward(params, l, x, cache);
  const LogitLoss ll = nll_objective(cache.logits, label);
  run_backward(params, l, cache, ll.grad, grad, {});
  return ll.value;
}

double accuracy(const ModelParams& params, const Dataset& data) {
  if (data.segments.empty()) return 0.0;
  const auto n = static_cast<long>(data.segments.size());
  long correct = 0;
#pragma omp parallel for reduction(+ : correct) schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& s = data.segments[static_cast<std::size_t>(i)];
    if (classify(params, s.samples).argmax == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ModelParams train(const Dataset& train_set, const Dataset& test_set, const Architecture& arch,
                  const TrainConfig& config, TrainReport* report,
                  const std::function<void(const EpochReport&)>& on_epoch) {
  if (train_set.segments.empty()) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "epochs, batch size and learning rate must be positive");
  }
  ModelParams params = init_params(arch, config.seed);
  const std::size_t np = params.values.size();
  std::vector<double> m(np, 0.0), v(np, 0.0);
  std::mt19937_64 rng(config.seed ^ 0xA5A5A5A5ULL);

  std::vector<std::size_t> order(train_set.segments.size());
  std::iota(order.begin(), order.end(), 0);

  // standardized copies so training sees exactly what classify() sees
  std::vector<std::vector<double>> inputs;
  inputs.reserve(train_set.segments.size());
  for (const auto& s : train_set.segments) inputs.push_back(standardize(s.samples));

  ModelParams best = params;
  double best_acc = -1.0;
  std::size_t step = 0;
  TrainReport local;
  std::vector<std::vector<double>> per_sample(config.batch_size, std::vector<double>(np));
  std::vector<double> losses(config.batch_size);
  std::vector<double> grad(np);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, order.size() - start);
      // per-sample gradients in parallel, then summed in index order so the
      // result does not depend on the thread count
#pragma omp parallel for schedule(static)
      for (long b = 0; b < static_cast<long>(bs); ++b) {
        auto& g = per_sample[static_cast<std::size_t>(b)];
        std::fill(g.begin(), g.end(), 0.0);
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        losses[static_cast<std::size_t>(b)] =
            accumulate_parameter_gradient(params, inputs[idx], train_set.segments[idx].label, g);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = 0; b < bs; ++b) {
        loss_sum += losses[b];
        for (std::size_t i = 0; i < np; ++i) grad[i] += per_sample[b][i];
      }
      if (!std::isfinite(loss_sum)) {
        throw Error(ErrorCode::Divergence, "training loss became non-finite at epoch " +
                                               std::to_string(epoch));
      }
      ++step;
      const double inv_bs = 1.0 / static_cast<double>(bs);
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < np; ++i) {
        const double g = grad[i] * inv_bs;
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        params.values[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
      }
    }
    EpochReport er;
    er.epoch = epoch;
    er.mean_loss = loss_sum / static_cast<double>(order.size());
    er.train_accuracy = accuracy(params, train_set);
    er.test_accuracy = test_set.segments.empty() ? er.train_accuracy : accuracy(params, test_set);
    local.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
    if (er.test_accuracy > best_acc) {
      best_acc = er.test_accuracy;
      best = params;
      best.train_accuracy = er.train_accuracy;
      best.test_accuracy = er.test_accuracy;
      local.best_epoch = epoch;
    }
  }
  local.best_test_accuracy = best_acc;
  if (report) *report = std::move(local);
  return best;
}

namespace {

constexpr std::string_view kMagic = "ecgadv-params v1";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto& a = params.arch;
  out << kMagic << '\n'
      << "input_len " << a.input_len << '\n'
      << "stem_channels " << a.stem_channels << '\n'
      << "stem_pool " << a.stem_pool << '\n'
      << "kernel " << a.kernel << '\n'
      << "block_channels " << join(a.block_channels) << '\n'
      << "classes " << kNumClasses << '\n'
      << "seed " << params.seed << '\n'
      << "train_accuracy " << detail::format_double(params.train_accuracy) << '\n'
      << "test_accuracy " << detail::format_double(params.test_accuracy) << '\n'
      << "count " << params.values.size() << '\n'
      << "data\n";
  detail::write_le_doubles(out, params.values);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ModelParams load_params(const std::filesystem::path& path, const Architecture* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw Error(ErrorCode::FormatError, path.string() + ": not a parameter file");
  }
  ModelParams p;
  std::size_t count = 0;
  bool have_count = false;
  bool have_data = false;
  auto parse_size = [](const std::string& s) {
    return static_cast<std::size_t>(detail::parse_uint(s, ErrorCode::FormatError));
  };
  auto parse_real = [](const std::string& s) { return detail::parse_double(s, ErrorCode::FormatError); };
  while (std::getline(in, line)) {
    if (line == "data") {
      have_data = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(ErrorCode::FormatError, "malformed header line '" + line + "'");
    const std::string key = line.substr(0, sp);
    const std::string val = line.substr(sp + 1);
    if (key == "input_len") p.arch.input_len = parse_size(val);
    else if (key == "stem_channels") p.arch.stem_channels = parse_size(val);
    else if (key == "stem_pool") p.arch.stem_pool = parse_size(val);
    else if (key == "kernel") p.arch.kernel = parse_size(val);
    else if (key == "block_channels") {
      p.arch.block_channels.clear();
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) p.arch.block_channels.push_back(parse_size(item));
    } else if (key == "classes") {
      if (parse_size(val) != kNumClasses) throw Error(ErrorCode::ArchMismatch, "class count differs");
    } else if (key == "seed") p.seed = parse_size(val);
    else if (key == "train_accuracy") p.train_accuracy = parse_real(val);
    else if (key == "test_accuracy") p.test_accuracy = parse_real(val);
    else if (key == "count") {
      count = parse_size(val);
      have_count = true;
    } else {
      throw Error(ErrorCode::FormatError, "unknown header key '" + key + "'");
    }
  }
  if (!have_data || !have_count) throw Error(ErrorCode::FormatError, "truncated header");
  try {
    p.arch.validate();
  } catch (const Error&) {
    throw Error(ErrorCode::FormatError, "header describes an invalid architecture");
  }
  if (expected && !(*expected == p.arch)) {
    throw Error(ErrorCode::ArchMismatch, "stored architecture differs from the expected one");
  }
  if (count != p.arch.parameter_count()) {
    throw Error(ErrorCode::FormatError, "weight count does not match architecture");
  }
  p.values = detail::read_le_doubles(in, count);
  return p;
}

}  // namespace ecgadv::model
