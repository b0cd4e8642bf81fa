#include "ecgadv/attack_type1.hpp"

#include <cmath>
#include <limits>

#include "ecgadv/error.hpp"

namespace ecgadv::attack {

model::LogitLoss f_g(const model::Logits& logits, RhythmClass target) {
  return model::hinge_objective(logits, target);
}

Adam::Adam(std::size_t n, double lr, AdamSettings s) : lr_(lr), s_(s), m_(n, 0.0), v_(n, 0.0) {}

void Adam::reset() {
  t_ = 0;
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
}

void Adam::step(std::vector<double>& x, const std::vector<double>& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = s_.beta1 * m_[i] + (1.0 - s_.beta1) * grad[i];
    v_[i] = s_.beta2 * v_[i] + (1.0 - s_.beta2) * grad[i] * grad[i];
    x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + s_.eps);
  }
}

void Type1Config::validate() const {
  metric.validate();
  if (!(c > 0.0) || !(lr > 0.0) || max_iters < 1 || max_rounds < 1 || !(c_escalation >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "type1 config needs c > 0, lr > 0, max_iters >= 1, max_rounds >= 1, escalation >= 1");
  }
}

AttackOutcome attack_type1(const model::ModelParams& params, const EcgSegment& x,
                           const Type1Config& config) {
  config.validate();
  const std::size_t n = x.samples.size();
  const RhythmClass source = model::classify(params, x.samples).argmax;
  if (source == config.target) {
    throw Error(ErrorCode::TargetEqualsSource,
                "segment '" + x.id + "' is already classified as target " + class_name(config.target));
  }

  AttackOutcome best;
  best.source = source;
  best.metric_value = std::numeric_limits<double>::infinity();
  AttackOutcome last;

  std::vector<double> delta(n, 0.0);
  std::vector<double> z(n), x_adv(n), grad(n);
  Adam adam(n, config.lr, config.adam);
  std::size_t total_iters = 0;
  double c = config.c;

  for (std::size_t round = 0; round < config.max_rounds; ++round) {
    if (round > 0) c *= config.c_escalation;
    adam.reset();
    std::size_t since_success = 0;
    bool found = false;
    for (std::size_t it = 0; it < config.max_iters; ++it) {
      ++total_iters;
      for (std::size_t i = 0; i < n; ++i) z[i] = x.samples[i] + delta[i];
      double sigma = 1.0;
      if (config.restandardize) {
        sigma = popstd(z);
        x_adv = standardize(z);
      } else {
        x_adv = z;
      }

      const auto obj = model::input_gradient(params, x_adv, [&](const model::Logits& l) {
        return f_g(l, config.target);
      });
      const auto dist = metrics::distance(config.metric, x.samples, x_adv);
      const bool hit = obj.prediction.argmax == config.target;

      if (hit && dist.value < best.metric_value) {
        best.x_adv = x_adv;
        best.metric_value = dist.value;
        best.final_f_g = obj.value;
        best.success = true;
        best.predicted = obj.prediction.argmax;
        best.c_used = c;
        best.rounds_used = round + 1;
      }
      if (!hit && !found) {
        last.x_adv = x_adv;
        last.metric_value = dist.value;
        last.final_f_g = obj.value;
        last.predicted = obj.prediction.argmax;
        last.c_used = c;
        last.rounds_used = round + 1;
      }
      found = found || hit;
      if (found && ++since_success > config.refine_iters) break;

      for (std::size_t i = 0; i < n; ++i) grad[i] = (*dist.gradient)[i] + c * obj.gradient[i];
      if (config.restandardize) grad = standardize_backward(x_adv, sigma, grad);
      adam.step(delta, grad);
    }
    if (best.success) break;
  }

  AttackOutcome& out = best.success ? best : last;
  out.source = source;
  out.iters_used = total_iters;
  out.delta.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.delta[i] = out.x_adv[i] - x.samples[i];
  return std::move(out);
}

}  // namespace ecgadv::attack
