#pragma once

#include <cstddef>
#include <vector>

#include "ecgadv/metrics.hpp"
#include "ecgadv/model.hpp"
#include "ecgadv/signal.hpp"

namespace ecgadv::attack {

/// Hinge objective on logits: max(max_{i != t} Z_i - Z_t, 0) and its subgradient.
model::LogitLoss f_g(const model::Logits& logits, RhythmClass target);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam on a flat vector; state lives with the optimizer so it can be reset per c round.
class Adam {
 public:
  Adam(std::size_t n, double lr, AdamSettings s = {});
  void reset();
  /// x -= lr * mhat / (sqrt(vhat) + eps)
  void step(std::vector<double>& x, const std::vector<double>& grad);

 private:
  double lr_;
  AdamSettings s_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

struct Type1Config {
  RhythmClass target = RhythmClass::A;
  metrics::MetricKind metric = metrics::MetricKind::smooth_l2();
  double c = 0.1;
  double c_escalation = 10.0;
  std::size_t max_rounds = 4;
  double lr = 0.005;
  std::size_t max_iters = 1000;
  /// Iterations kept running after the first success, looking for a successful
  /// iterate with a lower metric value.
  std::size_t refine_iters = 100;
  bool restandardize = true;
  AdamSettings adam;

  void validate() const;
};

struct AttackOutcome {
  std::vector<double> x_adv;
  std::vector<double> delta;  // x_adv - x
  bool success = false;
  std::size_t iters_used = 0;
  std::size_t rounds_used = 0;
  double c_used = 0.0;
  double metric_value = 0.0;
  double final_f_g = 0.0;
  RhythmClass source = RhythmClass::N;
  RhythmClass predicted = RhythmClass::N;
};

/// Targeted attack minimizing D(x, x_adv) + c * f_g(x_adv) with Adam from delta = 0.
/// Throws TargetEqualsSource when the model already assigns the target class.
/// Failure to reach the target is reported through success = false.
AttackOutcome attack_type1(const model::ModelParams& params, const EcgSegment& x,
                           const Type1Config& config);

}  // namespace ecgadv::attack
