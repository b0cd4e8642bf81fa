#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecgadv/signal.hpp"

namespace ecgadv::model {

/// Shape of the stand-in classifier.
///
/// stem:   conv(1 -> stem_channels, k) + bias, ReLU, average pool by stem_pool
/// block:  conv(k) -> per-channel affine -> ReLU -> conv(k) -> per-channel affine
///         -> + skip (1x1 projection when channels change) -> ReLU -> avg pool 2
/// head:   global average pool, dense to kNumClasses logits
struct Architecture {
  std::size_t input_len = kDefaultLength;
  std::size_t stem_channels = 8;
  std::size_t stem_pool = 8;
  std::size_t kernel = 15;
  std::vector<std::size_t> block_channels{8, 16, 32};

  bool operator==(const Architecture&) const = default;
  void validate() const;
  /// Total number of trainable scalars.
  std::size_t parameter_count() const;
};

struct ModelParams {
  Architecture arch;
  std::vector<double> values;  // flat, in layout order
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

using Logits = std::array<double, kNumClasses>;

struct Prediction {
  Logits logits{};
  Logits probs{};
  RhythmClass argmax = RhythmClass::N;
};

/// Softmax with max subtraction.
Logits softmax(const Logits& z);
/// Index of the largest logit, lowest class code on ties.
RhythmClass argmax(const Logits& z);

ModelParams init_params(const Architecture& arch, std::uint64_t seed);

/// Logits and probabilities of an already standardized input.
Prediction forward(const ModelParams& params, std::span<const double> x);

/// forward(standardize(x)): the deployed pipeline with its normalization layer.
Prediction classify(const ModelParams& params, std::span<const double> x);

enum class Objective {
  Hinge,        // max(max_{i != t} Z_i - Z_t, 0)
  CrossEntropy  // -log P(y_t | x)
};

struct LogitLoss {
  double value = 0.0;
  Logits grad{};  // d value / d logits
};

/// Hinge on logits. The subgradient uses the attaining non-target index
/// (lowest code on ties) and is zero when the hinge is clamped.
LogitLoss hinge_objective(const Logits& z, RhythmClass target);
/// -log softmax(z)_t with log-sum-exp stabilization.
LogitLoss nll_objective(const Logits& z, RhythmClass target);

struct ObjectiveGradient {
  double value = 0.0;
  Prediction prediction;
  std::vector<double> gradient;  // d objective / d x
};

/// Gradient of the selected objective w.r.t. every input sample.
ObjectiveGradient input_gradient(const ModelParams& params, std::span<const double> x,
                                 Objective objective, RhythmClass target);

/// Gradient of an arbitrary logit-level loss w.r.t. the input; the callback
/// receives the logits and returns the loss value and its logit gradient.
ObjectiveGradient input_gradient(const ModelParams& params, std::span<const double> x,
                                 const std::function<LogitLoss(const Logits&)>& loss);

/// Cross-entropy value, gradient w.r.t. parameters (accumulated into grad, which
/// must be sized parameter_count()) for one labelled example.
double accumulate_parameter_gradient(const ModelParams& params, std::span<const double> x,
                                     RhythmClass label, std::span<double> grad);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 7;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  double best_test_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

/// Mini-batch Adam on cross-entropy. Returns the parameters from the epoch
/// with the best test accuracy. Throws Divergence on a non-finite loss.
ModelParams train(const Dataset& train_set, const Dataset& test_set, const Architecture& arch,
                  const TrainConfig& config, TrainReport* report = nullptr,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

/// Fraction of segments whose classify() matches the label.
double accuracy(const ModelParams& params, const Dataset& data);

void save_params(const ModelParams& params, const std::filesystem::path& path);
/// Throws FormatError on malformed/truncated input. When `expected` is given,
/// throws ArchMismatch if the stored architecture differs.
ModelParams load_params(const std::filesystem::path& path, const Architecture* expected = nullptr);

}  // namespace ecgadv::model
