#include <doctest.h>

#include "ecgadv/attack_type1.hpp"
#include "ecgadv/error.hpp"
#include "support.hpp"

using namespace ecgadv;
using namespace ecgadv::attack;

namespace {

EcgSegment tiny_segment(std::uint64_t seed) {
  EcgSegment s;
  s.samples = standardize(testing::randn(64, seed));
  s.id = "tiny-" + std::to_string(seed);
  return s;
}

}  // namespace

TEST_CASE("f_g") {
  CHECK(f_g({5, 2, 1, 0}, RhythmClass::N).value == 0.0);
  CHECK(f_g({5, 2, 1, 0}, RhythmClass::O).value == 4.0);
  CHECK(f_g({0, 0, 0, 0}, RhythmClass::A).value == 0.0);
}

TEST_CASE("adam first steps") {
  Adam adam(2, 0.1);
  std::vector<double> x{1.0, 1.0};
  adam.step(x, {4.0, -0.5});
  // bias-corrected first step moves every coordinate by lr in the sign of -g
  CHECK(x[0] == doctest::Approx(0.9));
  CHECK(x[1] == doctest::Approx(1.1));
  adam.reset();
  std::vector<double> y{0.0, 0.0};
  adam.step(y, {1.0, 1.0});
  CHECK(y[0] == doctest::Approx(-0.1));
}

TEST_CASE("type1 config validation") {
  Type1Config c;
  CHECK_NOTHROW(c.validate());
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("targeted attack on a small trained model") {
  const auto data = synth_dataset(8, 600, 300.0, 3);
  model::Architecture arch;
  arch.input_len = 600;
  arch.stem_channels = 4;
  arch.stem_pool = 4;
  arch.kernel = 9;
  arch.block_channels = {4, 8};
  model::TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 8;
  tc.learning_rate = 3e-3;
  const auto params = model::train(data, data, arch, tc);
  const auto& x = data.segments.front();
  const auto source = model::classify(params, x.samples).argmax;

  Type1Config cfg;
  cfg.max_iters = 300;
  cfg.refine_iters = 30;
  cfg.lr = 0.02;
  std::size_t successes = 0;
  for (int t = 0; t < kNumClasses; ++t) {
    cfg.target = class_from_index(t);
    if (cfg.target == source) {
      try {
        attack_type1(params, x, cfg);
        FAIL("expected TargetEqualsSource");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TargetEqualsSource);
      }
      continue;
    }
    CAPTURE(t);
    const auto out = attack_type1(params, x, cfg);
    CHECK(out.source == source);
    REQUIRE(out.delta.size() == x.samples.size());
    for (std::size_t i = 0; i < out.delta.size(); ++i) CHECK(out.delta[i] == doctest::Approx(out.x_adv[i] - x.samples[i]));
    CHECK(out.iters_used <= cfg.max_iters * cfg.max_rounds);
    if (!out.success) continue;
    ++successes;
    // success is re-verifiable on the stored input, which stays standardized
    CHECK(model::forward(params, out.x_adv).argmax == cfg.target);
    CHECK(std::abs(mean(out.x_adv)) < 1e-9);
    CHECK(std::abs(popstd(out.x_adv) - 1.0) < 1e-9);
    CHECK(out.metric_value == doctest::Approx(metrics::distance(cfg.metric, x.samples, out.x_adv).value));
    CHECK(out.final_f_g == 0.0);
  }
  CHECK(successes == kNumClasses - 1);
}

TEST_CASE("attacks are deterministic") {
  const auto params = model::init_params(testing::tiny_arch(), 21);
  const auto x = tiny_segment(6);
  Type1Config cfg;
  cfg.max_iters = 100;
  cfg.metric = metrics::MetricKind::smooth();
  cfg.target = model::classify(params, x.samples).argmax == RhythmClass::A ? RhythmClass::O : RhythmClass::A;
  const auto a = attack_type1(params, x, cfg), b = attack_type1(params, x, cfg);
  CHECK(a.x_adv == b.x_adv);
  CHECK(a.iters_used == b.iters_used);
}
