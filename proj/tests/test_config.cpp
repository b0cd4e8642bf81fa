#include <doctest.h>

#include <fstream>
#include <set>

#include "ecgadv/config.hpp"
#include "ecgadv/error.hpp"
#include "support.hpp"

using namespace ecgadv;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults round trip through text") {
  const CliConfig defaults;
  const auto text = config_to_text(defaults);
  const auto back = parse_config(text);
  CHECK(config_to_text(back) == text);
  CHECK_NOTHROW(back.validate());
}

TEST_CASE("non-default values round trip") {
  CliConfig c;
  c.seed = 99;
  c.type1.c = 0.37;
  c.type1.target = RhythmClass::Noise;
  c.type2.mask.notch_centers_hz = {50.0};
  c.windows = {9000, 4500};
  c.grid_metrics = {"smooth"};
  c.type1.restandardize = false;
  const auto back = parse_config(config_to_text(c));
  CHECK(back.seed == 99);
  CHECK(back.type1.c == 0.37);
  CHECK(back.type1.target == RhythmClass::Noise);
  CHECK(back.type2.mask.notch_centers_hz == std::vector<double>{50.0});
  CHECK(back.windows == std::vector<std::size_t>{9000, 4500});
  CHECK(back.grid_metrics == std::vector<std::string>{"smooth"});
  CHECK_FALSE(back.type1.restandardize);
}

TEST_CASE("parsing") {
  const auto c = parse_config("# comment\n\n  seed = 5   # trailing\ntype2.c=250\ngrid.windows =\n");
  CHECK(c.seed == 5);
  CHECK(c.type2.c == 250.0);
  CHECK(c.windows.empty());
}

TEST_CASE("diagnostics carry line numbers") {
  CHECK(error_of("seed = 1\nbogus.key = 3\n").find("line 2") != std::string::npos);
  CHECK(error_of("seed = 1\nbogus.key = 3\n").find("bogus.key") != std::string::npos);
  CHECK(error_of("seed = x\n").find("line 1") != std::string::npos);
  CHECK(error_of("\n\nno equals sign\n").find("line 3") != std::string::npos);
  CHECK(error_of("type1.metric = linf\n").find("type1.metric") != std::string::npos);
  CHECK(error_of("type1.target = Q\n").find("type1.target") != std::string::npos);
  CHECK(error_of("type1.restandardize = maybe\n").find("line 1") != std::string::npos);
}

TEST_CASE("range validation") {
  auto code_of_validate = [](const std::string& text) -> std::string {
    try {
      parse_config(text).validate();
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      return e.what();
    }
    return {};
  };
  CHECK(code_of_validate("data.train_fraction = 1.5\n").find("data.train_fraction") != std::string::npos);
  CHECK(code_of_validate("grid.windows = 100, 200\n").find("grid.windows") != std::string::npos);
  CHECK_FALSE(code_of_validate("type1.lr = 0\n").empty());
  CHECK_FALSE(code_of_validate("filter.mask_notches = 200\n").empty());
  CHECK(code_of_validate("seed = 3\n").empty());
}

TEST_CASE("help lists every key with its default") {
  const auto help = config_help();
  const CliConfig defaults;
  std::set<std::string> keys;
  for (const auto& k : config_keys()) {
    CHECK(keys.insert(k.key).second);
    CHECK(help.find(k.key + " = " + get_config_value(defaults, k.key)) != std::string::npos);
  }
  CHECK(keys.count("type1.c"));
  CHECK(keys.count("type2.lambda"));
  CHECK(keys.count("train.epochs"));
  CHECK(keys.count("grid.victims_per_class"));
}

TEST_CASE("resolved attack configs") {
  auto c = parse_config("type1.metric = soft_dtw\nmetric.soft_dtw_gamma = 0.25\nseed = 8\n");
  CHECK(c.resolved_type1().metric.type == metrics::MetricType::SoftDtw);
  CHECK(c.resolved_type1().metric.gamma == 0.25);
  CHECK(c.resolved_type2().seed == 8);
  CHECK(c.resolved_windows().size() == 6);
}

TEST_CASE("config files") {
  testing::TempDir dir("config");
  std::ofstream(dir / "a.cfg") << "seed = 17\n";
  CHECK(load_config(dir / "a.cfg").seed == 17);
  std::ofstream(dir / "b.cfg") << "seed = 17\nnope = 1\n";
  try {
    load_config(dir / "b.cfg");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
