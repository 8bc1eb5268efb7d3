#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <shareprefill/config.hpp>
#include <shareprefill/errors.hpp>

using namespace shareprefill;

TEST_CASE("defaults are valid")
{
  const Config c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.thresholds.gamma == 0.9);
  CHECK(c.thresholds.tau == 0.2);
  CHECK(c.thresholds.delta == 0.3);
  CHECK(c.model.block_size == 64);
  CHECK(c.bench.repetitions == 10);
}

TEST_CASE("partial documents keep defaults")
{
  const auto c = config_from_json(R"({
    "model": {"layers": 2, "tokens": 4096, "structure": {"default_templates": 6, "noise_heads": 2}},
    "thresholds": {"tau": 0.0},
    "cluster": {"linkage": "complete"},
    "calibration": {"seed": 3},
    "bench": {"ladder": [2048]},
    "mode": "both",
    "threads": 2
  })");
  CHECK(c.model.layers == 2);
  CHECK(c.model.heads == 8);
  CHECK(c.model.tokens == 4096);
  CHECK(c.model.structure.templates == default_templates(6));
  CHECK(c.model.structure.noise_heads == 2);
  CHECK(c.thresholds.tau == 0.0);
  CHECK(c.thresholds.gamma == 0.9);
  CHECK(c.cluster.linkage == Linkage::Complete);
  CHECK(c.calibration.seed == 3);
  CHECK(c.bench.ladder == std::vector<std::size_t>{2048});
  CHECK(c.mode == RunMode::Both);
  CHECK(c.threads == 2);

  const auto cal = c.calibration_model();
  CHECK(cal.seed == 3);
  CHECK(cal.tokens == 4096);
  CHECK(cal.structure == c.model.structure);
}

TEST_CASE("json round trip")
{
  Config c;
  c.model.seed = 42;
  c.model.structure.templates = {{TemplateKind::Staircase, 8, 6.5}};
  c.thresholds.delta = Thresholds::kDeltaDisabled;
  c.cluster.distance_threshold = 0.7;
  c.calibration.tokens = 2048;
  c.bench.density = 0.2;
  c.dump_masks = true;
  c.out_dir = "elsewhere";
  const auto back = config_from_json(config_to_json(c));
  CHECK(back.model == c.model);
  CHECK(back.thresholds.delta == c.thresholds.delta);
  CHECK(back.cluster.distance_threshold == 0.7);
  CHECK(back.calibration.tokens == 2048);
  CHECK(back.bench.density == 0.2);
  CHECK(back.dump_masks);
  CHECK(back.out_dir == "elsewhere");
}

TEST_CASE("rejected documents")
{
  CHECK_THROWS_AS(config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(config_from_json("[]"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"gama": 0.9})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"threads": "four"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"mode": "fast"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"cluster": {"linkage": "ward"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"model": {"structure": {"default_templates": 0}}})"),
                  ConfigError);
}

TEST_CASE("validation names bad values")
{
  auto expect_error = [](Config c) { CHECK_THROWS_AS(c.validate(), ConfigError); };
  Config c;
  c.thresholds.gamma = 0.0;
  expect_error(c);
  c = Config{};
  c.thresholds.tau = 1.5;
  expect_error(c);
  c = Config{};
  c.thresholds.delta = 1.2;
  expect_error(c);
  c = Config{};
  c.model.tokens = 10;
  expect_error(c);
  c = Config{};
  c.threads = 0;
  expect_error(c);
  c = Config{};
  c.calibration.tokens = 16;
  expect_error(c);
  c = Config{};
  c.bench.ladder = {65536};
  expect_error(c);
  c.bench.allow_paper_scale = true;
  CHECK_NOTHROW(c.validate());
  c = Config{};
  c.bench.density = 0.0;
  expect_error(c);
  c = Config{};
  c.cluster.min_cluster_size = 0;
  expect_error(c);
  try
  {
    c = Config{};
    c.bench.ladder = {1 << 20};
    c.validate();
    FAIL("expected ConfigError");
  }
  catch (const ConfigError& e)
  {
    CHECK(std::string(e.what()).find("allow_paper_scale") != std::string::npos);
  }
}

TEST_CASE("config files")
{
  const auto dir = std::filesystem::temp_directory_path() / "shareprefill_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "config.json";
  std::ofstream(path) << R"({"threads": 3})";
  CHECK(load_config(path.string()).threads == 3);
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), IoError);
  std::filesystem::remove_all(dir);
}
