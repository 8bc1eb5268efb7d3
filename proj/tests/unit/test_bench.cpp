#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include <shareprefill/bench.hpp>

using namespace shareprefill;

namespace
{
BenchOptions quick()
{
  BenchOptions o;
  o.ladder = {512, 256};
  o.head_dim = 16;
  o.warmup = 0;
  o.repetitions = 2;
  return o;
}
}  // namespace

TEST_CASE("bench rows")
{
  const auto report = run_bench(quick(), 3);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].tokens == 256);
  CHECK(report.rows[1].tokens == 512);
  for (const auto& row : report.rows)
  {
    CHECK(row.computed_blocks == row.mask_popcount);
    CHECK(row.density > 0.0);
    CHECK(row.density <= 1.0);
    CHECK(row.dense_ms > 0.0);
    CHECK(row.sparse_ms > 0.0);
    CHECK(row.speedup == doctest::Approx(row.dense_ms / row.sparse_ms));
    CHECK(row.tiled_speedup == doctest::Approx(row.dense_tiled_ms / row.sparse_ms));
  }
  // 8 blocks: 36 causal, the sanitized base already holds 15.
  CHECK(report.rows[1].mask_popcount == 15);
  CHECK(report.environment.precision == "fp32");
  CHECK(report.environment.threads == 1);
}

TEST_CASE("bench serialisation")
{
  const auto report = run_bench(quick(), 3);
  const auto j = nlohmann::json::parse(bench_to_json(report));
  CHECK(j["version"] == BenchReport::kSchemaVersion);
  CHECK(j["seed"] == 3);
  CHECK(j["environment"].contains("cpu"));
  CHECK(j["options"]["repetitions"] == 2);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][1]["N"] == 512);

  std::istringstream csv(bench_to_csv(report));
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("N,dense_ms,", 0) == 0);
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);)
  {
    ++lines;
  }
  CHECK(lines == 2);
}
