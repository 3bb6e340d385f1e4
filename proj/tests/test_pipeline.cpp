#include "artifacts.hpp"
#include "pipeline.hpp"

#include <doctest.h>

#include <unistd.h>

using namespace lbill;
using namespace lbill::pipeline;

namespace {

const char* small_config = R"(# small end-to-end run
lambda = 0.25
k_windows = 40:41.5
grid = 64x64
transport_ensemble = 10000
transport_collisions = 300
chaotic_collisions = 200000
seed = 7
average_group = 10
)";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lbill_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Relative path -> file contents, manifest excluded (it records timings).
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    out[fs::relative(entry.path(), dir).string()] = io::read_text(entry.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing") {
  const RunConfig c = parse_config(small_config);
  REQUIRE(c.lambdas.size() == 1);
  CHECK(c.lambdas[0] == 0.25);
  REQUIRE(c.windows.size() == 1);
  CHECK(c.windows[0].k_lo == 40.0);
  CHECK(c.windows[0].k_hi == 41.5);
  CHECK(c.grid == GridDims{64, 64});
  CHECK(c.seed == 7u);
  CHECK(c.a0 == 0.7);

  CHECK_THROWS_AS(parse_config("lambda = 0.25\nspeed = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lambda = 0.25\nlambda = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("grid = 64by64\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("k_windows = 40-41\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed =\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("threshold_mode = sometimes\n"), ConfigError);

  RunConfig no_seed = parse_config("lambda = 0.25\nk_windows = 40:41\noutput_dir = out\n");
  CHECK_THROWS_AS(validate(no_seed), ConfigError);
  no_seed.seed = 1;
  CHECK_NOTHROW(validate(no_seed));
}

TEST_CASE("config hash covers numerical fields only") {
  RunConfig a = parse_config(small_config);
  a.output_dir = "one";
  RunConfig b = a;
  b.output_dir = "two";
  b.threads = 4;
  b.stages = {"geometry"};
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 8;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.a0 = 0.75;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(run_directory(a) == fs::path("one") / config_hash(a));
}

TEST_CASE("missing upstream artifacts") {
  RunConfig c = parse_config(small_config);
  c.output_dir = scratch("missing");
  CHECK_THROWS_AS(run_stage(c, "husimi"), MissingArtifact);
  CHECK_THROWS_AS(run(c, std::string("report")), MissingArtifact);
  CHECK_THROWS_AS(run(c, std::string("nonsense")), ConfigError);
}

TEST_CASE("runs are reproducible across thread counts and reports rebuild from disk") {
  RunConfig one = parse_config(small_config);
  one.output_dir = scratch("threads1");
  RunConfig two = one;
  two.output_dir = scratch("threads2");
  two.threads = 2;

  const RunManifest m = run(one);
  run(two);
  CHECK(m.config_hash == config_hash(one));
  for (const auto& stage : stage_names()) CHECK(m.stages.count(stage) == 1);

  const fs::path dir_one = run_directory(one), dir_two = run_directory(two);
  const auto a = snapshot(dir_one), b = snapshot(dir_two);
  CHECK(a.size() > 10);
  CHECK(a == b);

  const auto row = read_transport_row(dir_one, 0.25);
  CHECK(row.size() == one.fractions.size());

  // The report stage reads only persisted artifacts.
  for (const auto& file : m.stages.at("report").artifacts) fs::remove(dir_one / file);
  run(one, std::string("report"));
  CHECK(snapshot(dir_one) == a);

  const io::json manifest = io::read_json(dir_one / "manifest.json");
  CHECK(manifest.at("config_hash") == config_hash(one));
  CHECK(manifest.at("stages").contains("report"));
}

TEST_CASE("circle run stops at the chaotic grid") {
  RunConfig c = parse_config(small_config);
  c.lambdas = {0.0};
  c.output_dir = scratch("circle");
  c.stages = {"geometry", "solve", "husimi"};
  CHECK_NOTHROW(run(c));
  try {
    run(c, std::string("chaotic-grid"));
    FAIL("expected a stage failure");
  } catch (const StageFailed& e) {
    CHECK(e.numerical());
  }
}

}
