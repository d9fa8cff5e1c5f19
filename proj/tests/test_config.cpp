#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "pingmatch/config.hpp"
#include "pingmatch/error.hpp"

using namespace pingmatch;

namespace {

std::string field_of(const std::string& text) {
  try {
    config_from_json(text);
  } catch (const FieldError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
    return e.field();
  } catch (const Error& e) {
    return std::string("code:") + std::string(error_code_name(e.code()));
  }
  return "";
}

}  // namespace

TEST(Config, EmptyDocumentKeepsDefaults) {
  const EngineConfig c = config_from_json("{}");
  EXPECT_EQ(c.policy.top_n, 30);
  EXPECT_EQ(c.timeout_ms, kDefaultTimeoutMs);
  EXPECT_EQ(c.paths.log, "events.jsonl");
  EXPECT_EQ(c.train_fraction, 0.8);
  EXPECT_EQ(c.sim.population_size, SimConfig{}.population_size);
}

TEST(Config, SeedAndTimeoutReachEverySection) {
  const EngineConfig c = config_from_json(R"({"seed": 7, "timeout_ms": 90000})");
  EXPECT_EQ(c.sim.seed, 7u);
  EXPECT_EQ(c.policy.seed, 7u);
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.sim.timeout_ms, 90'000);
}

TEST(Config, SectionsOverrideDefaults) {
  const EngineConfig c = config_from_json(R"({
    "paths": {"log": "a.jsonl", "model": "m.json", "report_dir": "out"},
    "policy": {"top_n": 45, "epsilon": 0.2, "quiet_start_hour": 0, "quiet_end_hour": 5},
    "train": {"lambda_grid": [0.1, 1.0], "cv_folds": 3, "train_fraction": 0.7},
    "sim": {"population_size": 800, "ground_truth": "profile_null",
            "language_pairs": [{"source": "ar", "target": "en", "weight": 1.0}]},
    "serve": {"host": "0.0.0.0", "port": 9000}
  })");
  EXPECT_EQ(c.paths.model, "m.json");
  EXPECT_EQ(c.policy.top_n, 45);
  EXPECT_EQ(c.policy.epsilon, 0.2);
  EXPECT_EQ(c.train.lambda_grid, (std::vector<double>{0.1, 1.0}));
  EXPECT_EQ(c.train_fraction, 0.7);
  EXPECT_EQ(c.sim.population_size, 800u);
  EXPECT_EQ(c.sim.ground_truth, GroundTruthMode::ProfileNull);
  ASSERT_EQ(c.sim.language_pairs.size(), 1u);
  EXPECT_EQ(c.port, 9000);
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_EQ(field_of(R"({"colour": 1})"), "colour");
  EXPECT_EQ(field_of(R"({"policy": {"topn": 3}})"), "policy.topn");
  EXPECT_EQ(field_of(R"({"sim": {"seed": 3}})"), "sim.seed");
}

TEST(Config, InvalidValuesNameTheirPath) {
  EXPECT_EQ(field_of(R"({"policy": {"epsilon": 1.5}})"), "policy.epsilon");
  EXPECT_EQ(field_of(R"({"policy": {"top_n": 0}})"), "policy.top_n");
  EXPECT_EQ(field_of(R"({"policy": {"top_n": "many"}})"), "policy.top_n");
  EXPECT_EQ(field_of(R"({"train": {"train_fraction": 1.0}})"), "train.train_fraction");
  EXPECT_EQ(field_of(R"({"sim": {"ground_truth": "oracle"}})"), "sim.ground_truth");
  EXPECT_FALSE(field_of(R"({"timeout_ms": -1})").empty());
  EXPECT_FALSE(field_of("[1, 2]").empty());
  EXPECT_FALSE(field_of("{oops").empty());
}

TEST(Config, JsonRoundTrip) {
  EngineConfig c;
  c.seed = 11;
  c.policy.epsilon = 0.05;
  c.sim.population_size = 321;
  c.train.lambda_grid = {0.5};
  c.propagate();
  const EngineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.sim.population_size, 321u);
  EXPECT_EQ(back.policy.seed, 11u);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / ("pingmatch_cfg_" + std::to_string(::getpid()) + ".json");
  {
    std::ofstream out(path);
    out << R"({"seed": 3})";
  }
  EXPECT_EQ(load_config(path).sim.seed, 3u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), Error);
}
