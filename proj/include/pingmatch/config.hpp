#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pingmatch/matcher.hpp"
#include "pingmatch/model.hpp"
#include "pingmatch/simulator.hpp"

namespace pingmatch {

struct EnginePaths {
  std::filesystem::path log = "events.jsonl";
  std::filesystem::path model = "model.json";
  std::filesystem::path report_dir = "report";
};

struct EngineConfig {
  EnginePaths paths;
  // Feeds the simulator, the selection RNG, and training.
  std::uint64_t seed = 1;
  TimestampMs timeout_ms = kDefaultTimeoutMs;
  MatchPolicy policy;
  TrainConfig train;
  double train_fraction = 0.8;
  std::size_t segment_min_samples = 1000;
  SimConfig sim;
  std::string host = "127.0.0.1";
  int port = 8080;

  // Copies seed and timeout into the sections that use them.
  void propagate();
  // Throws FieldError(ConfigInvalid) naming the offending field.
  void validate() const;
};

// Unknown keys are rejected; absent keys keep their defaults.
EngineConfig config_from_json(const std::string& text);
std::string config_to_json(const EngineConfig& config);
EngineConfig load_config(const std::filesystem::path& path);

}  // namespace pingmatch
