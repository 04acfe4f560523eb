#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "rumpl/eval.hpp"
#include "rumpl/multiperson.hpp"
#include "rumpl/training.hpp"

namespace rumpl {

using Json = nlohmann::json;

// Every from_json starts from `base` (defaults when omitted) and overrides
// the keys present; unknown keys raise ConfigError.

Json to_json(const SceneConfig& c);
Json to_json(const NoiseModel& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const EvalPolicy& c);
Json to_json(const SweepConfig& c);
Json to_json(const BenchConfig& c);
Json to_json(const MultiPersonConfig& c);

SceneConfig scene_config_from_json(const Json& j, SceneConfig base = {});
NoiseModel noise_model_from_json(const Json& j, NoiseModel base = {});
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
EvalPolicy eval_policy_from_json(const Json& j, EvalPolicy base = {});
SweepConfig sweep_config_from_json(const Json& j, SweepConfig base = {});
BenchConfig bench_config_from_json(const Json& j, BenchConfig base = {});
MultiPersonConfig multiperson_config_from_json(const Json& j, MultiPersonConfig base = {});

/// Exit-code gates checked after eval, triangulate and match.
struct Thresholds {
  std::optional<double> max_mpjpe_mm;
  std::optional<double> max_kpstar_mm;
  std::optional<double> min_ap100;
};

/// Everything one CLI run needs; the file format is this object as JSON.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Worker cap; 0 leaves the OpenMP default.
  int jobs = 0;
  SceneConfig scene;
  NoiseModel noise;
  ModelConfig model;
  TrainConfig train;
  EvalPolicy eval;
  SweepConfig sweep;
  BenchConfig bench;
  MultiPersonConfig multiperson;
  Thresholds thresholds;

  void validate() const;
};

Json to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace rumpl
