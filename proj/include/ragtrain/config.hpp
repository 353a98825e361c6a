#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ragtrain/eval.hpp"
#include "ragtrain/optimizer.hpp"
#include "ragtrain/rewards.hpp"
#include "ragtrain/rollout.hpp"
#include "ragtrain/world.hpp"

namespace ragtrain {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Stage1Config {
  std::size_t samples_per_question = 8;
  std::size_t epochs = 6;
  std::size_t batch_size = 64;
  double learning_rate = 0.2;
  double temperature = 0.7;  // rejection-sampling exploration temperature
};

struct Stage2Config {
  std::size_t steps = 60;
  std::size_t questions_per_step = 8;
  std::size_t memory_batch_size = 8;
  std::size_t checkpoint_every = 20;
};

struct AblationFlags {
  bool no_stage1 = false;
  bool no_group_reward = false;
  bool no_memorization = false;
};

/// Everything one training run needs, parsed from a flat key = value file.
/// Unknown keys are rejected; the resolved values (defaults included) are
/// echoed into the run log.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "runs/out";
  std::string tag_mode = "long";  // "long" | "short"

  WorldConfig world;
  std::size_t feature_window = 10;
  RolloutParams rollout;
  RLHyperparams rl;
  Stage1Config stage1;
  Stage2Config stage2;
  SeedOptions seeding;
  RewardConfig rewards;
  AblationFlags ablation;

  std::string judge_mode = "offline";  // "offline" | "remote"
  std::string remote_base_url;         // env RAGTRAIN_REMOTE_URL overrides

  TagSet tags() const;
  JudgeConfig judge_config() const;

  /// Parses file contents; keys follow the dotted names documented in the
  /// echo. Throws ConfigError for unknown keys or bad values.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);

  /// Deterministic key = value echo of every resolved setting.
  std::string echo() const;

  /// Applies defaults that depend on other fields and environment
  /// overrides (remote endpoint).
  void finalize();
};

}  // namespace ragtrain
