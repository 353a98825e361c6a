#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragtrain/config.hpp"
#include "ragtrain/eval.hpp"
#include "ragtrain/knowledge.hpp"
#include "ragtrain/optimizer.hpp"
#include "ragtrain/world.hpp"

namespace ragtrain {

/// Resumable training state: weights, step index, the accumulated
/// memorization dataset, and enough metadata to rebuild the policy. All
/// randomness is derived from (seed, step, ...) keys, so no generator state
/// needs saving; reloading reproduces the continuation bitwise.
struct Checkpoint {
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::string tag_mode = "long";
  std::size_t feature_window = 10;
  std::vector<std::string> vocab_words;
  Matrix weights;
  std::vector<MemorySample> memory_dataset;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  ToyPolicy make_policy() const;
  static Checkpoint from_policy(const ToyPolicy& policy, std::uint64_t seed,
                                std::string tag_mode, std::size_t step = 0);
};

struct DynamicsRecord {
  std::size_t step = 0;
  double reward_mean = 0.0;
  double rc_mean = 0.0;
  double j_mask = 0.0;
  double l_m = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;
  bool degenerate = false;  // advantage batch rejected this step

  std::string to_json() const;
};

struct Stage1Report {
  std::size_t cold_start_samples = 0;
  bool empty_cold_start = false;
  bool skipped = false;  // no_stage1 ablation
  std::vector<double> sft_epoch_losses;
};

/// Rejection-samples the seeded policy over the training questions, filters
/// to format-valid correct traces carrying both segment kinds, and runs
/// masked SFT. An empty cold-start set is logged and leaves the policy
/// untouched, mirroring the no-stage-1 arm.
Stage1Report run_stage1(const RunConfig& config, const WorldBundle& world, ToyPolicy& policy);

struct Stage2Result {
  Checkpoint final_checkpoint;
  std::vector<DynamicsRecord> dynamics;
  bool aborted_non_finite = false;
};

/// The RL loop: sample groups, score rewards, grow the memorization dataset
/// (unless ablated), take one combined step per batch; logs one dynamics
/// record per step and checkpoints periodically. `start.step` may be
/// nonzero to resume an interrupted run; the continuation is bitwise
/// identical to the uninterrupted one.
Stage2Result run_stage2(const RunConfig& config, const WorldBundle& world,
                        const Checkpoint& start, const ToyPolicy& ref_policy,
                        const std::string& log_dir = "");

/// Greedy evaluation of a checkpointed policy over the world questions.
EvalReport evaluate_checkpoint(const RunConfig& config, const WorldBundle& world,
                               const Checkpoint& ckpt, std::string_view dataset_name = "synthetic");

struct FullRunResult {
  Checkpoint seeded;     // after knowledge seeding, before stage 1
  Checkpoint post_sft;   // stage-1 output (== seeded under no_stage1)
  Stage1Report stage1;
  Stage2Result stage2;
};

/// world-gen + seeding + stage 1 + stage 2, writing checkpoints, the config
/// echo and the dynamics log under config.out_dir when it is nonempty.
FullRunResult run_full_training(const RunConfig& config, const WorldBundle& world);

}  // namespace ragtrain
