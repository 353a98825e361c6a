#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragtrain/errors.hpp"
#include "ragtrain/knowledge.hpp"
#include "ragtrain/math.hpp"
#include "ragtrain/policy.hpp"
#include "ragtrain/rollout.hpp"

namespace ragtrain {

struct DegenerateBatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingRefLogProbs : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RLHyperparams {
  double beta = 1e-4;          // KL penalty coefficient
  double clip_epsilon = 0.2;   // importance-ratio clip range
  double mu = 0.1;             // memorization loss weight
  double eta = 2.0;            // group reward clip
  double learning_rate = 2e-6;
  std::size_t group_size = 16;
  double norm_epsilon = 1e-8;  // degenerate-batch std threshold
};

/// One training batch: eligible rollouts with their total rewards. The
/// retrieval cap is carried along so current-policy scoring replays the
/// same sampling constraints.
struct RLBatch {
  std::vector<const Rollout*> rollouts;
  std::vector<double> rewards;
  std::size_t max_retrievals = 8;

  std::size_t size() const { return rollouts.size(); }
  bool empty() const { return rollouts.empty(); }
};

/// Per-token KL(t) = logp_old(t) - logp_ref(t) on unmasked tokens, 0 on
/// masked ones. Throws MissingRefLogProbs when the reference row was never
/// filled.
std::vector<double> token_kl(const TokenLogProbs& logprobs, const std::vector<std::uint8_t>& mask);

/// Reward-to-go advantages with global-batch normalization. Raw value at an
/// unmasked position t is R_i - beta * sum of KL over unmasked positions
/// >= t; masked positions carry no advantage and are excluded from the
/// mean/std statistics. Throws DegenerateBatch when the raw std falls below
/// norm_epsilon.
struct AdvantageTensor {
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> normalized;
  double batch_mean = 0.0;
  double batch_std = 0.0;
};

AdvantageTensor advantages(const std::vector<double>& rewards,
                           const std::vector<std::vector<double>>& kls,
                           const std::vector<std::vector<std::uint8_t>>& masks, double beta,
                           double norm_epsilon = 1e-8);

/// Convenience: KLs from the batch rollouts, then advantages.
AdvantageTensor batch_advantages(const RLBatch& batch, double beta, double norm_epsilon = 1e-8);

/// Clipped masked surrogate: per-rollout mean over unmasked tokens of
/// min(p*A, clip(p, 1-eps, 1+eps)*A) with p = exp(logp_current - logp_old),
/// then mean over rollouts. The gradient flows only through tokens whose
/// unclipped branch attains the min.
struct SurrogateResult {
  double objective = 0.0;
  Matrix gradient;  // d objective / d weights
};

SurrogateResult masked_surrogate(const ToyPolicy& policy, const RLBatch& batch,
                                 const AdvantageTensor& adv, double clip_epsilon);

struct LossReport {
  std::size_t step = 0;
  double j_mask = 0.0;
  double l_m = 0.0;
  double total_loss = 0.0;  // -j_mask + mu * l_m
  double grad_norm = 0.0;
  double reward_mean = 0.0;
  double retrieval_count_mean = 0.0;
};

/// One gradient-descent step on L = -J_Mask + mu * L_M. Either side may be
/// absent: an empty RL batch gives a pure memorization step, an empty
/// memory batch drops the L_M term. Throws NonFiniteLoss before touching
/// the weights if anything is non-finite.
LossReport combined_step(ToyPolicy& policy, const RLBatch& batch, const AdvantageTensor* adv,
                         const std::vector<const MemorySample*>& memory_batch,
                         const RLHyperparams& hp);

}  // namespace ragtrain
