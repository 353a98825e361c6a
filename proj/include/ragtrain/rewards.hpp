#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ragtrain/rollout.hpp"

namespace ragtrain {

/// Which retrieval counts enter the group-reward standard deviation. The
/// formula reading uses every rollout in the group; the prose reading uses
/// only the correct ones.
enum class SigmaScope { AllRollouts, CorrectOnly };

struct RewardConfig {
  double eta = 2.0;  // clip bound on the 2*sigma^2 factor
  std::size_t max_answer_words = 10;
  SigmaScope sigma_scope = SigmaScope::AllRollouts;
};

struct RewardBreakdown {
  double r_format = 0.0;  // 0 or -2
  double r_answer = 0.0;  // 0 or 1
  double r_group = 0.0;   // [0, eta]
  double total = 0.0;     // exact sum of the three
};

struct GroupRewardContext {
  std::vector<std::size_t> retrieval_counts;
  std::vector<bool> correct;  // answer reward per rollout
  double sigma = 0.0;
  bool has_correct = false;
  std::size_t t_min = 0;  // defined only when has_correct
};

/// True iff the normalized golden answer is a substring of the normalized
/// prediction (lowercase, punctuation stripped, whitespace collapsed).
bool cover_exact_match(std::string_view prediction, std::string_view golden);

/// 1 iff the rollout is format-valid, a boxed answer exists, it has at most
/// max_answer_words whitespace-delimited words, and cover_exact_match holds.
double answer_reward(const Rollout& rollout, std::string_view golden,
                     const RewardConfig& cfg = {});

/// 0 for a format-valid parse outcome, -2 otherwise.
double format_reward(const ParseResult& parsed);
double format_reward(const Rollout& rollout);

/// Per-rollout group rewards: min(2*sigma^2, eta) for correct rollouts at
/// the minimum retrieval count among correct ones, 0 elsewhere; all zero
/// when nothing is correct. sigma is the population standard deviation of
/// the group's retrieval counts (scope per config). Requires group size
/// >= 2.
std::vector<double> group_rewards(const RolloutGroup& group, std::string_view golden,
                                  const RewardConfig& cfg = {});

/// Pure-values variant used by the oracle table and by callers that already
/// extracted counts and correctness flags.
std::vector<double> group_rewards_from_counts(const std::vector<std::size_t>& retrieval_counts,
                                              const std::vector<bool>& correct,
                                              const RewardConfig& cfg = {});

GroupRewardContext make_group_context(const std::vector<std::size_t>& retrieval_counts,
                                      const std::vector<bool>& correct, const RewardConfig& cfg);

/// Full per-rollout breakdown; format-invalid rollouts get answer and group
/// zeroed on top of the -2.
RewardBreakdown total_reward(const Rollout& rollout, std::string_view golden,
                             double group_reward_value, const RewardConfig& cfg = {});

/// Breakdown for every rollout of a scored group.
std::vector<RewardBreakdown> score_group(const RolloutGroup& group, const RewardConfig& cfg = {});

std::string reward_to_json(const RewardBreakdown& b, std::string_view question_id,
                           std::size_t rollout_index);

}  // namespace ragtrain
