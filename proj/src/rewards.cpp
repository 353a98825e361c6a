#include "ragtrain/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ragtrain/text.hpp"

namespace ragtrain {

bool cover_exact_match(std::string_view prediction, std::string_view golden) {
  const std::string pred = normalize_answer(prediction);
  const std::string gold = normalize_answer(golden);
  if (gold.empty()) return false;
  return pred.find(gold) != std::string::npos;
}

double answer_reward(const Rollout& rollout, std::string_view golden, const RewardConfig& cfg) {
  if (!rollout.format_ok) return 0.0;
  const ReasoningTrace* trace = rollout.trace();
  if (!trace || !trace->final_answer) return 0.0;
  const std::string& answer = *trace->final_answer;
  if (split_whitespace(answer).size() > cfg.max_answer_words) return 0.0;
  return cover_exact_match(answer, golden) ? 1.0 : 0.0;
}

double format_reward(const ParseResult& parsed) { return validate_format(parsed) ? 0.0 : -2.0; }

double format_reward(const Rollout& rollout) { return rollout.format_ok ? 0.0 : -2.0; }

GroupRewardContext make_group_context(const std::vector<std::size_t>& retrieval_counts,
                                      const std::vector<bool>& correct, const RewardConfig& cfg) {
  if (retrieval_counts.size() != correct.size()) {
    throw std::invalid_argument("counts/correct size mismatch");
  }
  if (retrieval_counts.size() < 2) {
    throw std::invalid_argument("group rewards require n >= 2 rollouts");
  }
  GroupRewardContext ctx;
  ctx.retrieval_counts = retrieval_counts;
  ctx.correct = correct;

  std::vector<double> counts_for_sigma;
  for (std::size_t i = 0; i < retrieval_counts.size(); ++i) {
    if (cfg.sigma_scope == SigmaScope::AllRollouts || correct[i]) {
      counts_for_sigma.push_back(static_cast<double>(retrieval_counts[i]));
    }
  }
  if (!counts_for_sigma.empty()) {
    double mean = 0.0;
    for (const double c : counts_for_sigma) mean += c;
    mean /= static_cast<double>(counts_for_sigma.size());
    double var = 0.0;
    for (const double c : counts_for_sigma) var += (c - mean) * (c - mean);
    var /= static_cast<double>(counts_for_sigma.size());
    ctx.sigma = std::sqrt(var);
  }

  std::size_t t_min = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < retrieval_counts.size(); ++i) {
    if (correct[i]) {
      ctx.has_correct = true;
      t_min = std::min(t_min, retrieval_counts[i]);
    }
  }
  if (ctx.has_correct) ctx.t_min = t_min;
  return ctx;
}

std::vector<double> group_rewards_from_counts(const std::vector<std::size_t>& retrieval_counts,
                                              const std::vector<bool>& correct,
                                              const RewardConfig& cfg) {
  const GroupRewardContext ctx = make_group_context(retrieval_counts, correct, cfg);
  std::vector<double> rewards(retrieval_counts.size(), 0.0);
  if (!ctx.has_correct) return rewards;
  const double factor = std::min(2.0 * ctx.sigma * ctx.sigma, cfg.eta);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (correct[i] && retrieval_counts[i] == ctx.t_min) rewards[i] = factor;
  }
  return rewards;
}

std::vector<double> group_rewards(const RolloutGroup& group, std::string_view golden,
                                  const RewardConfig& cfg) {
  std::vector<std::size_t> counts;
  std::vector<bool> correct;
  counts.reserve(group.rollouts.size());
  for (const Rollout& r : group.rollouts) {
    counts.push_back(r.retrieval_count);
    correct.push_back(answer_reward(r, golden, cfg) == 1.0);
  }
  return group_rewards_from_counts(counts, correct, cfg);
}

RewardBreakdown total_reward(const Rollout& rollout, std::string_view golden,
                             double group_reward_value, const RewardConfig& cfg) {
  RewardBreakdown b;
  b.r_format = format_reward(rollout);
  if (b.r_format < 0.0) {
    b.r_answer = 0.0;
    b.r_group = 0.0;
  } else {
    b.r_answer = answer_reward(rollout, golden, cfg);
    b.r_group = b.r_answer == 1.0 ? group_reward_value : 0.0;
  }
  b.total = b.r_format + b.r_answer + b.r_group;
  return b;
}

std::vector<RewardBreakdown> score_group(const RolloutGroup& group, const RewardConfig& cfg) {
  const auto rg = group_rewards(group, group.golden_answer, cfg);
  std::vector<RewardBreakdown> out;
  out.reserve(group.rollouts.size());
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    out.push_back(total_reward(group.rollouts[i], group.golden_answer, rg[i], cfg));
  }
  return out;
}

std::string reward_to_json(const RewardBreakdown& b, std::string_view question_id,
                           std::size_t rollout_index) {
  nlohmann::json rec;
  rec["question_id"] = std::string(question_id);
  rec["rollout"] = rollout_index;
  rec["r_format"] = b.r_format;
  rec["r_answer"] = b.r_answer;
  rec["r_group"] = b.r_group;
  rec["total"] = b.total;
  return rec.dump();
}

}  // namespace ragtrain
