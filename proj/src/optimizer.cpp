#include "ragtrain/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace ragtrain {

std::vector<double> token_kl(const TokenLogProbs& logprobs, const std::vector<std::uint8_t>& mask) {
  if (logprobs.size() != mask.size()) throw std::invalid_argument("logprobs/mask length mismatch");
  if (!logprobs.ref_filled) {
    throw MissingRefLogProbs("reference log-probs not filled for this rollout");
  }
  std::vector<double> kl(mask.size(), 0.0);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) kl[t] = logprobs.old[t] - logprobs.ref[t];
  }
  return kl;
}

AdvantageTensor advantages(const std::vector<double>& rewards,
                           const std::vector<std::vector<double>>& kls,
                           const std::vector<std::vector<std::uint8_t>>& masks, double beta,
                           double norm_epsilon) {
  const std::size_t n = rewards.size();
  if (kls.size() != n || masks.size() != n) throw std::invalid_argument("batch size mismatch");
  if (n == 0) throw std::invalid_argument("advantages on empty batch");

  AdvantageTensor out;
  out.raw.resize(n);
  out.normalized.resize(n);

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mask = masks[i];
    const auto& kl = kls[i];
    if (kl.size() != mask.size()) throw std::invalid_argument("kl/mask length mismatch");
    auto& raw = out.raw[i];
    raw.assign(mask.size(), 0.0);
    double suffix = 0.0;
    for (std::size_t t = mask.size(); t-- > 0;) {
      if (!mask[t]) continue;
      suffix += kl[t];
      raw[t] = rewards[i] - beta * suffix;
      sum += raw[t];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("advantages require at least one unmasked token");

  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < masks[i].size(); ++t) {
      if (masks[i][t]) {
        const double d = out.raw[i][t] - mean;
        sq += d * d;
      }
    }
  }
  const double stddev = std::sqrt(sq / static_cast<double>(count));
  if (stddev < norm_epsilon) {
    throw DegenerateBatch("advantage std " + std::to_string(stddev) + " below threshold");
  }

  out.batch_mean = mean;
  out.batch_std = stddev;
  for (std::size_t i = 0; i < n; ++i) {
    auto& norm = out.normalized[i];
    norm.assign(masks[i].size(), 0.0);
    for (std::size_t t = 0; t < masks[i].size(); ++t) {
      if (masks[i][t]) norm[t] = (out.raw[i][t] - mean) / stddev;
    }
  }
  return out;
}

AdvantageTensor batch_advantages(const RLBatch& batch, double beta, double norm_epsilon) {
  std::vector<std::vector<double>> kls;
  std::vector<std::vector<std::uint8_t>> masks;
  kls.reserve(batch.size());
  masks.reserve(batch.size());
  for (const Rollout* r : batch.rollouts) {
    kls.push_back(token_kl(r->logprobs, r->mask));
    masks.push_back(r->mask);
  }
  return advantages(batch.rewards, kls, masks, beta, norm_epsilon);
}

SurrogateResult masked_surrogate(const ToyPolicy& policy, const RLBatch& batch,
                                 const AdvantageTensor& adv, double clip_epsilon) {
  SurrogateResult res;
  res.gradient = Matrix::Zero(policy.weights().rows(), policy.weights().cols());
  if (batch.empty()) return res;

  const TagSet& tags = policy.vocab().tags();
  const std::vector<std::string> ban_query = {tags.external_open};
  const std::vector<std::string> no_bans;

  // Rollouts with no unmasked token contribute nothing.
  std::size_t effective = 0;
  for (const Rollout* r : batch.rollouts) {
    if (r->unmasked_count() > 0) ++effective;
  }
  if (effective == 0) return res;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Rollout& r = *batch.rollouts[i];
    const std::size_t m_total = r.unmasked_count();
    if (m_total == 0) continue;
    const double weight = 1.0 / (static_cast<double>(effective) * static_cast<double>(m_total));

    std::vector<std::string> context = r.question_tokens;
    context.reserve(context.size() + r.tokens.size());
    std::size_t completed_queries = 0;

    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      if (!r.mask[t]) {
        context.push_back(r.tokens[t]);
        continue;
      }
      const bool banned = completed_queries >= batch.max_retrievals;
      const auto& bans = banned ? ban_query : no_bans;
      const double lp_cur = policy.logprob(context, r.tokens[t], bans);
      const double ratio = std::exp(lp_cur - r.logprobs.old[t]);
      const double a = adv.normalized[i][t];
      const double unclipped = ratio * a;
      const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
      res.objective += weight * std::min(unclipped, clipped);
      if (unclipped <= clipped) {
        // d(ratio * a)/dW = a * ratio * d logp_cur / dW
        policy.add_grad_logprob(context, r.tokens[t], weight * a * ratio, bans, res.gradient);
      }
      if (r.tokens[t] == tags.external_close) ++completed_queries;
      context.push_back(r.tokens[t]);
    }
  }
  return res;
}

LossReport combined_step(ToyPolicy& policy, const RLBatch& batch, const AdvantageTensor* adv,
                         const std::vector<const MemorySample*>& memory_batch,
                         const RLHyperparams& hp) {
  LossReport report;

  Matrix grad = Matrix::Zero(policy.weights().rows(), policy.weights().cols());

  if (!batch.empty()) {
    if (adv == nullptr) throw std::invalid_argument("nonempty RL batch requires advantages");
    const SurrogateResult sur = masked_surrogate(policy, batch, *adv, hp.clip_epsilon);
    report.j_mask = sur.objective;
    grad -= sur.gradient;  // loss = -J
    double reward_sum = 0.0;
    double rc_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      reward_sum += batch.rewards[i];
      rc_sum += static_cast<double>(batch.rollouts[i]->retrieval_count);
    }
    report.reward_mean = reward_sum / static_cast<double>(batch.size());
    report.retrieval_count_mean = rc_sum / static_cast<double>(batch.size());
  }

  if (!memory_batch.empty() && hp.mu != 0.0) {
    const auto [lm, lm_grad] = memorization_loss(policy, memory_batch);
    report.l_m = lm;
    grad += hp.mu * lm_grad;
  }

  report.total_loss = -report.j_mask + hp.mu * report.l_m;
  report.grad_norm = grad.norm();
  if (!std::isfinite(report.total_loss) || !std::isfinite(report.grad_norm)) {
    throw NonFiniteLoss("non-finite loss or gradient; step aborted");
  }

  policy.mutable_weights() -= hp.learning_rate * grad;
  return report;
}

}  // namespace ragtrain
