#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragtrain/math.hpp"
#include "ragtrain/policy.hpp"
#include "ragtrain/rewards.hpp"
#include "ragtrain/rollout.hpp"

namespace ragtrain {

/// Supervised sample: question, target token sequence, and a mask that is 0
/// exactly over injected document spans. Construction rejects samples with
/// no unmasked token.
struct SFTSample {
  std::string question_id;
  std::vector<std::string> question_tokens;
  std::vector<std::string> target_tokens;
  std::vector<std::uint8_t> mask;

  SFTSample(std::string question_id, std::vector<std::string> question_tokens,
            std::vector<std::string> target_tokens, std::vector<std::uint8_t> mask);

  std::size_t unmasked_count() const;
};

/// Validated retrieval-free rewrite destined for the memorization dataset:
/// zero external queries, boxed answer still correct for the original
/// golden answer.
struct MemorySample {
  std::string question_id;
  std::vector<std::string> question_tokens;
  std::vector<std::string> trace_tokens;
  std::string source_rollout;
};

struct RewriterConfig {
  enum class Mode { Template, Remote };
  Mode mode = Mode::Template;
  std::string remote_base_url;  // remote mode only
  double timeout_seconds = 10.0;
};

struct RejectionThresholds {
  std::size_t min_internal_segments = 1;
  std::size_t min_external_segments = 1;
};

/// Keeps format-valid, answer-correct rollouts containing at least the
/// required internal and external segments, converted to masked SFT
/// samples.
std::vector<SFTSample> rejection_filter(const std::vector<const Rollout*>& rollouts,
                                        std::string_view golden,
                                        const RejectionThresholds& thresholds = {},
                                        const RewardConfig& reward_cfg = {});

/// Masked cross-entropy of one sample: -(sum M)^-1 * sum_i M_i * log
/// p(y_i | x, y_<i), with the gradient of the loss w.r.t. the weights.
std::pair<double, Matrix> sft_loss(const ToyPolicy& policy, const SFTSample& sample);

/// Mean sft_loss over a batch of samples, with gradient.
std::pair<double, Matrix> sft_loss_batch(const ToyPolicy& policy,
                                         const std::vector<const SFTSample*>& samples);

struct SFTRunReport {
  std::vector<double> epoch_losses;  // index 0 = pre-training average
  double final_learning_rate = 0.0;
};

/// Minibatch gradient descent on the masked SFT loss. The average training
/// loss is kept non-increasing across epochs (backtracking halves the rate
/// and retries an epoch that regressed). Requires a nonempty sample list.
SFTRunReport run_sft(ToyPolicy& policy, const std::vector<SFTSample>& samples, std::size_t epochs,
                     std::size_t batch_size, double learning_rate, std::uint64_t seed);

/// Ordered (query, document payload) pairs, one per external query of a
/// format-valid rollout.
std::vector<std::pair<std::string, std::string>> extract_documents(const Rollout& rollout);

/// Renders extracted documents as the knowledge block inlined into the
/// rewrite prompt: one payload per line.
std::string knowledge_matrix_block(const std::vector<std::pair<std::string, std::string>>& docs);

struct RewriteOutcome {
  std::optional<ReasoningTrace> trace;
  std::string error;  // set when trace is absent

  bool ok() const { return trace.has_value(); }
};

/// Produces a candidate retrieval-free trace answering the question from
/// the given documents. Template mode deterministically embeds each
/// document's answering fact in an internal segment and boxes the source
/// rollout's answer; remote mode asks an inference server with the rewrite
/// prompt. Candidates containing external or document segments fail.
RewriteOutcome rewrite(const RewriterConfig& config, std::string_view question,
                       const std::vector<std::pair<std::string, std::string>>& documents,
                       std::string_view answer, const TagSet& tags);

/// Full pipeline over scored groups: extract, rewrite, re-validate, keep
/// survivors, deduplicate by question (shortest rewrite wins). Failures are
/// skipped.
std::vector<MemorySample> build_memory_dataset(const std::vector<RolloutGroup>& groups,
                                               const RewriterConfig& config, const TagSet& tags,
                                               const RewardConfig& reward_cfg = {});

/// Merge new samples into an accumulated dataset with the same dedup rule.
void merge_memory_samples(std::vector<MemorySample>& dataset,
                          const std::vector<MemorySample>& fresh);

/// Token-weighted NLL over retrieval-free samples:
/// -(sum |o_i|)^-1 * sum_i sum_t log p(o_{i,t} | q_i, o_{i,<t}).
std::pair<double, Matrix> memorization_loss(const ToyPolicy& policy,
                                            const std::vector<const MemorySample*>& samples);

/// Total log-probability of one memory sample under the policy (no
/// gradient); used by internalization probes.
double memory_sample_logprob(const ToyPolicy& policy, const MemorySample& sample);

// Newline-delimited persistence.
std::string memory_samples_to_jsonl(const std::vector<MemorySample>& samples);
std::vector<MemorySample> memory_samples_from_jsonl(std::string_view jsonl, const TagSet& tags);
std::string sft_samples_to_jsonl(const std::vector<SFTSample>& samples);
std::vector<SFTSample> sft_samples_from_jsonl(std::string_view jsonl, const TagSet& tags);

}  // namespace ragtrain
