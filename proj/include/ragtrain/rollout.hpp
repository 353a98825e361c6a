#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ragtrain/corpus.hpp"
#include "ragtrain/policy.hpp"
#include "ragtrain/rng.hpp"
#include "ragtrain/trace.hpp"

namespace ragtrain {

/// Retrieval backend used inside rollouts. The corpus-backed client is the
/// shipped implementation; the web client exists as an interface with a
/// canned mock only.
class SearchClient {
 public:
  virtual ~SearchClient() = default;
  virtual std::vector<ScoredPassage> search(std::string_view query, std::size_t k) = 0;
};

class CorpusSearchClient : public SearchClient {
 public:
  explicit CorpusSearchClient(const Corpus& corpus) : corpus_(&corpus) {}
  std::vector<ScoredPassage> search(std::string_view query, std::size_t k) override {
    return corpus_->retrieve(query, k);
  }

 private:
  const Corpus* corpus_;
};

/// Web-search stand-in: canned query -> passages. No network anywhere.
class MockWebSearch : public SearchClient {
 public:
  void add_result(std::string query, Passage passage);
  std::vector<ScoredPassage> search(std::string_view query, std::size_t k) override;

 private:
  std::deque<Passage> storage_;
  std::map<std::string, std::vector<const Passage*>, std::less<>> canned_;
};

struct RolloutParams {
  GenParams gen;
  std::size_t max_retrievals = 8;
  std::size_t retrieve_k = 5;
};

/// One sampled trace plus everything the trainer needs: the token-level
/// mask (0 exactly on injected document spans), sampling log-probs, and
/// format/truncation flags.
struct Rollout {
  std::string question_id;
  std::vector<std::string> question_tokens;
  std::vector<std::string> tokens;
  std::vector<std::uint8_t> mask;
  TokenLogProbs logprobs;
  std::size_t retrieval_count = 0;
  bool format_ok = false;
  bool truncated = false;
  bool rl_eligible = true;
  ParseResult parsed;

  std::string text() const;
  const ReasoningTrace* trace() const { return parsed.ok() ? &*parsed.trace : nullptr; }
  std::size_t unmasked_count() const;
};

struct RolloutGroup {
  std::string question_id;
  std::string question;
  std::string golden_answer;
  std::vector<Rollout> rollouts;
};

/// Runs the interleaved generation loop: the policy samples until it closes
/// an external query, the engine retrieves and injects a document segment
/// with mask 0 and sentinel log-probs, generation resumes. Stops at a
/// complete boxed answer, the end-of-trace symbol, a length cap, or when a
/// further query is attempted past max_retrievals. Retrieval failures
/// inject a "no results" document and continue.
Rollout run_rollout(Policy& policy, SearchClient& search, std::string_view question_id,
                    std::string_view question, const RolloutParams& params, const TagSet& tags,
                    StreamRng rng);

/// G independent rollouts with per-rollout RNG streams derived from
/// (seed, label, question id, rollout index). Requires G >= 2.
RolloutGroup run_group(Policy& policy, SearchClient& search, std::string_view question_id,
                       std::string_view question, std::string_view golden_answer, std::size_t G,
                       const RolloutParams& params, const TagSet& tags, std::uint64_t seed,
                       std::string_view label);

/// Log-probs of a finished trace under `policy`, replaying the generation
/// constraints (the external-query ban past max_retrievals). Masked
/// positions get the sentinel 0.
std::vector<double> score_trace(const Policy& policy,
                                const std::vector<std::string>& question_tokens,
                                const std::vector<std::string>& tokens,
                                const std::vector<std::uint8_t>& mask, const TagSet& tags,
                                std::size_t max_retrievals);

/// Scores the rollout under the (frozen) reference policy and stores the
/// result in logprobs.ref.
void fill_ref_logprobs(Rollout& rollout, const Policy& ref_policy, const TagSet& tags,
                       std::size_t max_retrievals);

/// Serialization for `rollout --dump`: one JSON record per rollout with raw
/// text, run-length-encoded mask, sampling log-probs and counts.
std::string rollout_to_json(const Rollout& r);

/// Mask run-length encoding: list of [bit, run] pairs.
std::vector<std::pair<int, std::size_t>> mask_rle(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> mask_from_rle(const std::vector<std::pair<int, std::size_t>>& rle);

}  // namespace ragtrain
