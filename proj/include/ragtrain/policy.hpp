#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragtrain/math.hpp"
#include "ragtrain/rng.hpp"
#include "ragtrain/trace.hpp"

namespace ragtrain {

struct UnknownTokenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordered symbol list: the eight markup tokens, a reserved end-of-trace
/// symbol, then world words. Size is at least 8 and entries are unique.
class Vocabulary {
 public:
  static constexpr std::string_view kEndOfTrace = "<|end_of_trace|>";

  static Vocabulary build(const TagSet& tags, std::vector<std::string> words);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& at(std::size_t i) const { return tokens_[i]; }
  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t index_of(std::string_view token) const;  // throws UnknownTokenError
  bool has(std::string_view token) const { return find(token).has_value(); }
  std::size_t eot_index() const { return eot_index_; }
  const TagSet& tags() const { return tags_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t eot_index_ = 0;
  TagSet tags_;
};

/// Context-feature layout: one-hot of the last token, token counts over the
/// last `window` tokens, one-hot of the currently open segment kind, bias.
struct FeatureSpec {
  std::size_t window = 4;

  static constexpr std::size_t kSegmentKinds = 5;

  std::size_t dimension(std::size_t vocab_size) const {
    return 2 * vocab_size + kSegmentKinds + 1;
  }
};

/// Segment kind the next token would be generated into, from the open-tag
/// state of the context. Think outside any tag.
SegmentKind segment_state(const std::vector<std::string>& context, const TagSet& tags);

/// Feature vector for a token prefix. An empty context activates only the
/// bias coordinate.
Vector features(const std::vector<std::string>& context, const Vocabulary& vocab,
                const FeatureSpec& spec);

struct GenParams {
  double temperature = 1.0;
  double top_p = 0.95;
  bool greedy = false;  // argmax decoding; temperature/top_p ignored
  std::size_t max_segment_tokens = 64;
  std::size_t max_trace_tokens = 1024;
};

/// One sampling call: tokens up to and including a stop token, with
/// log-probs recorded from the sampling distribution before any top-p
/// truncation (banned tokens are excluded before normalization).
struct SegmentSample {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  bool logprobs_available = true;
  bool hit_length_cap = false;
};

/// Generation-time context handed to a policy: the question, everything in
/// the trace so far (injected documents included), and how many of those
/// trace tokens the policy itself produced.
struct GenContext {
  const std::vector<std::string>& question_tokens;
  const std::vector<std::string>& trace_tokens;
  std::size_t model_token_count = 0;
  const std::vector<std::string>& stop_tokens;
  const std::vector<std::string>& banned_tokens;
};

/// Generative-policy contract: sample continuation tokens, and score given
/// tokens when the implementation can produce densities.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual SegmentSample sample_segment(const GenContext& ctx, const GenParams& params,
                                       StreamRng& rng) = 0;

  /// log p(token | context) under this policy with the given tokens banned;
  /// nullopt when the policy cannot score.
  virtual std::optional<double> score_token(const std::vector<std::string>& context,
                                            std::string_view token,
                                            const std::vector<std::string>& banned_tokens) const = 0;

  virtual bool can_score() const = 0;
};

/// Autoregressive log-linear token model over explicit context features.
/// Zero weights give the uniform policy. score and sample share one logit
/// path.
class ToyPolicy : public Policy {
 public:
  ToyPolicy(Vocabulary vocab, FeatureSpec spec);
  ToyPolicy(Vocabulary vocab, FeatureSpec spec, Matrix weights);

  const Vocabulary& vocab() const { return vocab_; }
  const FeatureSpec& feature_spec() const { return spec_; }
  const Matrix& weights() const { return weights_; }
  Matrix& mutable_weights() { return weights_; }

  Vector logits(const std::vector<std::string>& context) const;

  /// Full log-softmax over the vocabulary; banned tokens get -inf and the
  /// rest renormalize.
  Vector log_prob_vector(const std::vector<std::string>& context,
                         const std::vector<std::string>& banned_tokens = {}) const;

  double logprob(const std::vector<std::string>& context, std::string_view token,
                 const std::vector<std::string>& banned_tokens = {}) const;

  /// d log p(token|context) / dW = (onehot(token) - p(.|context)) outer f(context).
  Matrix grad_logprob(const std::vector<std::string>& context, std::string_view token,
                      const std::vector<std::string>& banned_tokens = {}) const;

  /// grad += coef * d log p(token|context) / dW, as rank-1 updates in place.
  void add_grad_logprob(const std::vector<std::string>& context, std::string_view token,
                        double coef, const std::vector<std::string>& banned_tokens,
                        Matrix& grad) const;

  SegmentSample sample_segment(const GenContext& ctx, const GenParams& params,
                               StreamRng& rng) override;
  std::optional<double> score_token(const std::vector<std::string>& context,
                                    std::string_view token,
                                    const std::vector<std::string>& banned_tokens) const override;
  bool can_score() const override { return true; }

 private:
  Vector banned_mask(const std::vector<std::string>& banned_tokens) const;

  Vocabulary vocab_;
  FeatureSpec spec_;
  Matrix weights_;  // vocab_size x feature_dim
};

/// Replays a fixed token script; log-prob 0 for every emitted token. The
/// cursor is the caller-supplied count of model-generated tokens, so one
/// shared instance serves any number of concurrent rollouts.
class ScriptedPolicy : public Policy {
 public:
  ScriptedPolicy(std::vector<std::string> script, const TagSet& tags);

  SegmentSample sample_segment(const GenContext& ctx, const GenParams& params,
                               StreamRng& rng) override;
  std::optional<double> score_token(const std::vector<std::string>&, std::string_view,
                                    const std::vector<std::string>&) const override {
    return 0.0;
  }
  bool can_score() const override { return true; }

 private:
  std::vector<std::string> script_;
  std::string eot_;
};

/// Aligned per-token log-prob triples for one trace. Masked (injected)
/// positions carry the sentinel 0 in all three rows and are never read by
/// any loss.
struct TokenLogProbs {
  std::vector<std::string> tokens;
  std::vector<double> current;
  std::vector<double> old;
  std::vector<double> ref;
  bool ref_filled = false;

  std::size_t size() const { return tokens.size(); }
};

}  // namespace ragtrain
