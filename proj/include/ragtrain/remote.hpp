#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ragtrain/policy.hpp"

namespace ragtrain {

struct RemoteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TransportError : RemoteError {
  using RemoteError::RemoteError;
};
struct RemoteTimeout : RemoteError {
  using RemoteError::RemoteError;
};
struct MalformedResponse : RemoteError {
  using RemoteError::RemoteError;
};

/// Inference-server endpoint. See docs/wire_schema.md for the request and
/// response field contract.
struct RemotePolicyConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8089
  double timeout_seconds = 30.0;
  std::size_t max_in_flight = 4;
};

struct RemoteRequest {
  std::string prompt;
  double temperature = 1.0;
  double top_p = 0.95;
  std::size_t max_tokens = 256;
  std::vector<std::string> stop;
  bool logprobs = false;
};

struct RemoteCompletion {
  std::string text;
  std::optional<std::vector<double>> logprobs;  // per generated token
};

/// POST {base_url}/generate with a JSON body; throws TransportError,
/// RemoteTimeout or MalformedResponse.
RemoteCompletion remote_generate(const RemotePolicyConfig& config, const RemoteRequest& request);

/// Drop-in Policy backed by an inference server. Rollouts whose server
/// omits log-probs are flagged ineligible for RL updates; the policy cannot
/// score tokens, so it is evaluation-only either way.
class RemotePolicy : public Policy {
 public:
  RemotePolicy(RemotePolicyConfig config, TagSet tags, bool wrap_system_prompt = true)
      : config_(std::move(config)), tags_(std::move(tags)), wrap_system_prompt_(wrap_system_prompt) {}

  SegmentSample sample_segment(const GenContext& ctx, const GenParams& params,
                               StreamRng& rng) override;
  std::optional<double> score_token(const std::vector<std::string>&, std::string_view,
                                    const std::vector<std::string>&) const override {
    return std::nullopt;
  }
  bool can_score() const override { return false; }

 private:
  RemotePolicyConfig config_;
  TagSet tags_;
  bool wrap_system_prompt_;
};

}  // namespace ragtrain
