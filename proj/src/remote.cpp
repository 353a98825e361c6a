#include "ragtrain/remote.hpp"

#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragtrain/prompts.hpp"
#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

namespace {

// "http://host:port" -> (host, port). Path prefixes are not supported.
std::pair<std::string, int> split_url(const std::string& base_url) {
  std::string rest = base_url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  const auto colon = rest.find(':');
  if (colon == std::string::npos) return {rest, 80};
  const std::string host = rest.substr(0, colon);
  std::string port_s = rest.substr(colon + 1);
  while (!port_s.empty() && port_s.back() == '/') port_s.pop_back();
  return {host, std::stoi(port_s)};
}

}  // namespace

RemoteCompletion remote_generate(const RemotePolicyConfig& config, const RemoteRequest& request) {
  const auto [host, port] = split_url(config.base_url);
  httplib::Client client(host, port);
  const auto secs = static_cast<time_t>(config.timeout_seconds);
  const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);

  json body;
  body["prompt"] = request.prompt;
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["max_tokens"] = request.max_tokens;
  body["stop"] = request.stop;
  body["logprobs"] = request.logprobs;

  auto res = client.Post("/generate", body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw RemoteTimeout("generate request timed out against " + config.base_url);
    }
    throw TransportError("cannot reach inference server at " + config.base_url);
  }
  if (res->status != 200) {
    throw TransportError("inference server returned status " + std::to_string(res->status));
  }

  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("text") ||
      !parsed["text"].is_string()) {
    throw MalformedResponse("generate response missing string field 'text'");
  }
  RemoteCompletion out;
  out.text = parsed["text"].get<std::string>();
  if (parsed.contains("logprobs")) {
    if (!parsed["logprobs"].is_array()) {
      throw MalformedResponse("generate response field 'logprobs' must be an array");
    }
    std::vector<double> lps;
    for (const auto& v : parsed["logprobs"]) {
      if (!v.is_number()) throw MalformedResponse("non-numeric logprob entry");
      lps.push_back(v.get<double>());
    }
    out.logprobs = std::move(lps);
  }
  return out;
}

SegmentSample RemotePolicy::sample_segment(const GenContext& ctx, const GenParams& params,
                                           StreamRng& /*rng*/) {
  std::string question = join_tokens(ctx.question_tokens);
  std::string prompt = wrap_system_prompt_ ? prompts::generation_prompt(question) : question;
  if (!ctx.trace_tokens.empty()) {
    prompt += "\n" + join_tokens(ctx.trace_tokens);
  }

  RemoteRequest req;
  req.prompt = std::move(prompt);
  req.temperature = params.temperature;
  req.top_p = params.top_p;
  req.max_tokens = params.max_segment_tokens;
  req.stop = ctx.stop_tokens;
  req.logprobs = true;

  const RemoteCompletion completion = remote_generate(config_, req);

  SegmentSample out;
  // The server cuts at the first matching stop sequence, stop text included.
  out.tokens = tokenize(completion.text, tags_);
  if (completion.logprobs && completion.logprobs->size() == out.tokens.size()) {
    out.logprobs = *completion.logprobs;
    out.logprobs_available = true;
  } else {
    out.logprobs.assign(out.tokens.size(), 0.0);
    out.logprobs_available = false;
  }
  if (out.tokens.size() >= params.max_segment_tokens) out.hit_length_cap = true;
  return out;
}

}  // namespace ragtrain
