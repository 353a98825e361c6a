#include "ragtrain/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "ragtrain/errors.hpp"
#include "ragtrain/prompts.hpp"
#include "ragtrain/remote.hpp"
#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

SFTSample::SFTSample(std::string question_id_in, std::vector<std::string> question_tokens_in,
                     std::vector<std::string> target_tokens_in, std::vector<std::uint8_t> mask_in)
    : question_id(std::move(question_id_in)),
      question_tokens(std::move(question_tokens_in)),
      target_tokens(std::move(target_tokens_in)),
      mask(std::move(mask_in)) {
  if (target_tokens.size() != mask.size()) {
    throw std::invalid_argument("SFTSample mask length mismatch");
  }
  if (unmasked_count() == 0) {
    throw std::invalid_argument("SFTSample requires at least one unmasked token");
  }
}

std::size_t SFTSample::unmasked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<SFTSample> rejection_filter(const std::vector<const Rollout*>& rollouts,
                                        std::string_view golden,
                                        const RejectionThresholds& thresholds,
                                        const RewardConfig& reward_cfg) {
  std::vector<SFTSample> kept;
  for (const Rollout* r : rollouts) {
    if (!r->format_ok) continue;
    if (answer_reward(*r, golden, reward_cfg) != 1.0) continue;
    const ReasoningTrace* trace = r->trace();
    if (!trace) continue;
    if (trace->count(SegmentKind::Internal) < thresholds.min_internal_segments) continue;
    if (trace->count(SegmentKind::ExternalQuery) < thresholds.min_external_segments) continue;
    if (r->unmasked_count() == 0) continue;
    kept.emplace_back(r->question_id, r->question_tokens, r->tokens, r->mask);
  }
  return kept;
}

std::pair<double, Matrix> sft_loss(const ToyPolicy& policy, const SFTSample& sample) {
  std::vector<const SFTSample*> one{&sample};
  return sft_loss_batch(policy, one);
}

std::pair<double, Matrix> sft_loss_batch(const ToyPolicy& policy,
                                         const std::vector<const SFTSample*>& samples) {
  Matrix grad = Matrix::Zero(policy.weights().rows(), policy.weights().cols());
  double loss = 0.0;
  if (samples.empty()) return {loss, grad};
  const std::vector<std::string> no_bans;

  for (const SFTSample* s : samples) {
    const double inv_m = 1.0 / static_cast<double>(s->unmasked_count());
    const double sample_weight = 1.0 / static_cast<double>(samples.size());
    std::vector<std::string> context = s->question_tokens;
    context.reserve(context.size() + s->target_tokens.size());
    for (std::size_t t = 0; t < s->target_tokens.size(); ++t) {
      if (s->mask[t]) {
        loss -= sample_weight * inv_m * policy.logprob(context, s->target_tokens[t], no_bans);
        policy.add_grad_logprob(context, s->target_tokens[t], -sample_weight * inv_m, no_bans,
                                grad);
      }
      context.push_back(s->target_tokens[t]);
    }
  }
  return {loss, grad};
}

SFTRunReport run_sft(ToyPolicy& policy, const std::vector<SFTSample>& samples, std::size_t epochs,
                     std::size_t batch_size, double learning_rate, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("run_sft requires a nonempty sample list");
  if (batch_size == 0) throw std::invalid_argument("run_sft requires batch_size >= 1");

  auto average_loss = [&]() {
    std::vector<const SFTSample*> all;
    all.reserve(samples.size());
    for (const auto& s : samples) all.push_back(&s);
    return sft_loss_batch(policy, all).first;
  };

  SFTRunReport report;
  report.epoch_losses.push_back(average_loss());
  double lr = learning_rate;

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const Matrix snapshot = policy.weights();
    StreamRng rng = StreamRng::derive(seed, "sft_epoch", epoch);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<const SFTSample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
        batch.push_back(&samples[order[k]]);
      }
      const auto [loss, grad] = sft_loss_batch(policy, batch);
      if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite SFT loss");
      policy.mutable_weights() -= lr * grad;
    }
    const double avg = average_loss();
    if (avg > report.epoch_losses.back() + 1e-6) {
      // Regressed epoch: restore and retry smaller.
      policy.mutable_weights() = snapshot;
      lr *= 0.5;
      report.epoch_losses.push_back(report.epoch_losses.back());
      if (lr < 1e-12) break;
      continue;
    }
    report.epoch_losses.push_back(avg);
  }
  report.final_learning_rate = lr;
  return report;
}

std::vector<std::pair<std::string, std::string>> extract_documents(const Rollout& rollout) {
  std::vector<std::pair<std::string, std::string>> out;
  const ReasoningTrace* trace = rollout.trace();
  if (!trace) return out;
  for (std::size_t i = 0; i + 1 < trace->segments.size(); ++i) {
    if (trace->segments[i].kind == SegmentKind::ExternalQuery &&
        trace->segments[i + 1].kind == SegmentKind::Document) {
      out.emplace_back(trace->segments[i].text, trace->segments[i + 1].text);
    }
  }
  return out;
}

std::string knowledge_matrix_block(
    const std::vector<std::pair<std::string, std::string>>& docs) {
  std::string block;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) block += '\n';
    block += docs[i].second;
  }
  return block;
}

namespace {

// Splits a formatted document payload "(1) title — text (2) title — text"
// into per-entry strings.
std::vector<std::string> split_document_entries(std::string_view payload) {
  const auto words = split_whitespace(payload);
  std::vector<std::string> entries;
  std::vector<std::string> current;
  auto is_entry_marker = [](const std::string& w) {
    if (w.size() < 3 || w.front() != '(' || w.back() != ')') return false;
    for (std::size_t i = 1; i + 1 < w.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(w[i]))) return false;
    }
    return true;
  };
  for (const auto& w : words) {
    if (is_entry_marker(w) && !current.empty()) {
      entries.push_back(join_tokens(current));
      current.clear();
    }
    current.push_back(w);
  }
  if (!current.empty()) entries.push_back(join_tokens(current));
  return entries;
}

// "(1) title — text" -> "text"; the whole entry when no separator exists.
std::string entry_fact_text(const std::string& entry) {
  const auto words = split_whitespace(entry);
  const std::string dash = "—";
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == dash) {
      std::vector<std::string> tail(words.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                    words.end());
      return join_tokens(tail);
    }
  }
  return entry;
}

bool trace_is_retrieval_free(const ReasoningTrace& trace) {
  return trace.count(SegmentKind::ExternalQuery) == 0 &&
         trace.count(SegmentKind::Document) == 0;
}

}  // namespace

RewriteOutcome rewrite(const RewriterConfig& config, std::string_view question,
                       const std::vector<std::pair<std::string, std::string>>& documents,
                       std::string_view answer, const TagSet& tags) {
  RewriteOutcome out;
  if (documents.empty()) {
    out.error = "rewrite requires at least one document";
    return out;
  }

  if (config.mode == RewriterConfig::Mode::Template) {
    TraceBuilder builder(tags);
    for (const auto& [query, payload] : documents) {
      const auto entries = split_document_entries(payload);
      std::string fact;
      for (const auto& e : entries) {
        if (cover_exact_match(e, answer)) {
          fact = entry_fact_text(e);
          break;
        }
      }
      if (fact.empty() && !entries.empty()) fact = entry_fact_text(entries.front());
      if (fact.empty()) fact = payload;
      builder.internal(fact);
    }
    builder.answer(answer);
    out.trace = std::move(builder).build();
    return out;
  }

  // Remote mode: ask the rewriting model, then re-parse its output.
  RemotePolicyConfig remote_cfg;
  remote_cfg.base_url = config.remote_base_url;
  remote_cfg.timeout_seconds = config.timeout_seconds;
  RemoteRequest req;
  req.prompt = prompts::rewrite_prompt(knowledge_matrix_block(documents), question);
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.max_tokens = 512;
  try {
    const RemoteCompletion completion = remote_generate(remote_cfg, req);
    ParseResult parsed = parse(completion.text, tags);
    if (!parsed.ok()) {
      out.error = "rewrite output failed to parse: " + std::string(to_string(parsed.error->kind));
      return out;
    }
    if (!trace_is_retrieval_free(*parsed.trace)) {
      out.error = "rewrite output still contains retrieval segments";
      return out;
    }
    out.trace = std::move(*parsed.trace);
    return out;
  } catch (const RemoteError& e) {
    out.error = std::string("rewrite request failed: ") + e.what();
    return out;
  }
}

std::vector<MemorySample> build_memory_dataset(const std::vector<RolloutGroup>& groups,
                                               const RewriterConfig& config, const TagSet& tags,
                                               const RewardConfig& reward_cfg) {
  std::vector<MemorySample> fresh;
  for (const auto& group : groups) {
    for (std::size_t ri = 0; ri < group.rollouts.size(); ++ri) {
      const Rollout& r = group.rollouts[ri];
      if (!r.format_ok || r.retrieval_count < 1) continue;
      if (answer_reward(r, group.golden_answer, reward_cfg) != 1.0) continue;
      const ReasoningTrace* trace = r.trace();
      if (!trace || !trace->final_answer) continue;
      const auto docs = extract_documents(r);
      if (docs.empty()) continue;
      RewriteOutcome rewritten = rewrite(config, group.question, docs, *trace->final_answer, tags);
      if (!rewritten.ok()) continue;

      // Re-validate: retrieval-free and still correct for the golden answer.
      const ReasoningTrace& cand = *rewritten.trace;
      if (!trace_is_retrieval_free(cand)) continue;
      if (!cand.final_answer) continue;
      if (split_whitespace(*cand.final_answer).size() > reward_cfg.max_answer_words) continue;
      if (!cover_exact_match(*cand.final_answer, group.golden_answer)) continue;

      MemorySample sample;
      sample.question_id = group.question_id;
      sample.question_tokens = tokenize(group.question, tags);
      sample.trace_tokens = cand.tokens;
      sample.source_rollout = group.question_id + "#" + std::to_string(ri);
      fresh.push_back(std::move(sample));
    }
  }

  std::vector<MemorySample> deduped;
  merge_memory_samples(deduped, fresh);
  return deduped;
}

void merge_memory_samples(std::vector<MemorySample>& dataset,
                          const std::vector<MemorySample>& fresh) {
  for (const auto& sample : fresh) {
    auto it = std::find_if(dataset.begin(), dataset.end(), [&](const MemorySample& existing) {
      return existing.question_id == sample.question_id;
    });
    if (it == dataset.end()) {
      dataset.push_back(sample);
    } else if (sample.trace_tokens.size() < it->trace_tokens.size()) {
      *it = sample;  // shortest rewrite wins
    }
  }
}

std::pair<double, Matrix> memorization_loss(const ToyPolicy& policy,
                                            const std::vector<const MemorySample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("memorization_loss requires samples");
  Matrix grad = Matrix::Zero(policy.weights().rows(), policy.weights().cols());
  double total_logprob = 0.0;
  std::size_t total_tokens = 0;
  for (const MemorySample* s : samples) total_tokens += s->trace_tokens.size();
  if (total_tokens == 0) throw std::invalid_argument("memorization_loss on empty traces");

  const double inv = 1.0 / static_cast<double>(total_tokens);
  const std::vector<std::string> no_bans;
  for (const MemorySample* s : samples) {
    std::vector<std::string> context = s->question_tokens;
    context.reserve(context.size() + s->trace_tokens.size());
    for (const auto& token : s->trace_tokens) {
      total_logprob += policy.logprob(context, token, no_bans);
      policy.add_grad_logprob(context, token, -inv, no_bans, grad);
      context.push_back(token);
    }
  }
  return {-inv * total_logprob, grad};
}

double memory_sample_logprob(const ToyPolicy& policy, const MemorySample& sample) {
  double total = 0.0;
  std::vector<std::string> context = sample.question_tokens;
  const std::vector<std::string> no_bans;
  for (const auto& token : sample.trace_tokens) {
    total += policy.logprob(context, token, no_bans);
    context.push_back(token);
  }
  return total;
}

std::string memory_samples_to_jsonl(const std::vector<MemorySample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json rec;
    rec["question_id"] = s.question_id;
    rec["question"] = join_tokens(s.question_tokens);
    rec["text"] = join_tokens(s.trace_tokens);
    rec["source_rollout"] = s.source_rollout;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<MemorySample> memory_samples_from_jsonl(std::string_view jsonl, const TagSet& tags) {
  std::vector<MemorySample> out;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json rec = json::parse(line);
    MemorySample s;
    s.question_id = rec.at("question_id").get<std::string>();
    s.question_tokens = tokenize(rec.at("question").get<std::string>(), tags);
    s.trace_tokens = tokenize(rec.at("text").get<std::string>(), tags);
    s.source_rollout = rec.value("source_rollout", "");
    out.push_back(std::move(s));
  }
  return out;
}

std::string sft_samples_to_jsonl(const std::vector<SFTSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json rec;
    rec["question_id"] = s.question_id;
    rec["question"] = join_tokens(s.question_tokens);
    rec["text"] = join_tokens(s.target_tokens);
    json rle = json::array();
    for (const auto& [bit, run] : mask_rle(s.mask)) rle.push_back({bit, run});
    rec["mask_rle"] = std::move(rle);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<SFTSample> sft_samples_from_jsonl(std::string_view jsonl, const TagSet& tags) {
  std::vector<SFTSample> out;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json rec = json::parse(line);
    std::vector<std::pair<int, std::size_t>> rle;
    for (const auto& pair : rec.at("mask_rle")) {
      rle.emplace_back(pair.at(0).get<int>(), pair.at(1).get<std::size_t>());
    }
    out.emplace_back(rec.at("question_id").get<std::string>(),
                     tokenize(rec.at("question").get<std::string>(), tags),
                     tokenize(rec.at("text").get<std::string>(), tags), mask_from_rle(rle));
  }
  return out;
}

}  // namespace ragtrain
