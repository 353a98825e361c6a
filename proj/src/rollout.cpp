#include "ragtrain/rollout.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

void MockWebSearch::add_result(std::string query, Passage passage) {
  storage_.push_back(std::move(passage));
  canned_[std::move(query)].push_back(&storage_.back());
}

std::vector<ScoredPassage> MockWebSearch::search(std::string_view query, std::size_t k) {
  std::vector<ScoredPassage> out;
  const auto it = canned_.find(query);
  if (it == canned_.end()) return out;
  for (const Passage* p : it->second) {
    if (out.size() >= k) break;
    out.push_back(ScoredPassage{p, 1.0});
  }
  return out;
}

std::string Rollout::text() const { return join_tokens(tokens); }

std::size_t Rollout::unmasked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

namespace {

constexpr double kMaskedSentinel = 0.0;
constexpr std::string_view kNoResultsText = "no results found .";

void attach_provenance(ParseResult& parsed, const std::vector<std::vector<std::string>>& ids) {
  if (!parsed.ok()) return;
  std::size_t doc = 0;
  for (auto& seg : parsed.trace->segments) {
    if (seg.kind == SegmentKind::Document && doc < ids.size()) {
      seg.document_ids = ids[doc++];
    }
  }
}

}  // namespace

Rollout run_rollout(Policy& policy, SearchClient& search, std::string_view question_id,
                    std::string_view question, const RolloutParams& params, const TagSet& tags,
                    StreamRng rng) {
  Rollout r;
  r.question_id = std::string(question_id);
  r.question_tokens = tokenize(question, tags);

  const std::string eot(Vocabulary::kEndOfTrace);
  const std::vector<std::string> stop_tokens = {tags.external_close, tags.answer_close, eot};
  const std::vector<std::string> ban_query = {tags.external_open};
  const std::vector<std::string> no_bans;

  std::vector<std::vector<std::string>> provenance;
  std::size_t model_tokens = 0;
  SegmentKind state = SegmentKind::Think;

  auto push_model_token = [&](const std::string& tok, double logp) {
    r.tokens.push_back(tok);
    r.mask.push_back(1);
    r.logprobs.tokens.push_back(tok);
    r.logprobs.current.push_back(logp);
    r.logprobs.old.push_back(logp);
    r.logprobs.ref.push_back(kMaskedSentinel);
    ++model_tokens;
    if (tok == tags.internal_open) state = SegmentKind::Internal;
    else if (tok == tags.external_open) state = SegmentKind::ExternalQuery;
    else if (tok == tags.document_open) state = SegmentKind::Document;
    else if (tok == tags.answer_open) state = SegmentKind::FinalAnswer;
    else if (tok == tags.internal_close || tok == tags.external_close ||
             tok == tags.document_close || tok == tags.answer_close)
      state = SegmentKind::Think;
  };

  auto inject_document = [&](const std::vector<ScoredPassage>& results) {
    std::string payload = results.empty() ? std::string(kNoResultsText)
                                          : format_document_entries(results);
    std::vector<std::string> ids;
    for (const auto& sp : results) ids.push_back(sp.passage->id);
    provenance.push_back(std::move(ids));
    std::vector<std::string> doc_tokens;
    doc_tokens.push_back(tags.document_open);
    for (auto& w : split_whitespace(payload)) doc_tokens.push_back(std::move(w));
    doc_tokens.push_back(tags.document_close);
    for (const auto& tok : doc_tokens) {
      r.tokens.push_back(tok);
      r.mask.push_back(0);
      r.logprobs.tokens.push_back(tok);
      r.logprobs.current.push_back(kMaskedSentinel);
      r.logprobs.old.push_back(kMaskedSentinel);
      r.logprobs.ref.push_back(kMaskedSentinel);
    }
  };

  bool done = false;
  while (!done) {
    if (r.tokens.size() >= params.gen.max_trace_tokens) {
      r.truncated = true;
      break;
    }
    const bool banned = r.retrieval_count >= params.max_retrievals;
    GenParams gen = params.gen;
    gen.max_segment_tokens =
        std::min(gen.max_segment_tokens, params.gen.max_trace_tokens - r.tokens.size());

    const GenContext ctx{r.question_tokens, r.tokens, model_tokens, stop_tokens,
                         banned ? ban_query : no_bans};
    SegmentSample seg = policy.sample_segment(ctx, gen, rng);
    if (!seg.logprobs_available) r.rl_eligible = false;

    for (std::size_t i = 0; i < seg.tokens.size(); ++i) {
      const std::string& tok = seg.tokens[i];
      // A query attempted past the cap halts generation; scripted policies
      // do not consult the sampling ban.
      if (banned && tok == tags.external_open) {
        r.truncated = true;
        done = true;
        break;
      }
      if (tok == eot) {
        done = true;
        break;
      }
      const double lp = seg.logprobs_available && i < seg.logprobs.size() ? seg.logprobs[i] : 0.0;

      if (tok == tags.external_close && state == SegmentKind::ExternalQuery) {
        // Complete query: find its payload, retrieve, inject.
        std::size_t open_at = r.tokens.size();
        while (open_at > 0 && r.tokens[open_at - 1] != tags.external_open) --open_at;
        std::vector<std::string> query_words(r.tokens.begin() + static_cast<std::ptrdiff_t>(open_at),
                                             r.tokens.end());
        push_model_token(tok, lp);
        ++r.retrieval_count;
        std::vector<ScoredPassage> results;
        try {
          results = search.search(join_tokens(query_words), params.retrieve_k);
        } catch (const CorpusError&) {
          results.clear();
        }
        inject_document(results);
        break;  // resume sampling with the document in context
      }

      push_model_token(tok, lp);

      if (tok == tags.answer_close) {
        // Complete boxed answer ends the trace; a stray close can only make
        // the trace invalid, so generation stops either way.
        done = true;
        break;
      }
      if (tok == tags.external_close) {
        // Stray close outside a query.
        done = true;
        break;
      }
    }
    if (seg.hit_length_cap) {
      r.truncated = true;
      break;
    }
  }
  r.parsed = parse(r.text(), tags);
  r.format_ok = validate_format(r.parsed);
  attach_provenance(r.parsed, provenance);
  if (r.parsed.ok()) r.parsed.trace->question = std::string(question);
  return r;
}

RolloutGroup run_group(Policy& policy, SearchClient& search, std::string_view question_id,
                       std::string_view question, std::string_view golden_answer, std::size_t G,
                       const RolloutParams& params, const TagSet& tags, std::uint64_t seed,
                       std::string_view label) {
  if (G < 2) throw std::invalid_argument("run_group requires G >= 2");
  RolloutGroup group;
  group.question_id = std::string(question_id);
  group.question = std::string(question);
  group.golden_answer = std::string(golden_answer);
  const std::uint64_t qkey = StreamRng::derive_key(seed, question_id);
  for (std::size_t i = 0; i < G; ++i) {
    StreamRng rng = StreamRng::derive(qkey, label, i);
    group.rollouts.push_back(
        run_rollout(policy, search, question_id, question, params, tags, std::move(rng)));
  }
  return group;
}

std::vector<double> score_trace(const Policy& policy,
                                const std::vector<std::string>& question_tokens,
                                const std::vector<std::string>& tokens,
                                const std::vector<std::uint8_t>& mask, const TagSet& tags,
                                std::size_t max_retrievals) {
  if (tokens.size() != mask.size()) throw std::invalid_argument("mask/token length mismatch");
  std::vector<double> out(tokens.size(), 0.0);
  std::vector<std::string> context = question_tokens;
  context.reserve(question_tokens.size() + tokens.size());
  const std::vector<std::string> ban_query = {tags.external_open};
  const std::vector<std::string> no_bans;
  std::size_t completed_queries = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (mask[t]) {
      const bool banned = completed_queries >= max_retrievals;
      const auto lp = policy.score_token(context, tokens[t], banned ? ban_query : no_bans);
      if (!lp) throw std::runtime_error("policy cannot score tokens");
      out[t] = *lp;
      if (tokens[t] == tags.external_close) ++completed_queries;
    }
    context.push_back(tokens[t]);
  }
  return out;
}

void fill_ref_logprobs(Rollout& rollout, const Policy& ref_policy, const TagSet& tags,
                       std::size_t max_retrievals) {
  rollout.logprobs.ref =
      score_trace(ref_policy, rollout.question_tokens, rollout.tokens, rollout.mask, tags,
                  max_retrievals);
  rollout.logprobs.ref_filled = true;
}

std::vector<std::pair<int, std::size_t>> mask_rle(const std::vector<std::uint8_t>& mask) {
  std::vector<std::pair<int, std::size_t>> rle;
  for (const auto bit : mask) {
    if (!rle.empty() && rle.back().first == static_cast<int>(bit)) {
      ++rle.back().second;
    } else {
      rle.emplace_back(static_cast<int>(bit), 1);
    }
  }
  return rle;
}

std::vector<std::uint8_t> mask_from_rle(const std::vector<std::pair<int, std::size_t>>& rle) {
  std::vector<std::uint8_t> mask;
  for (const auto& [bit, run] : rle) {
    mask.insert(mask.end(), run, static_cast<std::uint8_t>(bit));
  }
  return mask;
}

std::string rollout_to_json(const Rollout& r) {
  json rec;
  rec["question_id"] = r.question_id;
  rec["text"] = r.text();
  json rle = json::array();
  for (const auto& [bit, run] : mask_rle(r.mask)) rle.push_back({bit, run});
  rec["mask_rle"] = std::move(rle);
  rec["logp_old"] = r.logprobs.old;
  rec["retrieval_count"] = r.retrieval_count;
  rec["format_ok"] = r.format_ok;
  rec["truncated"] = r.truncated;
  rec["rl_eligible"] = r.rl_eligible;
  return rec.dump();
}

}  // namespace ragtrain
