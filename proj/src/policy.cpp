#include "ragtrain/policy.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace ragtrain {

Vocabulary Vocabulary::build(const TagSet& tags, std::vector<std::string> words) {
  if (!tags.valid()) throw std::invalid_argument("invalid TagSet");
  Vocabulary v;
  v.tags_ = tags;
  auto add = [&v](const std::string& tok) {
    if (tok.empty()) throw std::invalid_argument("empty vocabulary token");
    if (v.index_.count(tok)) throw std::invalid_argument("duplicate vocabulary token: " + tok);
    v.index_.emplace(tok, v.tokens_.size());
    v.tokens_.push_back(tok);
  };
  for (const auto& t : tags.all_markers()) add(t);
  v.eot_index_ = v.tokens_.size();
  add(std::string(kEndOfTrace));
  for (auto& w : words) add(w);
  if (v.tokens_.size() < 8) throw std::invalid_argument("vocabulary too small");
  return v;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  const auto i = find(token);
  if (!i) throw UnknownTokenError("token not in vocabulary: " + std::string(token));
  return *i;
}

SegmentKind segment_state(const std::vector<std::string>& context, const TagSet& tags) {
  SegmentKind state = SegmentKind::Think;
  for (const auto& tok : context) {
    if (tok == tags.internal_open) state = SegmentKind::Internal;
    else if (tok == tags.external_open) state = SegmentKind::ExternalQuery;
    else if (tok == tags.document_open) state = SegmentKind::Document;
    else if (tok == tags.answer_open) state = SegmentKind::FinalAnswer;
    else if (tok == tags.internal_close || tok == tags.external_close ||
             tok == tags.document_close || tok == tags.answer_close)
      state = SegmentKind::Think;
  }
  return state;
}

Vector features(const std::vector<std::string>& context, const Vocabulary& vocab,
                const FeatureSpec& spec) {
  const std::size_t v = vocab.size();
  Vector f = Vector::Zero(static_cast<Eigen::Index>(spec.dimension(v)));
  const std::size_t bias_at = spec.dimension(v) - 1;
  f(static_cast<Eigen::Index>(bias_at)) = 1.0;
  if (context.empty()) return f;

  if (const auto last = vocab.find(context.back())) {
    f(static_cast<Eigen::Index>(*last)) = 1.0;
  }
  const std::size_t w = std::min(spec.window, context.size());
  for (std::size_t k = context.size() - w; k < context.size(); ++k) {
    if (const auto idx = vocab.find(context[k])) {
      f(static_cast<Eigen::Index>(v + *idx)) += 1.0;
    }
  }
  const auto kind = segment_state(context, vocab.tags());
  f(static_cast<Eigen::Index>(2 * v + static_cast<std::size_t>(kind))) = 1.0;
  return f;
}

ToyPolicy::ToyPolicy(Vocabulary vocab, FeatureSpec spec)
    : vocab_(std::move(vocab)),
      spec_(spec),
      weights_(Matrix::Zero(static_cast<Eigen::Index>(vocab_.size()),
                            static_cast<Eigen::Index>(spec.dimension(vocab_.size())))) {}

ToyPolicy::ToyPolicy(Vocabulary vocab, FeatureSpec spec, Matrix weights)
    : vocab_(std::move(vocab)), spec_(spec), weights_(std::move(weights)) {
  if (weights_.rows() != static_cast<Eigen::Index>(vocab_.size()) ||
      weights_.cols() != static_cast<Eigen::Index>(spec_.dimension(vocab_.size()))) {
    throw std::invalid_argument("weight matrix shape does not match vocabulary/features");
  }
}

Vector ToyPolicy::logits(const std::vector<std::string>& context) const {
  return weights_ * features(context, vocab_, spec_);
}

Vector ToyPolicy::banned_mask(const std::vector<std::string>& banned_tokens) const {
  Vector mask = Vector::Zero(static_cast<Eigen::Index>(vocab_.size()));
  for (const auto& tok : banned_tokens) {
    if (const auto i = vocab_.find(tok)) {
      mask(static_cast<Eigen::Index>(*i)) = 1.0;
    }
  }
  return mask;
}

Vector ToyPolicy::log_prob_vector(const std::vector<std::string>& context,
                                  const std::vector<std::string>& banned_tokens) const {
  Vector z = logits(context);
  if (!banned_tokens.empty()) {
    const Vector mask = banned_mask(banned_tokens);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (mask(i) > 0.0) z(i) = -std::numeric_limits<double>::infinity();
    }
  }
  return log_softmax(z);
}

double ToyPolicy::logprob(const std::vector<std::string>& context, std::string_view token,
                          const std::vector<std::string>& banned_tokens) const {
  const std::size_t idx = vocab_.index_of(token);
  return log_prob_vector(context, banned_tokens)(static_cast<Eigen::Index>(idx));
}

Matrix ToyPolicy::grad_logprob(const std::vector<std::string>& context, std::string_view token,
                               const std::vector<std::string>& banned_tokens) const {
  const std::size_t idx = vocab_.index_of(token);
  const Vector f = features(context, vocab_, spec_);
  Vector p = log_prob_vector(context, banned_tokens).array().exp().matrix();
  p(static_cast<Eigen::Index>(idx)) -= 1.0;
  return -p * f.transpose();
}

void ToyPolicy::add_grad_logprob(const std::vector<std::string>& context, std::string_view token,
                                 double coef, const std::vector<std::string>& banned_tokens,
                                 Matrix& grad) const {
  const std::size_t idx = vocab_.index_of(token);
  const Vector f = features(context, vocab_, spec_);
  const Vector p = log_prob_vector(context, banned_tokens).array().exp().matrix();
  grad.noalias() += (coef * (Vector::Unit(p.size(), static_cast<Eigen::Index>(idx)) - p)) *
                    f.transpose();
}

SegmentSample ToyPolicy::sample_segment(const GenContext& ctx, const GenParams& params,
                                        StreamRng& rng) {
  if (!params.greedy && (params.temperature <= 0.0 || params.top_p <= 0.0 || params.top_p > 1.0)) {
    throw std::invalid_argument("sample_segment requires temperature > 0 and 0 < top_p <= 1");
  }

  SegmentSample out;
  std::vector<std::string> context = ctx.question_tokens;
  context.insert(context.end(), ctx.trace_tokens.begin(), ctx.trace_tokens.end());

  auto is_stop = [&](const std::string& tok) {
    return std::find(ctx.stop_tokens.begin(), ctx.stop_tokens.end(), tok) != ctx.stop_tokens.end();
  };

  while (out.tokens.size() < params.max_segment_tokens) {
    Vector z = logits(context);
    for (const auto& tok : ctx.banned_tokens) {
      if (const auto i = vocab_.find(tok)) {
        z(static_cast<Eigen::Index>(*i)) = -std::numeric_limits<double>::infinity();
      }
    }

    std::size_t picked;
    double logp;
    if (params.greedy) {
      Eigen::Index argmax = 0;
      z.maxCoeff(&argmax);
      picked = static_cast<std::size_t>(argmax);
      logp = log_softmax(z)(argmax);
    } else {
      const Vector scaled = z / params.temperature;
      const Vector logp_full = log_softmax(scaled);
      Vector probs = logp_full.array().exp().matrix();

      if (params.top_p < 1.0) {
        std::vector<std::size_t> order(static_cast<std::size_t>(probs.size()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double pa = probs(static_cast<Eigen::Index>(a));
          const double pb = probs(static_cast<Eigen::Index>(b));
          if (pa != pb) return pa > pb;
          return a < b;
        });
        double cum = 0.0;
        std::size_t keep = 0;
        for (; keep < order.size(); ++keep) {
          cum += probs(static_cast<Eigen::Index>(order[keep]));
          if (cum >= params.top_p) {
            ++keep;
            break;
          }
        }
        keep = std::max<std::size_t>(keep, 1);
        Vector truncated = Vector::Zero(probs.size());
        double mass = 0.0;
        for (std::size_t r = 0; r < keep; ++r) {
          const auto i = static_cast<Eigen::Index>(order[r]);
          truncated(i) = probs(i);
          mass += probs(i);
        }
        probs = truncated / mass;
      }

      std::vector<double> pv(probs.data(), probs.data() + probs.size());
      picked = rng.sample_discrete(pv);
      // Density of the pre-truncation distribution; top-p only reshapes
      // which token gets drawn.
      logp = logp_full(static_cast<Eigen::Index>(picked));
    }

    const std::string& tok = vocab_.at(picked);
    out.tokens.push_back(tok);
    out.logprobs.push_back(logp);
    context.push_back(tok);
    if (is_stop(tok)) return out;
  }
  out.hit_length_cap = true;
  return out;
}

std::optional<double> ToyPolicy::score_token(const std::vector<std::string>& context,
                                             std::string_view token,
                                             const std::vector<std::string>& banned_tokens) const {
  return logprob(context, token, banned_tokens);
}

ScriptedPolicy::ScriptedPolicy(std::vector<std::string> script, const TagSet& tags)
    : script_(std::move(script)), eot_(Vocabulary::kEndOfTrace) {
  (void)tags;
}

SegmentSample ScriptedPolicy::sample_segment(const GenContext& ctx, const GenParams& params,
                                             StreamRng& /*rng*/) {
  SegmentSample out;
  auto is_stop = [&](const std::string& tok) {
    return std::find(ctx.stop_tokens.begin(), ctx.stop_tokens.end(), tok) != ctx.stop_tokens.end();
  };
  std::size_t cursor = ctx.model_token_count;
  while (out.tokens.size() < params.max_segment_tokens) {
    if (cursor >= script_.size()) {
      out.tokens.push_back(eot_);
      out.logprobs.push_back(0.0);
      return out;
    }
    const std::string& tok = script_[cursor++];
    out.tokens.push_back(tok);
    out.logprobs.push_back(0.0);
    if (is_stop(tok)) return out;
  }
  out.hit_length_cap = true;
  return out;
}

}  // namespace ragtrain
