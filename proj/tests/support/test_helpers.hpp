#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ragtrain/corpus.hpp"
#include "ragtrain/math.hpp"
#include "ragtrain/policy.hpp"
#include "ragtrain/rng.hpp"
#include "ragtrain/text.hpp"
#include "ragtrain/trace.hpp"

namespace ragtrain::testing {

/// Central finite differences of a scalar function of the policy weights.
/// Step 1e-5 unless overridden. Independent of any analytic-gradient path.
inline Matrix finite_difference_gradient(ToyPolicy& policy,
                                         const std::function<double()>& value_fn,
                                         double step = 1e-5) {
  Matrix& w = policy.mutable_weights();
  Matrix grad = Matrix::Zero(w.rows(), w.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const double saved = w(r, c);
      w(r, c) = saved + step;
      const double up = value_fn();
      w(r, c) = saved - step;
      const double down = value_fn();
      w(r, c) = saved;
      grad(r, c) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

/// Max-norm relative error between analytic and finite-difference
/// gradients.
inline double gradient_relative_error(const Matrix& analytic, const Matrix& fd) {
  const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

/// Small vocabulary over the given tag set for policy tests.
inline Vocabulary tiny_vocab(const TagSet& tags, std::size_t extra_words = 4) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < extra_words; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary::build(tags, words);
}

inline ToyPolicy random_policy(const TagSet& tags, StreamRng& rng, std::size_t extra_words = 4,
                               std::size_t window = 4, double scale = 0.5) {
  Vocabulary vocab = tiny_vocab(tags, extra_words);
  FeatureSpec spec;
  spec.window = window;
  Matrix w(vocab.size(), spec.dimension(vocab.size()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-scale, scale);
  }
  return ToyPolicy(std::move(vocab), spec, std::move(w));
}

/// Random token context drawn from a vocabulary (word tokens only, so the
/// segment state stays Think unless tags are appended by the caller).
inline std::vector<std::string> random_context(const Vocabulary& vocab, StreamRng& rng,
                                               std::size_t len) {
  std::vector<std::string> ctx;
  for (std::size_t i = 0; i < len; ++i) {
    ctx.push_back(vocab.at(9 + rng.uniform_index(vocab.size() - 9)));
  }
  return ctx;
}

/// Exhaustive BM25 scorer sharing only the formula, not the index path.
inline std::vector<std::pair<std::string, double>> brute_force_bm25(
    const std::vector<Passage>& passages, std::string_view query, std::size_t k,
    const Bm25Params& params = {}) {
  const auto q_terms = normalize_words(query);
  std::vector<std::vector<std::string>> docs;
  for (const auto& p : passages) {
    auto terms = normalize_words(p.title);
    auto body = normalize_words(p.text);
    terms.insert(terms.end(), body.begin(), body.end());
    docs.push_back(std::move(terms));
  }
  double avg_len = 0.0;
  for (const auto& d : docs) avg_len += static_cast<double>(d.size());
  avg_len /= docs.empty() ? 1.0 : static_cast<double>(docs.size());

  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double score = 0.0;
    for (const auto& term : q_terms) {
      const auto tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
      if (tf == 0.0) continue;
      double df = 0.0;
      for (const auto& other : docs) {
        if (std::find(other.begin(), other.end(), term) != other.end()) df += 1.0;
      }
      const double idf =
          std::log(1.0 + (static_cast<double>(docs.size()) - df + 0.5) / (df + 0.5));
      const double norm_len = avg_len > 0.0 ? static_cast<double>(docs[d].size()) / avg_len : 1.0;
      score += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm_len));
    }
    if (score > 0.0) scored.emplace_back(passages[d].id, score);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

/// Random format-valid trace for round-trip property tests.
inline ReasoningTrace random_valid_trace(const TagSet& tags, StreamRng& rng) {
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
  auto some_words = [&](std::size_t lo, std::size_t hi) {
    std::string text;
    const std::size_t n = lo + rng.uniform_index(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (!text.empty()) text += ' ';
      text += words[rng.uniform_index(words.size())];
    }
    return text;
  };

  TraceBuilder builder(tags);
  if (rng.uniform01() < 0.7) builder.think(some_words(1, 4));
  const std::size_t blocks = rng.uniform_index(9);  // up to 8 query/document pairs
  for (std::size_t b = 0; b < blocks; ++b) {
    switch (rng.uniform_index(3)) {
      case 0:
        builder.internal(some_words(1, 5));
        break;
      case 1:
        builder.think(some_words(1, 3));
        break;
      default:
        builder.query(some_words(1, 3));
        builder.document(some_words(1, 6));
        break;
    }
  }
  builder.answer(some_words(1, 2));
  if (rng.uniform01() < 0.3) builder.think(some_words(1, 3));
  return std::move(builder).build();
}

}  // namespace ragtrain::testing
