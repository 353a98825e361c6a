#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ragtrain/trace.hpp"

namespace ragtrain {

struct Passage {
  std::string id;
  std::string title;
  std::string text;
};

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DuplicateIdError : CorpusError {
  using CorpusError::CorpusError;
};

struct CorpusParseError : CorpusError {
  CorpusParseError(const std::string& msg, std::size_t line)
      : CorpusError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  std::size_t line_number;
};

struct EmptyQueryError : CorpusError {
  using CorpusError::CorpusError;
};

/// BM25 ranking parameters. Scores use lowercased, punctuation-stripped
/// terms; idf is the +1 variant so scores stay non-negative.
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredPassage {
  const Passage* passage;
  double score;
};

/// Immutable passage store with a term -> postings inverted index. The index
/// is rebuilt deterministically from the passages on construction and load.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Passage> passages, Bm25Params params = {});

  /// Reads newline-delimited JSON records with fields id, title, contents.
  /// Throws CorpusParseError with the line number, or DuplicateIdError.
  static Corpus ingest(const std::string& path, Bm25Params params = {});
  static Corpus from_jsonl(std::string_view jsonl, Bm25Params params = {});

  /// Writes the normalized newline-delimited record file.
  void save(const std::string& path) const;

  /// Top-k by descending BM25 score, ties broken by ascending passage id.
  /// Zero-score passages are never returned. Throws EmptyQueryError when the
  /// query has no terms after normalization.
  std::vector<ScoredPassage> retrieve(std::string_view query, std::size_t k) const;

  std::size_t size() const { return passages_.size(); }
  const std::vector<Passage>& passages() const { return passages_; }
  const Passage* find(std::string_view id) const;
  std::size_t vocabulary_size() const { return index_.size(); }
  const Bm25Params& params() const { return bm25_; }

 private:
  struct Posting {
    std::size_t doc;  // index into passages_
    std::size_t tf;
  };

  void build_index();
  std::vector<std::string> passage_terms(const Passage& p) const;

  std::vector<Passage> passages_;
  std::map<std::string, std::vector<Posting>, std::less<>> index_;
  std::vector<std::size_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  Bm25Params bm25_;
};

/// Renders retrieved passages as one document-segment payload: numbered
/// entries "(n) title — text" wrapped in the document tags. Requires a
/// nonempty passage list.
std::string format_documents(const std::vector<ScoredPassage>& passages, const TagSet& tags);

/// Payload-only variant (no document tags), used when the payload is
/// injected through a TraceBuilder.
std::string format_document_entries(const std::vector<ScoredPassage>& passages);

}  // namespace ragtrain
