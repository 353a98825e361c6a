#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ragtrain {

/// The special-token markup a reasoning trace is written in. Two built-in
/// variants exist: short tags and the long pipe-delimited tags used by the
/// chat-style system prompts. The long form is the default.
struct TagSet {
  std::string internal_open;
  std::string internal_close;
  std::string external_open;
  std::string external_close;
  std::string document_open;
  std::string document_close;
  std::string answer_open;
  std::string answer_close;

  static TagSet short_tags();
  static TagSet long_tags();

  /// All six segment tokens distinct and non-empty; answer delimiters
  /// distinct from the segment tokens.
  bool valid() const;

  /// The eight marker strings, segment tokens first.
  std::vector<std::string> all_markers() const;

  bool operator==(const TagSet&) const = default;
};

enum class SegmentKind { Think, Internal, ExternalQuery, Document, FinalAnswer };

std::string_view to_string(SegmentKind k);

/// Half-open token index range [begin, end) into a trace token list.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const TokenSpan&) const = default;
};

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string text;     // payload, delimiters excluded
  TokenSpan token_span; // delimiters included for tagged segments
  std::vector<std::string> document_ids;  // provenance, Document segments only

  bool operator==(const Segment&) const = default;
};

struct ReasoningTrace {
  std::string question;
  std::vector<Segment> segments;
  std::vector<std::string> tokens;
  std::optional<std::string> final_answer;

  std::size_t retrieval_count() const;
  std::size_t count(SegmentKind kind) const;

  bool operator==(const ReasoningTrace&) const = default;
};

enum class FormatErrorKind {
  UnbalancedTag,
  DocumentWithoutQuery,
  MissingAnswer,
  MultipleAnswers,
  IllegalNesting,
  GarbledContent,
};

std::string_view to_string(FormatErrorKind k);

struct FormatError {
  FormatErrorKind kind;
  std::string detail;
  std::size_t token_index = 0;  // first offending token, when known
};

/// Outcome of parse: either a trace or the first format violation.
struct ParseResult {
  std::optional<ReasoningTrace> trace;
  std::optional<FormatError> error;

  bool ok() const { return trace.has_value(); }
};

/// Splits raw text into tokens: marker strings are matched greedily
/// (longest first) at any position; everything else splits on whitespace.
std::vector<std::string> tokenize(std::string_view raw_text, const TagSet& tags);

/// Parses raw generated text into typed segments. Reports the first
/// violation: unbalanced or nested tags, a document segment that does not
/// directly follow an external query, a missing or duplicated boxed answer,
/// or garbled content (invalid UTF-8, or marker fragments that never form a
/// complete tag).
ParseResult parse(std::string_view raw_text, const TagSet& tags);

/// Canonical surface form: tokens joined by single spaces. Inverse of parse
/// on canonically spaced text; parse(serialize(t), tags) == t for every
/// valid trace t.
std::string serialize(const ReasoningTrace& trace, const TagSet& tags);

/// True iff parse succeeded and the full format contract holds: exactly one
/// boxed answer, every document directly after its query, every query
/// followed by a document, nothing garbled.
bool validate_format(const ParseResult& parsed);

/// Incremental construction of well-formed traces. Payload strings are
/// whitespace-tokenized; spans and the token list stay consistent with what
/// parse would produce on the serialized text.
class TraceBuilder {
 public:
  explicit TraceBuilder(TagSet tags) : tags_(std::move(tags)) {}

  TraceBuilder& think(std::string_view text);
  TraceBuilder& internal(std::string_view text);
  TraceBuilder& query(std::string_view text);
  TraceBuilder& document(std::string_view text, std::vector<std::string> ids = {});
  TraceBuilder& answer(std::string_view text);

  ReasoningTrace build() &&;

 private:
  TraceBuilder& tagged(SegmentKind kind, const std::string& open, const std::string& close,
                       std::string_view text, std::vector<std::string> ids);

  TagSet tags_;
  ReasoningTrace trace_;
};

}  // namespace ragtrain
