#include "ragtrain/trace.hpp"

#include <algorithm>

#include "ragtrain/text.hpp"

namespace ragtrain {

TagSet TagSet::short_tags() {
  return TagSet{"<internal>",  "</internal>", "<external>", "</external>",
                "<document>",  "</document>", "\\boxed{",   "}"};
}

TagSet TagSet::long_tags() {
  return TagSet{"<|begin_internal_answer|>", "<|end_internal_answer|>",
                "<|begin_external_search|>", "<|end_external_search|>",
                "<|begin_search_result|>",   "<|end_search_result|>",
                "\\boxed{",                  "}"};
}

bool TagSet::valid() const {
  const std::vector<std::string> seg = {internal_open,  internal_close,
                                        external_open,  external_close,
                                        document_open,  document_close};
  for (const auto& t : seg) {
    if (t.empty()) return false;
  }
  if (answer_open.empty() || answer_close.empty() || answer_open == answer_close) return false;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (std::size_t j = i + 1; j < seg.size(); ++j) {
      if (seg[i] == seg[j]) return false;
    }
    if (seg[i] == answer_open || seg[i] == answer_close) return false;
  }
  return true;
}

std::vector<std::string> TagSet::all_markers() const {
  return {internal_open, internal_close, external_open, external_close,
          document_open, document_close, answer_open,   answer_close};
}

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Internal: return "internal";
    case SegmentKind::ExternalQuery: return "external_query";
    case SegmentKind::Document: return "document";
    case SegmentKind::FinalAnswer: return "final_answer";
  }
  return "?";
}

std::string_view to_string(FormatErrorKind k) {
  switch (k) {
    case FormatErrorKind::UnbalancedTag: return "unbalanced_tag";
    case FormatErrorKind::DocumentWithoutQuery: return "document_without_query";
    case FormatErrorKind::MissingAnswer: return "missing_answer";
    case FormatErrorKind::MultipleAnswers: return "multiple_answers";
    case FormatErrorKind::IllegalNesting: return "illegal_nesting";
    case FormatErrorKind::GarbledContent: return "garbled_content";
  }
  return "?";
}

std::size_t ReasoningTrace::retrieval_count() const { return count(SegmentKind::ExternalQuery); }

std::size_t ReasoningTrace::count(SegmentKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(segments.begin(), segments.end(),
                    [kind](const Segment& s) { return s.kind == kind; }));
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Index of the marker matching at position i, longest match wins; -1 if none.
int match_marker(std::string_view text, std::size_t i, const std::vector<std::string>& markers) {
  int best = -1;
  std::size_t best_len = 0;
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const auto& mk = markers[m];
    if (mk.size() > best_len && text.compare(i, mk.size(), mk) == 0) {
      best = static_cast<int>(m);
      best_len = mk.size();
    }
  }
  return best;
}

bool is_marker_fragment(const std::string& word) {
  return word.find_first_of("<>|") != std::string::npos;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view raw_text, const TagSet& tags) {
  const auto markers = tags.all_markers();
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < raw_text.size()) {
    if (is_space(raw_text[i])) {
      ++i;
      continue;
    }
    const int m = match_marker(raw_text, i, markers);
    if (m >= 0) {
      tokens.push_back(markers[static_cast<std::size_t>(m)]);
      i += markers[static_cast<std::size_t>(m)].size();
      continue;
    }
    std::string word;
    while (i < raw_text.size() && !is_space(raw_text[i]) &&
           match_marker(raw_text, i, markers) < 0) {
      word.push_back(raw_text[i]);
      ++i;
    }
    tokens.push_back(std::move(word));
  }
  return tokens;
}

ParseResult parse(std::string_view raw_text, const TagSet& tags) {
  auto fail = [](FormatErrorKind kind, std::string detail, std::size_t at = 0) {
    ParseResult r;
    r.error = FormatError{kind, std::move(detail), at};
    return r;
  };

  if (!is_valid_utf8(raw_text)) {
    return fail(FormatErrorKind::GarbledContent, "invalid UTF-8 byte sequence");
  }

  const auto tokens = tokenize(raw_text, tags);

  ReasoningTrace trace;
  trace.tokens = tokens;

  enum class Open { None, Internal, External, Document, Answer };
  Open open = Open::None;
  std::size_t open_begin = 0;
  std::vector<std::string> payload;
  std::size_t answers_seen = 0;

  auto kind_of = [](Open o) {
    switch (o) {
      case Open::Internal: return SegmentKind::Internal;
      case Open::External: return SegmentKind::ExternalQuery;
      case Open::Document: return SegmentKind::Document;
      case Open::Answer: return SegmentKind::FinalAnswer;
      default: return SegmentKind::Think;
    }
  };

  auto close_segment = [&](std::size_t end_index_exclusive) {
    Segment seg;
    seg.kind = kind_of(open);
    seg.text = join_tokens(payload);
    seg.token_span = TokenSpan{open_begin, end_index_exclusive};
    trace.segments.push_back(std::move(seg));
    payload.clear();
    open = Open::None;
  };

  // Pending run of bare words outside any tag.
  std::vector<std::string> think_words;
  std::size_t think_begin = 0;
  auto flush_think = [&](std::size_t end_index_exclusive) {
    if (think_words.empty()) return;
    Segment seg;
    seg.kind = SegmentKind::Think;
    seg.text = join_tokens(think_words);
    seg.token_span = TokenSpan{think_begin, end_index_exclusive};
    trace.segments.push_back(std::move(seg));
    think_words.clear();
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    const bool is_open = tok == tags.internal_open || tok == tags.external_open ||
                         tok == tags.document_open || tok == tags.answer_open;
    const bool is_close = tok == tags.internal_close || tok == tags.external_close ||
                          tok == tags.document_close || tok == tags.answer_close;

    if (!is_open && !is_close) {
      if (is_marker_fragment(tok)) {
        return fail(FormatErrorKind::GarbledContent, "stray marker fragment: " + tok, i);
      }
      if (open == Open::None) {
        if (think_words.empty()) think_begin = i;
        think_words.push_back(tok);
      } else {
        payload.push_back(tok);
      }
      continue;
    }

    if (is_open) {
      if (open != Open::None) {
        return fail(FormatErrorKind::IllegalNesting,
                    "tag " + tok + " opened inside an unclosed segment", i);
      }
      flush_think(i);
      if (tok == tags.document_open) {
        const bool after_query = !trace.segments.empty() &&
                                 trace.segments.back().kind == SegmentKind::ExternalQuery;
        if (!after_query) {
          return fail(FormatErrorKind::DocumentWithoutQuery,
                      "document segment not directly after an external query", i);
        }
        open = Open::Document;
      } else if (tok == tags.internal_open) {
        open = Open::Internal;
      } else if (tok == tags.external_open) {
        open = Open::External;
      } else {
        if (answers_seen == 1) {
          return fail(FormatErrorKind::MultipleAnswers, "more than one boxed answer", i);
        }
        open = Open::Answer;
      }
      open_begin = i;
      continue;
    }

    // Close tag.
    const Open expected = tok == tags.internal_close   ? Open::Internal
                          : tok == tags.external_close ? Open::External
                          : tok == tags.document_close ? Open::Document
                                                       : Open::Answer;
    if (open != expected) {
      return fail(FormatErrorKind::UnbalancedTag, "unexpected close tag " + tok, i);
    }
    if (open == Open::Answer) {
      ++answers_seen;
      trace.final_answer = join_tokens(payload);
    }
    close_segment(i + 1);
  }

  if (open != Open::None) {
    return fail(FormatErrorKind::UnbalancedTag, "unclosed segment at end of text", tokens.size());
  }
  flush_think(tokens.size());

  if (answers_seen == 0) {
    return fail(FormatErrorKind::MissingAnswer, "no boxed answer found", tokens.size());
  }

  ParseResult r;
  r.trace = std::move(trace);
  return r;
}

std::string serialize(const ReasoningTrace& trace, const TagSet& /*tags*/) {
  return join_tokens(trace.tokens);
}

TraceBuilder& TraceBuilder::think(std::string_view text) {
  const auto words = split_whitespace(text);
  if (words.empty()) return *this;
  Segment seg;
  seg.kind = SegmentKind::Think;
  seg.text = join_tokens(words);
  seg.token_span.begin = trace_.tokens.size();
  for (const auto& w : words) trace_.tokens.push_back(w);
  seg.token_span.end = trace_.tokens.size();
  trace_.segments.push_back(std::move(seg));
  return *this;
}

TraceBuilder& TraceBuilder::internal(std::string_view text) {
  return tagged(SegmentKind::Internal, tags_.internal_open, tags_.internal_close, text, {});
}

TraceBuilder& TraceBuilder::query(std::string_view text) {
  return tagged(SegmentKind::ExternalQuery, tags_.external_open, tags_.external_close, text, {});
}

TraceBuilder& TraceBuilder::document(std::string_view text, std::vector<std::string> ids) {
  return tagged(SegmentKind::Document, tags_.document_open, tags_.document_close, text,
                std::move(ids));
}

TraceBuilder& TraceBuilder::answer(std::string_view text) {
  tagged(SegmentKind::FinalAnswer, tags_.answer_open, tags_.answer_close, text, {});
  trace_.final_answer = trace_.segments.back().text;
  return *this;
}

TraceBuilder& TraceBuilder::tagged(SegmentKind kind, const std::string& open,
                                   const std::string& close, std::string_view text,
                                   std::vector<std::string> ids) {
  Segment seg;
  seg.kind = kind;
  seg.token_span.begin = trace_.tokens.size();
  trace_.tokens.push_back(open);
  const auto words = split_whitespace(text);
  for (const auto& w : words) trace_.tokens.push_back(w);
  seg.text = join_tokens(words);
  trace_.tokens.push_back(close);
  seg.token_span.end = trace_.tokens.size();
  seg.document_ids = std::move(ids);
  trace_.segments.push_back(std::move(seg));
  return *this;
}

ReasoningTrace TraceBuilder::build() && { return std::move(trace_); }

bool validate_format(const ParseResult& parsed) {
  if (!parsed.ok()) return false;
  const ReasoningTrace& t = *parsed.trace;

  // Query/document pairing in both directions.
  std::size_t queries = 0;
  std::size_t documents = 0;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    const Segment& s = t.segments[i];
    if (s.kind == SegmentKind::ExternalQuery) {
      ++queries;
      const bool followed = i + 1 < t.segments.size() &&
                            t.segments[i + 1].kind == SegmentKind::Document;
      if (!followed) return false;
    } else if (s.kind == SegmentKind::Document) {
      ++documents;
      const bool preceded = i > 0 && t.segments[i - 1].kind == SegmentKind::ExternalQuery;
      if (!preceded) return false;
    }
  }
  if (queries != documents) return false;
  return t.final_answer.has_value();
}

}  // namespace ragtrain
