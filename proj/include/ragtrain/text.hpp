#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragtrain {

/// Lowercases ASCII letters, maps punctuation (any ASCII byte that is not
/// alphanumeric) to spaces, and collapses runs of whitespace to single
/// spaces. Non-ASCII bytes pass through untouched. Result has no leading or
/// trailing space.
std::string normalize_answer(std::string_view s);

/// normalize_answer followed by a whitespace split.
std::vector<std::string> normalize_words(std::string_view s);

/// Plain whitespace split, no normalization.
std::vector<std::string> split_whitespace(std::string_view s);

/// Joins tokens with single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

/// True iff the byte string is well-formed UTF-8.
bool is_valid_utf8(std::string_view s);

}  // namespace ragtrain
