#include "ragtrain/text.hpp"

#include <cctype>

namespace ragtrain {

std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (const char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    char mapped;
    if (uc >= 0x80) {
      mapped = c;  // multibyte payload, keep as-is
    } else if (std::isalnum(uc)) {
      mapped = static_cast<char>(std::tolower(uc));
    } else {
      mapped = ' ';
    }
    if (mapped == ' ') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(mapped);
    }
  }
  return out;
}

std::vector<std::string> normalize_words(std::string_view s) {
  return split_whitespace(normalize_answer(s));
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) words.emplace_back(s.substr(start, i - start));
  }
  return words;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len;
    if (b0 < 0x80) {
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      if (b0 < 0xC2) return false;  // overlong
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      if (b0 > 0xF4) return false;  // beyond U+10FFFF
      len = 4;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    if (len == 3) {
      const auto b1 = static_cast<unsigned char>(s[i + 1]);
      if (b0 == 0xE0 && b1 < 0xA0) return false;            // overlong
      if (b0 == 0xED && b1 > 0x9F) return false;            // surrogate
    }
    if (len == 4) {
      const auto b1 = static_cast<unsigned char>(s[i + 1]);
      if (b0 == 0xF0 && b1 < 0x90) return false;            // overlong
      if (b0 == 0xF4 && b1 > 0x8F) return false;            // > U+10FFFF
    }
    i += len;
  }
  return true;
}

}  // namespace ragtrain
