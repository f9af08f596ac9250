#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace recycle {

// Byte span [begin, end) into a UTF-8 string.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TokenSpan&) const = default;
};

bool is_valid_utf8(std::string_view text) noexcept;

// Decodes the code point starting at `pos`, returns its byte length.
// Invalid sequences decode as U+FFFD with length 1.
std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& out) noexcept;

bool is_unicode_whitespace(char32_t cp) noexcept;

// Maximal runs of non-whitespace (Unicode White_Space property).
std::vector<TokenSpan> whitespace_spans(std::string_view text);
std::vector<std::string_view> split_whitespace(std::string_view text);

// Full Unicode lowercase mapping.
std::string to_lower(std::string_view text);

// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
std::string normalize_for_dedup(std::string_view text);

std::string_view trim(std::string_view text) noexcept;

// Lines split on '\n'; a trailing '\r' is removed from each line.
std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace recycle
