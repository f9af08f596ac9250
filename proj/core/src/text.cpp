#include "recycle/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "recycle/error.hpp"

namespace recycle {
namespace {

bool is_ascii(std::string_view text) noexcept {
  for (unsigned char c : text) {
    if (c >= 0x80) return false;
  }
  return true;
}

}  // namespace

std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& out) noexcept {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    out = lead;
    return 1;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2, cp = lead & 0x1F, min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3, cp = lead & 0x0F, min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4, cp = lead & 0x07, min = 0x10000;
  } else {
    out = 0xFFFD;
    return 1;
  }
  if (pos + len > text.size()) {
    out = 0xFFFD;
    return 1;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) {
      out = 0xFFFD;
      return 1;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    out = 0xFFFD;
    return 1;
  }
  out = cp;
  return len;
}

bool is_valid_utf8(std::string_view text) noexcept {
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    const std::size_t len = decode_utf8(text, pos, cp);
    if (cp == 0xFFFD && len == 1 && static_cast<unsigned char>(text[pos]) >= 0x80) {
      // A literal U+FFFD is three bytes, so a one-byte decode is an error.
      return false;
    }
    pos += len;
  }
  return true;
}

bool is_unicode_whitespace(char32_t cp) noexcept {
  if (cp < 0x80) {
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0D);
  }
  return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0;
}

std::vector<TokenSpan> whitespace_spans(std::string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t pos = 0;
  bool in_token = false;
  std::size_t start = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    const std::size_t len = decode_utf8(text, pos, cp);
    const bool ws = is_unicode_whitespace(cp);
    if (ws && in_token) {
      spans.push_back({start, pos});
      in_token = false;
    } else if (!ws && !in_token) {
      start = pos;
      in_token = true;
    }
    pos += len;
  }
  if (in_token) spans.push_back({start, text.size()});
  return spans;
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> words;
  for (const TokenSpan& s : whitespace_spans(text)) {
    words.push_back(text.substr(s.begin, s.end - s.begin));
  }
  return words;
}

std::string to_lower(std::string_view text) {
  if (is_ascii(text)) {
    std::string out(text);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  u.toLower(icu::Locale::getRoot());
  std::string out;
  u.toUTF8String(out);
  return out;
}

std::string normalize_for_dedup(std::string_view text) {
  std::string nfc;
  if (is_ascii(text)) {
    nfc.assign(text);
  } else {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorCode::kIoFailure, "ICU NFC normalizer unavailable");
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString n = norm->normalize(u, status);
    if (U_FAILURE(status)) throw Error(ErrorCode::kIoFailure, "NFC normalization failed");
    n.toUTF8String(nfc);
  }
  const std::string lower = to_lower(nfc);
  std::string out;
  out.reserve(lower.size());
  for (std::string_view word : split_whitespace(lower)) {
    if (!out.empty()) out.push_back(' ');
    out.append(word);
  }
  return out;
}

std::string_view trim(std::string_view text) noexcept {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && (text[b] == ' ' || (text[b] >= 0x09 && text[b] <= 0x0D))) ++b;
  while (e > b && (text[e - 1] == ' ' || (text[e - 1] >= 0x09 && text[e - 1] <= 0x0D))) --e;
  return text.substr(b, e - b);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

}  // namespace recycle
