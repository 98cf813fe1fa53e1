#include "hpprop/unicode.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace hpprop::unicode {

char32_t next_code_point(std::string_view s, std::size_t& pos) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  auto i = static_cast<int32_t>(pos);
  UChar32 c = 0;
  U8_NEXT(bytes, i, length, c);
  pos = static_cast<std::size_t>(i);
  return c < 0 ? U'\uFFFD' : static_cast<char32_t>(c);
}

bool is_punctuation(char32_t c) { return u_ispunct(static_cast<UChar32>(c)) != 0; }

bool is_whitespace(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)) != 0; }

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = pos;
    const char32_t c = next_code_point(s, pos);
    const auto lowered = static_cast<UChar32>(u_tolower(static_cast<UChar32>(c)));
    if (lowered == static_cast<UChar32>(c)) {
      // Keep the original bytes, including malformed sequences.
      out.append(s.substr(start, pos - start));
      continue;
    }
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool err = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, lowered, err);
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

bool is_punctuation_token(std::string_view s) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (!is_punctuation(next_code_point(s, pos))) return false;
  }
  return true;
}

}  // namespace hpprop::unicode
