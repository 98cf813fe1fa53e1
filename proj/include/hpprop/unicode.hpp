#pragma once

#include <string>
#include <string_view>

namespace hpprop::unicode {

// Code point at byte offset `pos`; advances `pos` past it. Malformed bytes
// decode as U+FFFD and consume one byte.
char32_t next_code_point(std::string_view s, std::size_t& pos);

bool is_punctuation(char32_t c);  // general category P*
bool is_whitespace(char32_t c);

// Simple (1:1) per-code-point lowercase mapping.
std::string to_lower(std::string_view s);

// True when `s` is non-empty and every code point is punctuation.
bool is_punctuation_token(std::string_view s);

}  // namespace hpprop::unicode
