#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmt::utf8 {

/// Byte offset of the first malformed sequence, or nullopt when `text` is
/// well-formed UTF-8 (no overlongs, surrogates or codepoints past U+10FFFF).
std::optional<std::size_t> find_invalid(std::string_view text);
inline bool is_valid(std::string_view text) { return !find_invalid(text).has_value(); }

/// Decodes well-formed UTF-8. Malformed input raises Error(invalid_utf8).
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view codepoints);
void append(std::string& out, char32_t cp);

/// Splits into one string per codepoint.
std::vector<std::string> characters(std::string_view text);

}  // namespace dmt::utf8
