#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmt/corpus.hpp"

namespace dmt::text {

/// Indic scripts handled by the offset transliterator. Each owns a
/// 128-codepoint Unicode block with an aligned layout.
enum class Script { devanagari, tamil, telugu, kannada, malayalam };

char32_t block_base(Script s);
std::string_view script_name(Script s);
/// Accepts the script name ("kannada") or a language code mapped to its script.
Script parse_script(std::string_view name);
/// Script the language is written in: tu -> Kannada, sn -> Devanagari.
Script script_of(const corpus::LanguageTag& lang);

/// True when codepoint `cp` is assigned in the Unicode 14 character database.
/// Only meaningful for codepoints inside one of the five blocks.
bool is_assigned(char32_t cp);

using TokenizedSentence = std::vector<std::string>;

struct NormalizeOptions {
  bool remove_joiners = true;  // strip U+200C / U+200D
};

/// Canonical composition (NFC), joiner removal, whitespace collapse and trim.
/// Malayalam old-style chillu sequences are folded into the atomic chillu
/// letters before joiners are removed.
std::string normalize(std::string_view text, const corpus::LanguageTag& lang,
                      const NormalizeOptions& options = {});

/// Whitespace split with punctuation (general category P*, danda, double
/// danda) detached. Decimal numbers such as 12.5 stay whole.
TokenizedSentence tokenize(std::string_view text);

/// Joins tokens and re-attaches punctuation.
std::string detokenize(const TokenizedSentence& tokens);

/// Maps every codepoint of `from`'s block to the same offset in `to`'s block.
/// Out-of-block codepoints pass through; so do codepoints whose target slot is
/// unassigned, and those are added to `*unmapped` when it is non-null.
std::string transliterate(std::string_view text, Script from, Script to,
                          std::size_t* unmapped = nullptr);

/// Inverse of transliterate(text, original, devanagari).
std::string detransliterate(std::string_view text, Script original,
                            std::size_t* unmapped = nullptr);

}  // namespace dmt::text
