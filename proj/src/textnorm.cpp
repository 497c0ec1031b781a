#include "dmt/textnorm.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <array>
#include <cstdint>

#include "dmt/common.hpp"
#include "dmt/utf8.hpp"

namespace dmt::utf8 {

std::optional<std::size_t> find_invalid(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    char32_t cp;
    char32_t min;
    if ((c & 0xE0) == 0xC0) {
      len = 2, cp = c & 0x1F, min = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3, cp = c & 0x0F, min = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4, cp = c & 0x07, min = 0x10000;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

std::u32string decode(std::string_view text) {
  if (auto bad = find_invalid(text)) {
    throw Error(ErrorKind::invalid_utf8, "invalid UTF-8 at byte " + std::to_string(*bad));
  }
  std::u32string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      out.push_back(c);
      ++i;
    } else if ((c & 0xE0) == 0xC0) {
      out.push_back(((c & 0x1F) << 6) | (s[i + 1] & 0x3F));
      i += 2;
    } else if ((c & 0xF0) == 0xE0) {
      out.push_back(((c & 0x0F) << 12) | ((s[i + 1] & 0x3F) << 6) | (s[i + 2] & 0x3F));
      i += 3;
    } else {
      out.push_back(((c & 0x07) << 18) | ((s[i + 1] & 0x3F) << 12) | ((s[i + 2] & 0x3F) << 6) |
                    (s[i + 3] & 0x3F));
      i += 4;
    }
  }
  return out;
}

void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode(std::u32string_view codepoints) {
  std::string out;
  out.reserve(codepoints.size());
  for (char32_t cp : codepoints) append(out, cp);
  return out;
}

std::vector<std::string> characters(std::string_view text) {
  std::vector<std::string> out;
  for (char32_t cp : decode(text)) {
    std::string s;
    append(s, cp);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dmt::utf8

namespace dmt::text {

namespace {

constexpr char32_t kZwnj = 0x200C;
constexpr char32_t kZwj = 0x200D;
constexpr char32_t kDanda = 0x0964;
constexpr char32_t kDoubleDanda = 0x0965;

// Assigned-codepoint bitmaps (bit i set <=> base+i assigned), Unicode 14.0.
struct BlockMap {
  std::uint64_t lo;
  std::uint64_t hi;
};
constexpr std::array<BlockMap, 5> kAssigned{{
    {0xffffffffffffffffULL, 0xffffffffffffffffULL},  // devanagari
    {0xc3ffc718d63dc7ecULL, 0x07ffffc000813dc7ULL},  // tamil
    {0xf3fffdfffffddfffULL, 0xff80ffcf27603ddfULL},  // telugu
    {0xf3effdfffffddfffULL, 0x0006ffcf60603ddfULL},  // kannada
    {0xfffffffffffddfffULL, 0xffffffcffff0fddfULL},  // malayalam
}};

constexpr std::array<Script, 5> kScripts{Script::devanagari, Script::tamil, Script::telugu,
                                         Script::kannada, Script::malayalam};

std::size_t index_of(Script s) { return static_cast<std::size_t>(s); }

bool in_block(char32_t cp, Script s) {
  const char32_t base = block_base(s);
  return cp >= base && cp < base + 128;
}

bool slot_assigned(Script s, unsigned offset) {
  const BlockMap& m = kAssigned[index_of(s)];
  return offset < 64 ? ((m.lo >> offset) & 1U) != 0 : ((m.hi >> (offset - 64)) & 1U) != 0;
}

bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0; }

bool is_punct(char32_t cp) {
  return cp == kDanda || cp == kDoubleDanda || u_ispunct(static_cast<UChar32>(cp)) != 0;
}

bool is_digit(char32_t cp) { return u_isdigit(static_cast<UChar32>(cp)) != 0; }

std::u32string nfc(const std::u32string& text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::io, "ICU NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(text.data()), static_cast<int32_t>(text.size()));
  icu::UnicodeString out = normalizer->normalize(in, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "NFC normalization failed");
  std::u32string result(static_cast<std::size_t>(out.countChar32()), U'\0');
  status = U_ZERO_ERROR;
  out.toUTF32(reinterpret_cast<UChar32*>(result.data()), static_cast<int32_t>(result.size()),
              status);
  return result;
}

// Old-style chillu (consonant + virama + ZWJ) to the atomic chillu letters.
std::u32string fold_malayalam_chillu(const std::u32string& in) {
  auto atomic = [](char32_t base) -> char32_t {
    switch (base) {
      case 0x0D23: return 0x0D7A;
      case 0x0D28: return 0x0D7B;
      case 0x0D30: return 0x0D7C;
      case 0x0D32: return 0x0D7D;
      case 0x0D33: return 0x0D7E;
      case 0x0D15: return 0x0D7F;
      default: return 0;
    }
  };
  std::u32string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (i + 2 < in.size() && in[i + 1] == 0x0D4D && in[i + 2] == kZwj) {
      if (char32_t a = atomic(in[i])) {
        out.push_back(a);
        i += 2;
        continue;
      }
    }
    out.push_back(in[i]);
  }
  return out;
}

enum class Attach { none, to_previous, to_next, quote };

Attach attachment(const std::string& token) {
  std::u32string cps = utf8::decode(token);
  if (cps.size() != 1) return Attach::none;
  const char32_t c = cps[0];
  switch (c) {
    case U'.': case U',': case U';': case U':': case U'!': case U'?': case U'%':
    case U')': case U']': case U'}': case 0x00BB: case 0x201D: case 0x2019: case 0x2026:
    case kDanda: case kDoubleDanda:
      return Attach::to_previous;
    case U'(': case U'[': case U'{': case 0x00AB: case 0x201C: case 0x2018: case 0x00BF:
    case 0x00A1:
      return Attach::to_next;
    case U'"': case U'\'':
      return Attach::quote;
    default:
      break;
  }
  const auto type = u_charType(static_cast<UChar32>(c));
  if (type == U_END_PUNCTUATION || type == U_FINAL_PUNCTUATION) return Attach::to_previous;
  if (type == U_START_PUNCTUATION || type == U_INITIAL_PUNCTUATION) return Attach::to_next;
  return Attach::none;
}

}  // namespace

char32_t block_base(Script s) {
  switch (s) {
    case Script::devanagari: return 0x0900;
    case Script::tamil: return 0x0B80;
    case Script::telugu: return 0x0C00;
    case Script::kannada: return 0x0C80;
    case Script::malayalam: return 0x0D00;
  }
  return 0;
}

std::string_view script_name(Script s) {
  switch (s) {
    case Script::devanagari: return "devanagari";
    case Script::tamil: return "tamil";
    case Script::telugu: return "telugu";
    case Script::kannada: return "kannada";
    case Script::malayalam: return "malayalam";
  }
  return "";
}

Script parse_script(std::string_view name) {
  for (Script s : kScripts) {
    if (script_name(s) == name) return s;
  }
  if (name == "deva") return Script::devanagari;
  if (corpus::is_registered_language(name) || name == "sa") {
    return script_of(corpus::LanguageTag(name));
  }
  throw Error(ErrorKind::invalid_argument, "unknown script: " + std::string(name));
}

Script script_of(const corpus::LanguageTag& lang) {
  const std::string& c = lang.code();
  if (c == "kn" || c == "tu") return Script::kannada;
  if (c == "ml") return Script::malayalam;
  if (c == "ta") return Script::tamil;
  if (c == "te") return Script::telugu;
  if (c == "sn" || c == "hi" || c == "mr") return Script::devanagari;
  throw Error(ErrorKind::unknown_language, "no script registered for language " + c);
}

bool is_assigned(char32_t cp) {
  for (Script s : kScripts) {
    if (in_block(cp, s)) return slot_assigned(s, static_cast<unsigned>(cp - block_base(s)));
  }
  return u_charType(static_cast<UChar32>(cp)) != U_UNASSIGNED;
}

std::string normalize(std::string_view text, const corpus::LanguageTag& lang,
                      const NormalizeOptions& options) {
  std::u32string cps = utf8::decode(text);
  if (!lang.empty() && lang.code() == "ml") cps = fold_malayalam_chillu(cps);
  if (options.remove_joiners) {
    std::erase_if(cps, [](char32_t c) { return c == kZwj || c == kZwnj; });
  }
  cps = nfc(cps);

  std::u32string out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (char32_t c : cps) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return utf8::encode(out);
}

TokenizedSentence tokenize(std::string_view text) {
  const std::u32string cps = utf8::decode(text);
  TokenizedSentence tokens;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(utf8::encode(current));
      current.clear();
    }
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (is_space(c)) {
      flush();
      continue;
    }
    if (is_punct(c)) {
      const bool decimal_point = c == U'.' && !current.empty() && is_digit(current.back()) &&
                                 i + 1 < cps.size() && is_digit(cps[i + 1]);
      if (!decimal_point) {
        flush();
        tokens.push_back(utf8::encode(std::u32string(1, c)));
        continue;
      }
    }
    current.push_back(c);
  }
  flush();
  return tokens;
}

std::string detokenize(const TokenizedSentence& tokens) {
  std::string out;
  bool glue_next = false;
  bool double_quote_open = false;
  bool single_quote_open = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    Attach a = attachment(tok);
    if (a == Attach::quote) {
      bool& open = tok == "\"" ? double_quote_open : single_quote_open;
      a = open ? Attach::to_previous : Attach::to_next;
      open = !open;
    }
    const bool space = i > 0 && !glue_next && a != Attach::to_previous;
    if (space) out += ' ';
    out += tok;
    glue_next = a == Attach::to_next;
  }
  return out;
}

std::string transliterate(std::string_view text, Script from, Script to, std::size_t* unmapped) {
  if (from == to) return std::string(text);
  const char32_t from_base = block_base(from);
  const char32_t to_base = block_base(to);
  std::u32string cps = utf8::decode(text);
  std::size_t missed = 0;
  for (char32_t& c : cps) {
    if (!in_block(c, from)) continue;
    const auto offset = static_cast<unsigned>(c - from_base);
    if (slot_assigned(to, offset)) {
      c = to_base + offset;
    } else {
      ++missed;
    }
  }
  if (unmapped) *unmapped += missed;
  return utf8::encode(cps);
}

std::string detransliterate(std::string_view text, Script original, std::size_t* unmapped) {
  return transliterate(text, Script::devanagari, original, unmapped);
}

}  // namespace dmt::text
