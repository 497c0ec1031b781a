#include <doctest.h>

#include <string>

#include "dmt/common.hpp"
#include "dmt/textnorm.hpp"
#include "dmt/utf8.hpp"

using namespace dmt;
using corpus::LanguageTag;
using text::Script;

namespace {

// Reads \uXXXX, \xXX and \t escapes as written by Python's unicode_escape.
std::string unescape(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char k = s[i + 1];
      if (k == 'u' || k == 'x') {
        const std::size_t width = k == 'u' ? 4 : 2;
        out.push_back(static_cast<char32_t>(std::stoul(s.substr(i + 2, width), nullptr, 16)));
        i += 1 + width;
        continue;
      }
      if (k == 't') {
        out.push_back(U'\t');
        ++i;
        continue;
      }
    }
    out.push_back(static_cast<unsigned char>(s[i]));
  }
  return utf8::encode(out);
}

}  // namespace

TEST_CASE("textnorm: normalization golden file") {
  const auto lines = read_lines(std::string(DMT_TEST_DATA) + "/normalize_golden.tsv");
  REQUIRE(lines.size() >= 10);
  for (const auto& line : lines) {
    const auto t1 = line.find('\t');
    const auto t2 = line.rfind('\t');
    REQUIRE(t1 != std::string::npos);
    REQUIRE(t2 > t1);
    CAPTURE(line);
    const LanguageTag lang(line.substr(0, t1));
    CHECK(text::normalize(unescape(line.substr(t1 + 1, t2 - t1 - 1)), lang) ==
          unescape(line.substr(t2 + 1)));
  }
}

TEST_CASE("textnorm: normalization is idempotent") {
  const std::string s = unescape("  \\u0d28\\u0d4d\\u200d  \\u0d15\\u0d46\\u0d3e ");
  const LanguageTag ml("ml");
  const auto once = text::normalize(s, ml);
  CHECK(text::normalize(once, ml) == once);
}

TEST_CASE("textnorm: joiners can be kept") {
  text::NormalizeOptions keep;
  keep.remove_joiners = false;
  const std::string s = unescape("\\u0c95\\u200c\\u0ca8");
  CHECK(text::normalize(s, LanguageTag("kn"), keep) == s);
}

TEST_CASE("textnorm: invalid UTF-8 is rejected") {
  try {
    text::normalize("ab\xff", LanguageTag("kn"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_utf8);
  }
}

TEST_CASE("textnorm: tokenize detaches punctuation and keeps decimals") {
  CHECK(text::tokenize("hello, world.") == text::TokenizedSentence{"hello", ",", "world", "."});
  CHECK(text::tokenize("pay 12.5 now!") == text::TokenizedSentence{"pay", "12.5", "now", "!"});
  const std::string danda = unescape("\\u0c95\\u0ca8\\u0964");
  CHECK(text::tokenize(danda).size() == 2);
}

TEST_CASE("textnorm: detokenize restores spacing around punctuation") {
  for (const std::string s : {"hello, world.", "he said \"yes\" (twice)!", "x 12.5 y"}) {
    CHECK(text::detokenize(text::tokenize(s)) == s);
  }
}

TEST_CASE("textnorm: scripts of languages") {
  CHECK(text::script_of(LanguageTag("tu")) == Script::kannada);
  CHECK(text::script_of(LanguageTag("sn")) == Script::devanagari);
  CHECK(text::script_of(LanguageTag("sa")) == Script::devanagari);
  CHECK(text::script_of(LanguageTag("ml")) == Script::malayalam);
  CHECK(text::parse_script("telugu") == Script::telugu);
  CHECK(text::parse_script("ta") == Script::tamil);
  CHECK_THROWS_AS(text::parse_script("klingon"), Error);
  CHECK_THROWS_AS(LanguageTag("xx"), Error);
}

TEST_CASE("textnorm: transliteration maps by block offset") {
  // KA in each block sits at offset 0x15.
  const std::string ka_kn = utf8::encode(U"ಕ");
  const std::string ka_deva = utf8::encode(U"क");
  CHECK(text::transliterate(ka_kn, Script::kannada, Script::devanagari) == ka_deva);
  CHECK(text::detransliterate(ka_deva, Script::kannada) == ka_kn);
  CHECK(text::transliterate("abc " + ka_kn, Script::kannada, Script::devanagari) ==
        "abc " + ka_deva);
}

TEST_CASE("textnorm: codepoints without a target slot pass through and are counted") {
  // Tamil has no letter at the Devanagari offset of KHA (0x16).
  const std::string kha = utf8::encode(U"ख");
  std::size_t unmapped = 0;
  CHECK(text::detransliterate(kha, Script::tamil, &unmapped) == kha);
  CHECK(unmapped == 1);
}

TEST_CASE("textnorm: round trip over every assigned codepoint of the four blocks") {
  for (Script s : {Script::kannada, Script::tamil, Script::telugu, Script::malayalam}) {
    std::size_t mapped = 0;
    std::size_t passed = 0;
    for (char32_t cp = text::block_base(s); cp < text::block_base(s) + 128; ++cp) {
      if (!text::is_assigned(cp)) continue;
      const std::string c = utf8::encode(std::u32string(1, cp));
      std::size_t unmapped = 0;
      const std::string deva = text::transliterate(c, s, Script::devanagari, &unmapped);
      if (unmapped == 0) {
        ++mapped;
        CHECK(text::detransliterate(deva, s) == c);
      } else {
        ++passed;
        CHECK(deva == c);
      }
    }
    CHECK(mapped > 40);
    CHECK(passed == 0);  // the Devanagari block is fully assigned
    std::size_t back_unmapped = 0;
    for (char32_t cp = 0x0900; cp < 0x0980; ++cp) {
      const std::string c = utf8::encode(std::u32string(1, cp));
      std::size_t before = back_unmapped;
      const std::string out = text::detransliterate(c, s, &back_unmapped);
      if (back_unmapped > before) CHECK(out == c);
    }
    CHECK(back_unmapped > 0);
  }
}
