#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bleu_cases.hpp"
#include "dmt/bleu.hpp"
#include "dmt/common.hpp"
#include "oracles.hpp"

using namespace dmt;
using dmt::testing::brute_bleu;

namespace {

std::vector<bleu::Tokens> split_refs(const std::vector<std::string>& refs) {
  std::vector<bleu::Tokens> out;
  for (const auto& r : refs) out.push_back(split_whitespace(r));
  return out;
}

}  // namespace

TEST_CASE("bleu: clipped unigram precision counts each reference n-gram at most its max count") {
  auto t = bleu::modified_precision(split_whitespace("the the the the the the the"),
                                    {split_whitespace("the cat is on the mat"),
                                     split_whitespace("there is a cat on the mat")},
                                    1);
  CHECK(t.matches == 2);
  CHECK(t.total == 7);
}

TEST_CASE("bleu: n-gram totals are zero when the candidate is shorter than n") {
  auto t = bleu::modified_precision(split_whitespace("a b c"), {split_whitespace("a b c")}, 4);
  CHECK(t.matches == 0);
  CHECK(t.total == 0);
}

TEST_CASE("bleu: frozen reference values") {
  for (const auto& c : dmt::testing::bleu_cases()) {
    CAPTURE(c.candidate);
    const auto cand = split_whitespace(c.candidate);
    const auto refs = split_refs(c.references);
    const double got = bleu::sentence_bleu(cand, refs);
    CHECK(std::abs(got - c.expected) < 1e-12);
    CHECK(std::abs(got - brute_bleu(cand, refs)) < 1e-12);
  }
}

TEST_CASE("bleu: brevity penalty uses the closest reference, shorter on ties") {
  auto d = bleu::sentence_bleu_detail(split_whitespace("a b c d e f"),
                                      {split_whitespace("a b c d e f g h"),
                                       split_whitespace("a b c d")});
  CHECK(d.reference_length == 4);
  auto e = bleu::sentence_bleu_detail(split_whitespace("a b c d e"),
                                      {split_whitespace("a b c d e f"),
                                       split_whitespace("a b c d")});
  CHECK(e.reference_length == 4);
  CHECK(e.score == doctest::Approx(1.0));
}

TEST_CASE("bleu: add-epsilon smoothing keeps short matches above zero") {
  bleu::BleuConfig cfg;
  cfg.smoothing = bleu::Smoothing::add_epsilon;
  const double s = bleu::sentence_bleu(split_whitespace("a b c"), {split_whitespace("a b c")}, cfg);
  CHECK(s == doctest::Approx(std::pow(0.1, 0.25)));
}

TEST_CASE("bleu: invalid configuration is rejected") {
  bleu::BleuConfig cfg;
  cfg.weights = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.weights = {1.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(bleu::sentence_bleu({"a"}, {}), Error);
}

TEST_CASE("bleu: corpus score is the mean of sentence scores") {
  auto r = bleu::score_lines({"a b c d", "a b c d e f g h", "x y z w"},
                             {"a b c d e f g h", "a b c d e f g h", "x y z w"});
  REQUIRE(r.per_sentence.size() == 3);
  CHECK(r.mean == doctest::Approx((std::exp(-1.0) + 1.0 + 1.0) / 3.0).epsilon(1e-14));
  CHECK(bleu::summary_line(r) == "mean_sentence_bleu\t0.7893");
  CHECK_THROWS_AS(bleu::corpus_average({}), Error);
}

TEST_CASE("bleu: line count mismatch is an error") {
  CHECK_THROWS_AS(bleu::score_lines({"a"}, {"a", "b"}), Error);
}

TEST_CASE("bleu: surface preparation undoes subwords and detokenizes") {
  bleu::ScoringFlags f;
  f.undo_bpe = true;
  f.detok = true;
  CHECK(bleu::prepare_surface("he@@ llo , world .", f) == "hello, world.");
}

TEST_CASE("bleu: score_files writes per-line rows and the summary") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dmt_bleu_files";
  fs::create_directories(dir);
  write_lines((dir / "c").string(), {"a b c d", "x y z w"});
  write_lines((dir / "r").string(), {"a b c d", "x y z q"});
  auto r = bleu::score_files((dir / "c").string(), (dir / "r").string(), {},
                             (dir / "rep").string());
  CHECK(r.mean == doctest::Approx(0.5));
  auto lines = read_lines((dir / "rep").string());
  REQUIRE(!lines.empty());
  CHECK(lines.back() == "mean_sentence_bleu\t0.5000");
  fs::remove_all(dir);
}

TEST_CASE("bleu: an added reference can lower the score through the brevity penalty") {
  const auto cand = split_whitespace("a b c d e f");
  const std::vector<bleu::Tokens> one{split_whitespace("a b c d")};
  auto two = one;
  two.push_back(split_whitespace("x x x x x x x"));
  const double before = bleu::sentence_bleu(cand, one);
  const double after = bleu::sentence_bleu(cand, two);
  CHECK(before == doctest::Approx(std::pow(4.0 / 6 * 3.0 / 5 * 2.0 / 4 * 1.0 / 3, 0.25)));
  CHECK(after == doctest::Approx(before * std::exp(1.0 - 7.0 / 6.0)));
  CHECK(after < before);
  // Clipped precisions alone never fall when a reference is added.
  for (int n = 1; n <= 4; ++n) {
    CHECK(bleu::modified_precision(cand, two, n).matches >=
          bleu::modified_precision(cand, one, n).matches);
  }
}
