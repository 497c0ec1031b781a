#include <doctest.h>

#include "dmt/decoding.hpp"
#include "dmt/utf8.hpp"
#include "oracles.hpp"

using namespace dmt;
using namespace dmt::testing;

TEST_CASE("decoding: max length defaults to twice the source plus ten") {
  CHECK(decode::DecodeConfig{5, 0, 1.0}.max_len_for(7) == 24);
  CHECK(decode::DecodeConfig{5, 3, 1.0}.max_len_for(7) == 3);
  CHECK_THROWS_AS((decode::DecodeConfig{0, 0, 1.0}.validate()), Error);
}

TEST_CASE("decoding: greedy follows the argmax and stops at EOS") {
  TableScorer s(6, 4);
  auto h = decode::greedy_search(s, 5);
  decode::Ids prefix{2};
  double lp = 0.0;
  for (std::size_t i = 0; i < h.ids.size(); ++i) {
    auto d = s.distribution(prefix);
    std::size_t best = 1;
    for (std::size_t v = 1; v < d.size(); ++v) {
      if (v != 2 && d[v] > d[best]) best = v;
    }
    CHECK(static_cast<std::size_t>(h.ids[i]) == best);
    lp += d[best];
    prefix.push_back(h.ids[i]);
  }
  CHECK(h.logprob == doctest::Approx(lp));
  CHECK(h.finished == (!h.ids.empty() && h.ids.back() == 3));
}

TEST_CASE("decoding: beam of one equals greedy on toy tables") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    TableScorer a(6, seed), b(6, seed);
    auto g = decode::greedy_search(a, 6);
    auto r = decode::beam_search(b, 1, 6, 1.0);
    CHECK(g.ids == r.best.ids);
  }
}

TEST_CASE("decoding: full-width beam finds the exhaustive optimum") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    for (double alpha : {0.0, 1.0}) {
      TableScorer s(5, seed);
      auto oracle = exhaustive_best(s, 4, alpha);
      auto r = decode::beam_search(s, 81, 4, alpha);
      CAPTURE(seed);
      CHECK(r.best.ids == oracle.ids);
      CHECK(r.best.normalized_score == doctest::Approx(oracle.normalized_score).epsilon(1e-12));
    }
  }
}

TEST_CASE("decoding: n-best list is sorted and bounded by the beam") {
  TableScorer s(7, 3);
  auto r = decode::beam_search(s, 4, 6, 1.0);
  REQUIRE(!r.nbest.empty());
  for (std::size_t i = 1; i < r.nbest.size(); ++i) {
    CHECK(r.nbest[i - 1].normalized_score >= r.nbest[i].normalized_score);
  }
  for (const auto& h : r.nbest) CHECK(h.ids.size() <= 6);
}

TEST_CASE("decoding: beam of one equals greedy on frozen models") {
  for (auto arch : all_archs()) {
    auto m = nn::build_model(tiny_config(arch), 10, 10, 7);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
      auto src = random_ids(rng, 3 + rng.below(4), 10);
      src.push_back(3);
      decode::DecodeConfig cfg{1, 8, 1.0};
      CHECK(decode::greedy_decode(*m, src, cfg).ids == decode::beam_decode(*m, src, cfg).best.ids);
      auto batch = decode::greedy_decode_batch(*m, {src, {4, 3}, src}, cfg);
      CHECK(batch[0] == decode::greedy_decode(*m, src, cfg).ids);
      CHECK(batch[2] == batch[0]);
    }
  }
}

TEST_CASE("decoding: pipeline stage order and surface round trip") {
  std::vector<std::string> trace;
  const corpus::LanguageTag kn("kn");
  const std::string text = utf8::encode(U"ಕನ್ನಡ, ಭಾಷೆ.");
  auto tokens = decode::preprocess(text, kn, true, &trace);
  CHECK(trace == std::vector<std::string>{"normalize", "tokenize", "transliterate"});
  CHECK(tokens.size() == 4);
  CHECK(utf8::decode(tokens[0])[0] == U'क');
  trace.clear();
  auto back = decode::postprocess(tokens, kn, true, &trace);
  CHECK(trace == std::vector<std::string>{"undo_bpe", "detokenize", "detransliterate"});
  CHECK(back == text);
}

TEST_CASE("decoding: translation refuses foreign vocabularies") {
  decode::PipelineContext ctx;
  ctx.src_vocab.add("a", 1);
  ctx.src_lang = corpus::LanguageTag("kn");
  ctx.tgt_lang = corpus::LanguageTag("ml");
  bpe::Vocabulary other;
  try {
    decode::verify_fingerprints(train::vocab_meta(other, ctx.tgt_vocab), ctx);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::fingerprint_mismatch);
  }
  decode::verify_fingerprints(train::vocab_meta(ctx.src_vocab, ctx.tgt_vocab), ctx);
}

TEST_CASE("decoding: translate_lines keeps blank lines blank") {
  decode::PipelineContext ctx;
  ctx.transliterate = false;
  ctx.src_lang = corpus::LanguageTag("kn");
  ctx.tgt_lang = corpus::LanguageTag("ml");
  for (const char* t : {"a", "b", "c"}) {
    ctx.src_vocab.add(t, 1);
    ctx.tgt_vocab.add(t, 1);
  }
  auto m = nn::build_model(tiny_config(nn::Arch::transformer), ctx.src_vocab.size(),
                           ctx.tgt_vocab.size(), 1);
  auto out = decode::translate_lines(*m, {"a b", "", "c"}, ctx, {1, 5, 1.0});
  REQUIRE(out.size() == 3);
  CHECK(out[1].empty());
  auto beam = decode::translate_lines(*m, {"a b", "", "c"}, ctx, {3, 5, 1.0});
  REQUIRE(beam.size() == 3);
  CHECK(beam[1].empty());
  CHECK(decode::translate(*m, "a b", ctx, {1, 5, 1.0}) == out[0]);
}
