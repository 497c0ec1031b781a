#include <doctest.h>

#include <filesystem>

#include "dmt/backtranslation.hpp"
#include "oracles.hpp"

using namespace dmt;
using namespace dmt::testing;
using corpus::LanguageTag;
namespace fs = std::filesystem;

namespace {

corpus::ParallelCorpus sized(std::size_t n, const char* tag, bool synthetic) {
  corpus::ParallelCorpus c;
  c.src_lang = LanguageTag("kn");
  c.tgt_lang = LanguageTag("ml");
  c.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.pairs.push_back({tag + std::to_string(i), std::to_string(i), synthetic});
  }
  return c;
}

// Reverse-direction context over single-letter tokens: reads ml, writes kn.
decode::PipelineContext reverse_context() {
  decode::PipelineContext ctx;
  ctx.transliterate = false;
  ctx.src_lang = LanguageTag("ml");
  ctx.tgt_lang = LanguageTag("kn");
  for (char c = 'a'; c <= 'f'; ++c) {
    ctx.src_vocab.add(std::string(1, c), 1);
    ctx.tgt_vocab.add(std::string(1, c), 1);
  }
  return ctx;
}

}  // namespace

TEST_CASE("bt: mix sizes follow the reported kn-ml figures") {
  auto mixed = bt::mix(sized(90974, "r", false), sized(80000, "p", true), 1, 1);
  CHECK(mixed.size() == 170974);
  std::size_t synthetic = 0;
  for (const auto& p : mixed.pairs) synthetic += p.synthetic ? 1 : 0;
  CHECK(synthetic == 80000);
}

TEST_CASE("bt: upsampling repeats the real corpus") {
  auto mixed = bt::mix(sized(10, "r", false), sized(7, "p", true), 3, 2);
  CHECK(mixed.size() == 37);
  std::size_t copies_of_first = 0;
  for (const auto& p : mixed.pairs) copies_of_first += p.source == "r0" ? 1 : 0;
  CHECK(copies_of_first == 3);
  CHECK(bt::mix(sized(10, "r", false), sized(7, "p", true), 3, 2).pairs == mixed.pairs);
  CHECK(bt::mix(sized(10, "r", false), {}, 1, 2).size() == 10);
}

TEST_CASE("bt: mixing corpora of different pairs is an error") {
  auto other = sized(3, "p", true);
  other.tgt_lang = LanguageTag("ta");
  CHECK_THROWS_AS(bt::mix(sized(3, "r", false), other, 1, 1), Error);
}

TEST_CASE("bt: pseudo pairs keep the monolingual sentence on the authentic side") {
  auto ctx = reverse_context();
  auto model = nn::build_model(tiny_config(nn::Arch::lstm), ctx.src_vocab.size(),
                               ctx.tgt_vocab.size(), 1);
  corpus::MonolingualCorpus mono;
  mono.lang = LanguageTag("ml");
  mono.sentences = {"a b c", "d e", "f"};
  auto p = bt::generate_pseudo_parallel(*model, "ck", mono, ctx, {1, 4, 1.0});
  CHECK(p.corpus.src_lang.code() == "kn");
  CHECK(p.corpus.tgt_lang.code() == "ml");
  CHECK(p.corpus.size() + p.dropped_empty == 3);
  for (std::size_t i = 0; i < p.corpus.size(); ++i) {
    CHECK(p.corpus.pairs[i].synthetic);
    CHECK(p.corpus.pairs[i].target == mono.sentences[p.provenance[i].mono_line - 1]);
    CHECK(p.provenance[i].checkpoint == "ck");
  }

  bt::GenerateOptions opts;
  opts.direction = bt::Direction::synthetic_target;
  auto q = bt::generate_pseudo_parallel(*model, "ck", mono, ctx, {1, 4, 1.0}, opts);
  for (std::size_t i = 0; i < q.corpus.size(); ++i) {
    CHECK(q.corpus.pairs[i].source == mono.sentences[q.provenance[i].mono_line - 1]);
  }

  opts.direction = bt::Direction::synthetic_source;
  opts.length_ratio = std::make_pair(100.0, 200.0);
  auto r = bt::generate_pseudo_parallel(*model, "ck", mono, ctx, {1, 4, 1.0}, opts);
  CHECK(r.corpus.size() == 0);
  CHECK(r.filtered + r.dropped_empty == 3);

  mono.lang = LanguageTag("kn");
  CHECK_THROWS_AS(bt::generate_pseudo_parallel(*model, "ck", mono, ctx, {1, 4, 1.0}), Error);
}

TEST_CASE("bt: experiment writes its artifacts") {
  const fs::path dir = fs::temp_directory_path() / "dmt_bt_unit";
  fs::remove_all(dir);
  auto data = cipher_data(1, 20, 8, 30);
  bt::BtExperimentConfig cfg;
  cfg.model = tiny_config(nn::Arch::transformer, 8);
  cfg.reverse_train = train::TrainConfig::defaults_for(nn::Arch::transformer);
  cfg.reverse_train.epochs = 1;
  cfg.reverse_train.batch_size = 8;
  cfg.forward_train = cfg.reverse_train;
  cfg.transliterate = false;
  cfg.bt_decode = {1, 14, 1.0};
  cfg.run_dir = dir.string();
  auto rep = bt::bt_experiment(cfg, data.real, data.dev, data.mono);
  CHECK(rep.pseudo.corpus.size() + rep.pseudo.dropped_empty == 30);
  CHECK(rep.baseline.epochs.size() == 1);
  CHECK(rep.augmented.epochs.size() == 1);
  for (const char* f : {"summary.tsv", "pseudo.src", "pseudo.tgt", "pseudo.prov"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(fs::exists(dir / "reverse" / "best.dmt"));
  CHECK(fs::exists(dir / "augmented" / "best.dmt"));
  fs::remove_all(dir);
}

TEST_CASE("bt: cipher fixture depends on the previous letter") {
  CHECK(cipher("a a") == "g q");
  CHECK(cipher("p a") == "f g");
  CHECK(cipher("i a") == "o g");
}
