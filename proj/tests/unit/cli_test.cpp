#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include "dmt/common.hpp"
#include "oracles.hpp"

using namespace dmt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(DMT_CLI) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: help and argument errors") {
  auto help = cli("--help");
  CHECK(help.status == 0);
  CHECK(help.out.find("backtranslate") != std::string::npos);
  CHECK(cli("").status != 0);
  CHECK(cli("score --cand only").status != 0);
  CHECK(cli("--version").out.find("dmt 0.1.0") != std::string::npos);
}

TEST_CASE("cli: identical files score 1") {
  const auto dir = fresh_dir("dmt_cli_score");
  write_lines((dir / "a").string(), {"a b c d e", "x y z w v"});
  auto r = cli("score --cand " + (dir / "a").string() + " --ref " + (dir / "a").string());
  CHECK(r.status == 0);
  CHECK(r.out == "mean_sentence_bleu\t1.0000\n");
  auto bad = cli("score --cand " + (dir / "a").string() + " --ref " + (dir / "none").string());
  CHECK(bad.status == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: text preparation commands") {
  const auto dir = fresh_dir("dmt_cli_prep");
  const std::string in = (dir / "in").string();
  write_lines(in, {"hello,  world."});
  auto tok = cli("prep tokenize --in " + in);
  CHECK(tok.out == "hello , world .\n");
  write_lines(in, {"hello , world ."});
  CHECK(cli("prep detok --in " + in).out == "hello, world.\n");
  write_lines(in, {"ಕ"});
  auto deva = cli("prep translit --script kannada --in " + in);
  CHECK(deva.out == "क\n");
  write_lines(in, {"क"});
  CHECK(cli("prep translit --script kn --reverse --in " + in).out == "ಕ\n");
  fs::remove_all(dir);
}

TEST_CASE("cli: subword, vocabulary, training, translation and scoring pipeline") {
  const auto dir = fresh_dir("dmt_cli_pipe");
  auto p = [&](const char* f) { return (dir / f).string(); };
  auto data = dmt::testing::cipher_data(4, 24, 6, 10);
  std::vector<std::string> src, tgt, dsrc, dtgt;
  for (const auto& x : data.real.pairs) {
    src.push_back(x.source);
    tgt.push_back(x.target);
  }
  for (const auto& x : data.dev.pairs) {
    dsrc.push_back(x.source);
    dtgt.push_back(x.target);
  }
  write_lines(p("train.kn"), src);
  write_lines(p("train.ml"), tgt);
  write_lines(p("dev.kn"), dsrc);
  write_lines(p("dev.ml"), dtgt);

  CHECK(cli("bpe learn --merges 4 --in " + p("train.kn") + " --out " + p("codes")).status == 0);
  for (const char* side : {"train.kn", "train.ml", "dev.kn", "dev.ml"}) {
    CHECK(cli("bpe apply --codes " + p("codes") + " --in " + p(side) + " --out " + p(side) + ".bpe")
              .status == 0);
  }
  CHECK(cli("vocab build --in " + p("train.kn.bpe") + " --out " + p("vocab.kn")).status == 0);
  CHECK(cli("vocab build --in " + p("train.ml.bpe") + " --out " + p("vocab.ml")).status == 0);
  for (const char* side : {"train.kn", "dev.kn"}) {
    CHECK(cli(std::string("binarize --vocab ") + p("vocab.kn") + " --in " + p(side) + ".bpe --out " +
              p(side) + ".ids")
              .status == 0);
  }
  for (const char* side : {"train.ml", "dev.ml"}) {
    CHECK(cli(std::string("binarize --vocab ") + p("vocab.ml") + " --in " + p(side) + ".bpe --out " +
              p(side) + ".ids")
              .status == 0);
  }
  auto tr = cli("train --train-src " + p("train.kn.ids") + " --train-tgt " + p("train.ml.ids") +
                " --dev-src " + p("dev.kn.ids") + " --dev-tgt " + p("dev.ml.ids") + " --vocab-src " +
                p("vocab.kn") + " --vocab-tgt " + p("vocab.ml") +
                " --arch conv --set model.dim=8 --set model.enc_layers=1 --set model.dec_layers=1"
                " --set train.epochs=1 --set train.batch_size=8 --out " + p("run"));
  CHECK(tr.status == 0);
  REQUIRE(fs::exists(dir / "run" / "best.dmt"));
  const std::string pipeline = " --checkpoint " + p("run/best.dmt") + " --bpe-model " + p("codes") +
                               " --vocab-src " + p("vocab.kn") + " --vocab-tgt " + p("vocab.ml") +
                               " --src-lang kn --tgt-lang ml --no-translit --max-len 12";
  auto hyp = cli("translate" + pipeline + " --beam 2 --in " + p("dev.kn") + " --out " + p("hyp"));
  CHECK(hyp.status == 0);
  CHECK(read_lines(p("hyp")).size() == dsrc.size());
  auto sc = cli("score --cand " + p("hyp") + " --ref " + p("dev.ml") + " --report " + p("rep"));
  CHECK(sc.status == 0);
  CHECK(sc.out.rfind("mean_sentence_bleu\t", 0) == 0);

  std::string swapped = pipeline;
  swapped.replace(swapped.find(p("vocab.kn")), p("vocab.kn").size(), p("vocab.ml"));
  auto wrong = cli("translate" + swapped + " --in " + p("dev.kn"));
  CHECK(wrong.status == 1);

  auto stats = cli("stats --src " + p("train.kn") + " --tgt " + p("train.ml") +
                   " --src-lang kn --tgt-lang ml");
  CHECK(stats.out.find("n_pairs\t24") != std::string::npos);
  fs::remove_all(dir);
}
