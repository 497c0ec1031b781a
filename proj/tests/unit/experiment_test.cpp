#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "dmt/experiment.hpp"
#include "oracles.hpp"

using namespace dmt;
using namespace dmt::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

exp::RunOptions quiet() { return exp::RunOptions{false}; }

}  // namespace

TEST_CASE("experiment: key-value parsing") {
  auto kv = exp::parse_kv("# comment\n a = 1 \n\nb=x y\n");
  CHECK(kv.size() == 2);
  CHECK(kv["a"] == "1");
  CHECK(kv["b"] == "x y");
  CHECK(exp::parse_kv(exp::format_kv(kv)) == kv);
  CHECK_THROWS_AS(exp::parse_kv("no equals sign\n"), Error);
}

TEST_CASE("experiment: config validation") {
  const auto dir = fresh_dir("dmt_exp_validate");
  const auto path = write_tiny_experiment(dir.string());
  auto cfg = exp::ExperimentConfig::load(path);
  CHECK(cfg.name == "tiny");
  CHECK(cfg.model.transformer.d_model == 8);
  CHECK(fs::path(cfg.train_src).is_absolute());
  cfg.validate();
  CHECK(cfg.system == "transformer");

  auto missing = exp::ExperimentConfig::load(path, {{"test_src", "nowhere.kn"}});
  try {
    missing.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
    CHECK(std::string(e.what()).find("test_src") != std::string::npos);
  }
  CHECK_THROWS_AS(exp::ExperimentConfig::load(path, {{"colour", "blue"}}), Error);
  CHECK_THROWS_AS(exp::ExperimentConfig::load(path, {{"train.seed", "4"}}), Error);
  CHECK_THROWS_AS(exp::ExperimentConfig::load(path, {{"name", "a/b"}}).validate(), Error);
  fs::remove_all(dir);
}

TEST_CASE("experiment: end-to-end run, rerun and reuse of the name") {
  const auto dir = fresh_dir("dmt_exp_run");
  const auto path = write_tiny_experiment(dir.string());
  auto cfg = exp::ExperimentConfig::load(path);
  auto first = exp::run_experiment(cfg, quiet());
  const std::vector<std::string> all{"prep", "bpe", "vocab", "binarize", "train", "decode", "score"};
  CHECK(first.stages_run == all);
  CHECK(first.stages_skipped.empty());
  CHECK(first.test_bleu >= 0.0);
  const fs::path run = first.run_dir;
  for (const char* f : {"config.txt", "manifest.tsv", "results.tsv", "log.txt", "train/best.dmt",
                        "decode/test.hyp", "score/report.tsv"}) {
    CHECK(fs::exists(run / f));
  }
  const std::string manifest = read_file((run / "manifest.tsv").string());
  CHECK(manifest.rfind("tool_version\tdmt", 0) == 0);
  const auto hyp = read_file((run / "decode/test.hyp").string());

  auto second = exp::run_experiment(cfg, quiet());
  CHECK(second.stages_run.empty());
  CHECK(second.stages_skipped == all);
  CHECK(read_file((run / "decode/test.hyp").string()) == hyp);
  CHECK(read_file((run / "manifest.tsv").string()) == manifest);

  // A changed corpus invalidates prep and everything downstream.
  auto lines = read_lines(dir.string() + "/test.kn");
  std::reverse(lines.begin(), lines.end());
  write_lines(dir.string() + "/test.kn", lines);
  auto lines_t = read_lines(dir.string() + "/test.ml");
  std::reverse(lines_t.begin(), lines_t.end());
  write_lines(dir.string() + "/test.ml", lines_t);
  auto third = exp::run_experiment(cfg, quiet());
  CHECK(std::find(third.stages_run.begin(), third.stages_run.end(), "prep") != third.stages_run.end());

  auto other = exp::ExperimentConfig::load(path, {{"seed", "9"}});
  try {
    exp::run_experiment(other, quiet());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_config);
  }

  auto rows = exp::read_results((run / "results.tsv").string());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].system == "transformer");
  CHECK(rows[0].pair == "kn-ml");
  fs::remove_all(dir);
}

TEST_CASE("experiment: back-translation stage") {
  const auto dir = fresh_dir("dmt_exp_bt");
  const auto path = write_tiny_experiment(dir.string(), true);
  auto cfg = exp::ExperimentConfig::load(path, {{"name", "tiny-bt"}, {"system", "transformer+bt"}});
  auto r = exp::run_experiment(cfg, quiet());
  CHECK(std::find(r.stages_run.begin(), r.stages_run.end(), "bt") != r.stages_run.end());
  const fs::path run = r.run_dir;
  CHECK(fs::exists(run / "bt/pseudo.prov"));
  CHECK(read_lines((run / "bin/mix.src").string()).size() >
        read_lines((run / "bin/train.src").string()).size());
  fs::remove_all(dir);
}

TEST_CASE("experiment: a held lock blocks a second run") {
  const auto dir = fresh_dir("dmt_exp_lock");
  exp::RunLock lock(dir.string());
  try {
    exp::RunLock again(dir.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::locked);
  }
  fs::remove_all(dir);
}

TEST_CASE("experiment: results matrix") {
  std::vector<exp::ResultRow> rows{{"lstm", "kn-ml", 0.25}, {"transformer", "kn-ml", 0.5},
                                   {"lstm", "ta-te", 0.125}};
  const auto tsv = exp::format_matrix(rows, false);
  CHECK(tsv.find("system\tkn-ml\tta-te") != std::string::npos);
  CHECK(tsv.find("lstm\t0.2500\t0.1250") != std::string::npos);
  CHECK(tsv.find("transformer\t0.5000\t-") != std::string::npos);
  CHECK(exp::format_matrix(rows, true).find("| system |") != std::string::npos);
}
