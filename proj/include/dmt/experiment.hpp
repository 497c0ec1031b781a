#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmt/corpus.hpp"
#include "dmt/decoding.hpp"
#include "dmt/models.hpp"
#include "dmt/training.hpp"

namespace dmt::exp {

inline constexpr const char* kToolVersion = "dmt 0.1.0";

/// Parses "key = value" lines; '#' starts a comment line.
std::map<std::string, std::string> parse_kv(std::string_view text);
std::string format_kv(const std::map<std::string, std::string>& kv);

/// One end-to-end system on one language pair.
struct ExperimentConfig {
  std::string name;
  corpus::LanguageTag src_lang;
  corpus::LanguageTag tgt_lang;
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string test_src, test_tgt;
  std::string mono;  // target-language monolingual text; required when bt is on

  bool transliterate = true;
  std::size_t bpe_merges = 10000;
  std::int64_t vocab_min_count = 1;

  nn::ModelConfig model;
  train::TrainConfig train;
  decode::DecodeConfig decode{5, 0, 1.0};

  bool bt = false;
  std::size_t bt_upsample_real = 1;
  decode::DecodeConfig bt_decode{1, 0, 1.0};
  train::TrainConfig bt_reverse_train;

  std::string system;  // label in results.tsv; defaults to the arch name
  std::uint64_t seed = 1;
  std::string runs_dir;  // empty: $DMT_RUNS_DIR, else "runs"

  /// Relative paths are resolved against `base_dir`. Unknown keys are errors.
  static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv,
                                  const std::string& base_dir = ".");
  /// Reads a config file; `overrides` win over file entries.
  static ExperimentConfig load(const std::string& path,
                               const std::map<std::string, std::string>& overrides = {});
  std::map<std::string, std::string> to_kv() const;

  /// Checks every field and that the referenced corpora exist.
  void validate() const;
  std::string pair_name() const { return src_lang.code() + "-" + tgt_lang.code(); }
  std::string resolved_runs_dir() const;
};

struct RunSummary {
  std::string run_dir;
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_skipped;
  double test_bleu = 0.0;
};

struct RunOptions {
  bool echo_log = true;  // copy log lines to stderr
};

/// Stage graph: prep, bpe, vocab, binarize, [bt], train, decode, score. Each
/// stage records a stamp with the hash of its inputs and outputs under
/// stages/ and is skipped when the stamp is still valid.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Holds `<dir>/lock` for its lifetime; a second holder gets ErrorKind::locked.
class RunLock {
public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  std::string path_;
};

struct ResultRow {
  std::string system;
  std::string pair;
  double bleu = 0.0;
};

std::vector<ResultRow> read_results(const std::string& path);
/// Systems as rows, pairs as columns; missing cells are "-".
std::string format_matrix(const std::vector<ResultRow>& rows, bool markdown);

}  // namespace dmt::exp
