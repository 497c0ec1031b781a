#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dmt/textnorm.hpp"

namespace dmt::bleu {

using Tokens = std::vector<std::string>;

enum class Smoothing { none, add_epsilon };

struct BleuConfig {
  int max_n = 4;
  std::vector<double> weights{0.25, 0.25, 0.25, 0.25};
  Smoothing smoothing = Smoothing::none;
  double epsilon = 0.1;  // numerator used for zero counts under add_epsilon

  void validate() const;
};

struct NgramTally {
  std::size_t matches = 0;
  std::size_t total = 0;
};

/// Clipped n-gram matches and the candidate n-gram total (max(0, len - n + 1)).
NgramTally modified_precision(const Tokens& candidate, const std::vector<Tokens>& references,
                              int n);

struct SentenceScore {
  double score = 0.0;
  std::vector<NgramTally> tallies;  // index n-1
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;  // effective (closest, ties -> shorter)
};

SentenceScore sentence_bleu_detail(const Tokens& candidate, const std::vector<Tokens>& references,
                                   const BleuConfig& config = {});
double sentence_bleu(const Tokens& candidate, const std::vector<Tokens>& references,
                     const BleuConfig& config = {});

struct BleuReport {
  std::vector<double> per_sentence;
  double mean = 0.0;
  std::vector<std::vector<NgramTally>> counts;
};

/// Arithmetic mean of sentence scores (not pooled corpus BLEU).
BleuReport corpus_average(const std::vector<double>& scores);

/// Surface preparation applied to each candidate line before whitespace split.
struct ScoringFlags {
  bool undo_bpe = false;
  bool detok = false;
  std::optional<text::Script> detranslit;
};

std::string prepare_surface(const std::string& line, const ScoringFlags& flags);

BleuReport score_lines(const std::vector<std::string>& candidates,
                       const std::vector<std::string>& references, const ScoringFlags& flags = {},
                       const BleuConfig& config = {});

/// Scores two line-aligned files; writes "line<TAB>score" rows followed by
/// the summary line when `report_path` is non-empty.
BleuReport score_files(const std::string& candidate_path, const std::string& reference_path,
                       const ScoringFlags& flags = {}, const std::string& report_path = {},
                       const BleuConfig& config = {});

std::string format_report(const BleuReport& report);
/// "mean_sentence_bleu<TAB>0.1234"
std::string summary_line(const BleuReport& report);

}  // namespace dmt::bleu
